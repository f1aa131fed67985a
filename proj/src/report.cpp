#include "causalreg/report.hpp"

#include <istream>
#include <map>
#include <optional>
#include <sstream>

#include <nlohmann/json.hpp>

#include "causalreg/errors.hpp"
#include "causalreg/experiments.hpp"

namespace causalreg {

namespace {

struct Record {
    bool failed = false;
    double train = 0.0;
    double val = 0.0;
    double test = 0.0;
};

std::string method_of(const nlohmann::json& penalty) {
    std::string out;
    for (const auto& c : penalty.at("cacm")) {
        if (!out.empty()) out += ';';
        out += c.at("constraint").get<std::string>();
    }
    if (out.empty()) {
        const auto baseline = penalty.at("baseline").get<std::string>();
        out = baseline == "none" ? "erm" : baseline;
    }
    return out;
}

std::string pct(const MeanSe& m) { return fixed(100.0 * m.mean, 1) + " ± " + fixed(100.0 * m.se, 1); }

}  // namespace

std::vector<ReportGroup> summarize_results(std::istream& jsonl) {
    struct Pending {
        ReportGroup group;
        std::map<std::uint64_t, std::optional<Record>> best_per_seed;
    };
    std::vector<Pending> pending;
    std::map<std::pair<std::string, std::string>, std::size_t> index;

    std::string line;
    std::size_t n = 0;
    while (std::getline(jsonl, line)) {
        ++n;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::string shift, method;
        std::uint64_t seed = 0;
        Record r;
        try {
            const auto j = nlohmann::json::parse(line);
            const auto& cfg = j.at("config");
            shift = cfg.at("dataset").at("shift").get<std::string>();
            seed = cfg.at("dataset").at("seed").get<std::uint64_t>();
            method = method_of(cfg.at("penalty"));
            r.failed = j.at("failed").get<bool>();
            r.train = j.at("train").at("accuracy").get<double>();
            r.val = j.at("val").at("accuracy").get<double>();
            r.test = j.at("test").at("accuracy").get<double>();
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(n, std::string("bad trial record: ") + e.what());
        }
        const auto key = std::make_pair(shift, method);
        auto it = index.find(key);
        if (it == index.end()) {
            it = index.emplace(key, pending.size()).first;
            ReportGroup g;
            g.shift = shift;
            g.method = method;
            pending.push_back({std::move(g), {}});
        }
        Pending& p = pending[it->second];
        ++p.group.trials;
        auto& best = p.best_per_seed[seed];
        if (r.failed) {
            ++p.group.failed_trials;
        } else if (!best || r.val > best->val) {
            best = r;
        }
    }
    if (pending.empty()) {
        throw ValidationError("no trials");
    }

    std::vector<ReportGroup> out;
    for (auto& p : pending) {
        std::vector<double> train, val, test;
        for (const auto& [seed, best] : p.best_per_seed) {
            if (!best) {
                ++p.group.excluded_seeds;
                continue;
            }
            train.push_back(best->train);
            val.push_back(best->val);
            test.push_back(best->test);
        }
        p.group.train = mean_se(train);
        p.group.val = mean_se(val);
        p.group.test = mean_se(test);
        out.push_back(std::move(p.group));
    }
    return out;
}

std::string report_markdown(const std::vector<ReportGroup>& groups) {
    std::ostringstream out;
    out << "| shift | method | train acc | test acc | seeds | failed trials |\n";
    out << "|---|---|---|---|---|---|\n";
    for (const auto& g : groups) {
        out << "| " << g.shift << " | " << markdown_cell(g.method) << " | " << pct(g.train) << " | " << pct(g.test) << " | "
            << g.test.n << " | " << g.failed_trials << " |\n";
    }
    return out.str();
}

std::string report_csv(const std::vector<ReportGroup>& groups) {
    std::ostringstream out;
    out << "shift,method,train_mean,train_se,test_mean,test_se,n_seeds,trials,failed_trials,excluded_seeds\n";
    for (const auto& g : groups) {
        out << g.shift << ",\"" << g.method << "\"," << fixed(g.train.mean, 6) << ',' << fixed(g.train.se, 6) << ','
            << fixed(g.test.mean, 6) << ',' << fixed(g.test.se, 6) << ',' << g.test.n << ',' << g.trials << ','
            << g.failed_trials << ',' << g.excluded_seeds << '\n';
    }
    return out.str();
}

}  // namespace causalreg
