#include "causalreg/config.hpp"

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "causalreg/errors.hpp"
#include "causalreg/experiments.hpp"
#include "causalreg/graph_io.hpp"

namespace causalreg {

namespace {

constexpr std::string_view kAuto = "auto";

std::string trim(std::string_view s) {
    const auto* b = s.begin();
    const auto* e = s.end();
    while (b != e && std::isspace(static_cast<unsigned char>(*b))) ++b;
    while (e != b && std::isspace(static_cast<unsigned char>(*(e - 1)))) --e;
    return {b, e};
}

std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    if (trim(s).empty()) {
        return out;
    }
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(sep, start);
        out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

/// Typed access to one section with key-qualified error messages.
class Section {
public:
    Section(const ConfigValues& values, std::string name) : name_(std::move(name)) {
        const auto& schema = config_schema().at(name_);
        entries_ = schema;
        if (const auto it = values.find(name_); it != values.end()) {
            for (const auto& [k, v] : it->second) entries_[k] = v;
        }
    }

    [[nodiscard]] const std::string& raw(const std::string& key) const { return entries_.at(key); }
    [[nodiscard]] bool is_auto(const std::string& key) const { return raw(key) == kAuto; }

    [[nodiscard]] double real(const std::string& key) const { return parse_real(key, raw(key)); }

    [[nodiscard]] std::uint64_t count(const std::string& key) const { return parse_count(key, raw(key)); }

    [[nodiscard]] bool flag(const std::string& key) const {
        const auto& v = raw(key);
        if (v == "true" || v == "1" || v == "yes") return true;
        if (v == "false" || v == "0" || v == "no") return false;
        fail(key, "expected a boolean, got '" + v + "'");
    }

    [[nodiscard]] std::vector<double> reals(const std::string& key) const {
        std::vector<double> out;
        for (const auto& t : split(raw(key), ',')) out.push_back(parse_real(key, t));
        return out;
    }

    [[nodiscard]] std::vector<std::uint64_t> counts(const std::string& key) const {
        std::vector<std::uint64_t> out;
        for (const auto& t : split(raw(key), ',')) out.push_back(parse_count(key, t));
        return out;
    }

    /// Runs `parse` on the value, rethrowing its error under the key.
    template <typename F>
    auto parsed(const std::string& key, F&& parse) const {
        try {
            return parse(raw(key));
        } catch (const std::exception& e) {
            fail(key, e.what());
        }
    }

    [[noreturn]] void fail(const std::string& key, const std::string& what) const {
        throw ValidationError(name_ + "." + key + ": " + what);
    }

private:
    double parse_real(const std::string& key, const std::string& text) const {
        errno = 0;
        char* end = nullptr;
        const double v = std::strtod(text.c_str(), &end);
        if (text.empty() || end != text.c_str() + text.size() || errno == ERANGE) {
            fail(key, "expected a number, got '" + text + "'");
        }
        return v;
    }

    std::uint64_t parse_count(const std::string& key, const std::string& text) const {
        errno = 0;
        char* end = nullptr;
        const auto v = std::strtoull(text.c_str(), &end, 10);
        if (text.empty() || text[0] == '-' || end != text.c_str() + text.size() || errno == ERANGE) {
            fail(key, "expected a non-negative integer, got '" + text + "'");
        }
        return v;
    }

    std::string name_;
    std::map<std::string, std::string> entries_;
};

std::vector<ShiftType> parse_shifts(const std::string& text) {
    std::vector<ShiftType> out;
    for (const auto& t : split(text, ',')) out.push_back(parse_shift_type(t));
    return out;
}

void build_dataset(const Section& s, SlabDatasetSpec& spec) {
    const auto rows = s.count("rows_per_env");
    spec.seed = s.count("seed");
    if (!s.is_auto("label_noise")) spec.label_noise = s.real("label_noise");
    if (!s.is_auto("noise_order")) {
        spec.noise_order = s.parsed("noise_order", [](const std::string& v) {
            if (v == "before") return NoiseOrder::BeforeMechanism;
            if (v == "after") return NoiseOrder::AfterMechanism;
            throw ValidationError("expected 'before' or 'after', got '" + v + "'");
        });
    }
    spec.confound_shift_prob = s.real("confound_shift_prob");

    std::vector<double> train_p, test_p;
    for (const auto& e : spec.environments) {
        (e.role == EnvRole::Train ? train_p : test_p).push_back(e.p);
    }
    if (!s.is_auto("train_p")) train_p = s.reals("train_p");
    if (!s.is_auto("test_p")) test_p = s.reals("test_p");
    const std::optional<double> train_c =
        s.is_auto("train_confounder_p") ? std::nullopt : std::optional<double>(s.real("train_confounder_p"));
    const std::optional<double> test_c =
        s.is_auto("test_confounder_p") ? std::nullopt : std::optional<double>(s.real("test_confounder_p"));
    spec.environments.clear();
    int id = 0;
    for (double p : train_p) spec.environments.push_back({id++, p, rows, EnvRole::Train, train_c});
    for (double p : test_p) spec.environments.push_back({id++, p, rows, EnvRole::Test, test_c});

    if (s.flag("extra_ind_attr")) {
        IndependentAttrSpec extra;
        extra.name = s.raw("extra_ind_name");
        extra.value_count = static_cast<int>(s.count("extra_ind_values"));
        extra.leak = s.real("extra_ind_leak");
        spec.extra_ind_attr = extra;
    }
    try {
        spec.validate();
    } catch (const ValidationError& e) {
        throw ValidationError(std::string("dataset: ") + e.what());
    }
}

void build_model(const Section& s, TrainConfig& cfg) {
    cfg.hidden.clear();
    for (auto h : s.counts("hidden")) cfg.hidden.push_back(h);
    cfg.steps = s.count("steps");
    cfg.batch_per_env = s.count("batch_per_env");
    cfg.lr = s.real("lr");
    cfg.weight_decay = s.real("weight_decay");
    cfg.dropout = s.real("dropout");
    cfg.seed = s.count("seed");
    cfg.selection = s.parsed("selection", [](const std::string& v) { return parse_selection_mode(v); });
    cfg.penalty_target = s.parsed("penalty_target", [](const std::string& v) {
        if (v == "logits") return PenaltyTarget::Logits;
        if (v == "representation") return PenaltyTarget::Representation;
        throw ValidationError("expected 'logits' or 'representation', got '" + v + "'");
    });
    cfg.val_fraction = s.real("val_fraction");
    cfg.trace_interval = s.count("trace_interval");
}

void build_penalty(const Section& s, PenaltyConfig& p) {
    KernelConfig kernel{s.parsed("kernel", [](const std::string& v) { return parse_kernel_kind(v); }), s.real("gamma")};
    const double lambda = s.real("lambda");
    p.cacm.clear();
    for (const auto& t : split(s.raw("constraints"), ';')) {
        const auto c = s.parsed("constraints", [&](const std::string&) { return parse_penalty_constraint(t); });
        p.cacm.push_back({c, kernel, lambda});
    }
    if (const auto& graph = s.raw("graph"); !graph.empty()) {
        const auto set = s.parsed("graph", [](const std::string& path) { return derive_constraints(load_graph_or_spec(path)); });
        for (const auto& [attr, c] : set.selected) {
            p.cacm.push_back({to_penalty_constraint(set, c), kernel, lambda});
        }
    }
    p.normalize_pairs = s.flag("normalize_pairs");
    p.baseline = s.parsed("baseline", [](const std::string& v) { return parse_baseline_kind(v); });
    p.baseline_lambda = s.real("baseline_lambda");
    p.baseline_kernel = {s.parsed("baseline_kernel", [](const std::string& v) { return parse_kernel_kind(v); }),
                         s.real("baseline_gamma")};
    p.anneal_steps = s.count("anneal_steps");
}

void build_sweep(const Section& s, SweepConfig& sw) {
    sw.n_trials = s.count("trials");
    sw.seeds = s.counts("seeds");
    sw.workers = s.count("workers");
    sw.space.lr = s.reals("lr");
    sw.space.lambda = s.reals("lambda");
    sw.space.gamma = s.reals("gamma");
    sw.space.sweep_weight_decay = s.flag("sweep_weight_decay");
    sw.space.log10_weight_decay_lo = s.real("log10_weight_decay_lo");
    sw.space.log10_weight_decay_hi = s.real("log10_weight_decay_hi");
    sw.space.baseline_lambda = s.reals("baseline_lambda");
    sw.space.anneal_steps.clear();
    for (auto a : s.counts("anneal_steps")) sw.space.anneal_steps.push_back(a);
}

}  // namespace

const ConfigValues& config_schema() {
    static const ConfigValues schema{
        {"dataset",
         {{"shift", "causal"},
          {"rows_per_env", "2000"},
          {"seed", "0"},
          {"label_noise", "auto"},
          {"noise_order", "auto"},
          {"train_p", "auto"},
          {"test_p", "auto"},
          {"confound_shift_prob", "0.9"},
          {"train_confounder_p", "auto"},
          {"test_confounder_p", "auto"},
          {"extra_ind_attr", "false"},
          {"extra_ind_name", "a_ind"},
          {"extra_ind_values", "3"},
          {"extra_ind_leak", "0.1"}}},
        {"model",
         {{"hidden", "64,64"},
          {"steps", "2000"},
          {"batch_per_env", "128"},
          {"lr", "0.001"},
          {"weight_decay", "0"},
          {"dropout", "0"},
          {"seed", "0"},
          {"selection", "test_domain_validation"},
          {"penalty_target", "representation"},
          {"val_fraction", "0.1"},
          {"trace_interval", "100"}}},
        {"penalty",
         {{"constraints", ""},
          {"graph", ""},
          {"kernel", "l2_mean_diff"},
          {"gamma", "1"},
          {"lambda", "1"},
          {"normalize_pairs", "false"},
          {"baseline", "none"},
          {"baseline_lambda", "1"},
          {"baseline_kernel", "rbf"},
          {"baseline_gamma", "1"},
          {"anneal_steps", "0"}}},
        {"sweep",
         {{"trials", "20"},
          {"seeds", "0,1,2"},
          {"workers", "0"},
          {"lr", "0.01,0.001,0.0001,0.00001"},
          {"lambda", "0.1,1,10,100"},
          {"gamma", "0.01,0.0001,0.000001"},
          {"sweep_weight_decay", "false"},
          {"log10_weight_decay_lo", "-6"},
          {"log10_weight_decay_hi", "-2"},
          {"baseline_lambda", "0.01,0.1,1,10,100"},
          {"anneal_steps", "10,100,1000"}}},
        {"experiment", {{"shifts", "causal,selected,confounded"}, {"lambdas", "1,10,100"}, {"lambda_shift", "causal"}}},
    };
    return schema;
}

ConfigValues parse_config(std::istream& in) {
    ConfigValues values;
    std::string line;
    std::string section;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (const auto hash = line.find('#'); hash != std::string::npos) {
            line.erase(hash);
        }
        const std::string text = trim(line);
        if (text.empty()) continue;
        if (text.front() == '[') {
            if (text.back() != ']') throw ParseError(n, "unterminated section header '" + text + "'");
            section = trim(std::string_view(text).substr(1, text.size() - 2));
            if (!config_schema().contains(section)) throw ParseError(n, "unknown section [" + section + "]");
            continue;
        }
        const auto eq = text.find('=');
        if (eq == std::string::npos) throw ParseError(n, "expected key = value, got '" + text + "'");
        const std::string key = trim(std::string_view(text).substr(0, eq));
        if (section.empty()) throw ParseError(n, "key '" + key + "' appears before any section");
        if (!config_schema().at(section).contains(key)) throw ParseError(n, "unknown key " + section + "." + key);
        if (values[section].contains(key)) throw ParseError(n, "duplicate key " + section + "." + key);
        values[section][key] = trim(std::string_view(text).substr(eq + 1));
    }
    return values;
}

ConfigValues load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(0, "cannot open config file " + path.string());
    return parse_config(in);
}

void set_config_value(ConfigValues& values, std::string_view dotted_key, std::string value) {
    const auto dot = dotted_key.find('.');
    if (dot == std::string_view::npos) throw ValidationError("override key must be section.key: " + std::string(dotted_key));
    const std::string section(dotted_key.substr(0, dot));
    const std::string key(dotted_key.substr(dot + 1));
    const auto it = config_schema().find(section);
    if (it == config_schema().end() || !it->second.contains(key)) {
        throw ValidationError("unknown key " + std::string(dotted_key));
    }
    values[section][key] = trim(value);
}

void apply_override(ConfigValues& values, std::string_view assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos) throw ValidationError("override must be section.key=value: " + std::string(assignment));
    set_config_value(values, trim(assignment.substr(0, eq)), std::string(assignment.substr(eq + 1)));
}

std::string env_var_name(std::string_view section, std::string_view key) {
    std::string out = "CAUSALREG_";
    for (char c : section) out += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    out += '_';
    for (char c : key) out += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return out;
}

void apply_env_overrides(ConfigValues& values, const EnvLookup& lookup) {
    for (const auto& [section, keys] : config_schema()) {
        for (const auto& [key, def] : keys) {
            if (auto v = lookup(env_var_name(section, key))) {
                values[section][key] = trim(*v);
            }
        }
    }
}

EnvLookup process_env() {
    return [](const std::string& name) -> std::optional<std::string> {
        if (const char* v = std::getenv(name.c_str())) return std::string(v);
        return std::nullopt;
    };
}

std::string canonical_text(const ConfigValues& values) {
    std::ostringstream out;
    for (const auto& [section, keys] : config_schema()) {
        out << '[' << section << "]\n";
        const auto given = values.find(section);
        for (const auto& [key, def] : keys) {
            const std::string* v = &def;
            if (given != values.end()) {
                if (const auto it = given->second.find(key); it != given->second.end()) v = &it->second;
            }
            out << key << " = " << *v << '\n';
        }
    }
    return out.str();
}

std::string config_hash(const ConfigValues& values) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : canonical_text(values)) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

RunConfig build_run_config(const ConfigValues& values, std::optional<ShiftType> shift) {
    const Section dataset(values, "dataset");
    const Section model(values, "model");
    const Section penalty(values, "penalty");
    const Section sweep(values, "sweep");
    const Section experiment(values, "experiment");

    const ShiftType s = shift ? *shift : dataset.parsed("shift", [](const std::string& v) { return parse_shift_type(v); });
    RunConfig run;
    run.train = dataset.parsed("shift", [&](const std::string&) {
        return slab_train_config(s, dataset.count("rows_per_env"));
    });
    build_dataset(dataset, run.train.dataset);
    build_model(model, run.train);
    build_penalty(penalty, run.train.penalty);
    const KernelKind kind = penalty.parsed("kernel", [](const std::string& v) { return parse_kernel_kind(v); });
    run.experiment.kernel = penalty.parsed("gamma", [&](const std::string&) {
        const KernelConfig k{kind, penalty.real("gamma")};
        k.validate();
        return k;
    });
    build_sweep(sweep, run.sweep);
    run.experiment.shifts = experiment.parsed("shifts", parse_shifts);
    run.experiment.lambdas = experiment.reals("lambdas");
    run.experiment.lambda_shift =
        experiment.parsed("lambda_shift", [](const std::string& v) { return parse_shift_type(v); });

    try {
        run.train.validate();
    } catch (const ValidationError& e) {
        throw ValidationError(std::string("config: ") + e.what());
    }
    try {
        run.sweep.validate();
    } catch (const ValidationError& e) {
        throw ValidationError(std::string("sweep: ") + e.what());
    }
    return run;
}

}  // namespace causalreg
