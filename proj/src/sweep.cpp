#include "causalreg/sweep.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <thread>

#include "causalreg/errors.hpp"
#include "causalreg/rng.hpp"

namespace causalreg {

namespace {

enum : std::uint64_t { kTrialSeed = 201, kHyperparams = 202 };

template <typename T>
const T& pick(Rng& rng, const std::vector<T>& values) {
    return values[rng.index(values.size())];
}

}  // namespace

void SearchSpace::validate() const {
    if (lr.empty() || lambda.empty() || gamma.empty() || baseline_lambda.empty() || anneal_steps.empty()) {
        throw ValidationError("search space lists must be non-empty");
    }
    if (!(log10_weight_decay_lo <= log10_weight_decay_hi)) {
        throw ValidationError("weight decay range is empty");
    }
}

std::string_view to_string(Budget budget) { return budget == Budget::Full ? "full" : "reduced"; }

Budget parse_budget(std::string_view token) {
    if (token == "full") return Budget::Full;
    if (token == "reduced") return Budget::Reduced;
    throw ValidationError("unknown budget: " + std::string(token));
}

void SweepConfig::validate() const {
    if (n_trials == 0) throw ValidationError("n_trials must be >= 1");
    if (seeds.empty()) throw ValidationError("seed list must be non-empty");
    space.validate();
}

SweepConfig sweep_for_budget(Budget budget) {
    SweepConfig cfg;
    cfg.n_trials = budget == Budget::Full ? 20 : 10;
    return cfg;
}

TrainConfig sample_trial(const TrainConfig& base, const SearchSpace& space, std::uint64_t seed, std::size_t trial) {
    TrainConfig cfg = base;
    cfg.dataset.seed = seed;
    cfg.seed = derive_seed(seed, {kTrialSeed, trial});
    Rng rng(seed, {kHyperparams, trial});
    cfg.lr = pick(rng, space.lr);
    const double log_wd = rng.uniform(space.log10_weight_decay_lo, space.log10_weight_decay_hi);
    if (space.sweep_weight_decay) {
        cfg.weight_decay = std::pow(10.0, log_wd);
    }
    const double lambda = pick(rng, space.lambda);
    const double gamma = pick(rng, space.gamma);
    for (auto& ap : cfg.penalty.cacm) {
        ap.lambda = lambda;
        if (ap.kernel.kind == KernelKind::Rbf) {
            ap.kernel.gamma = gamma;
        }
    }
    switch (cfg.penalty.baseline) {
        case BaselineKind::MmdUncond:
        case BaselineKind::MmdCondY:
            cfg.penalty.baseline_lambda = lambda;
            cfg.penalty.baseline_kernel.gamma = gamma;
            break;
        case BaselineKind::Vrex:
        case BaselineKind::Irmv1:
            cfg.penalty.baseline_lambda = pick(rng, space.baseline_lambda);
            cfg.penalty.anneal_steps = pick(rng, space.anneal_steps);
            break;
        case BaselineKind::None:
        case BaselineKind::Erm:
            break;
    }
    return cfg;
}

void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
    if (workers == 0) {
        workers = std::max(1u, std::thread::hardware_concurrency());
    }
    workers = std::min(workers, n);
    std::vector<std::exception_ptr> errors(n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) {
            fn(i);
        }
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) {
        t.join();
    }
    for (const auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
}

MeanSe mean_se(std::span<const double> values) {
    MeanSe out;
    out.n = values.size();
    if (values.empty()) {
        return out;
    }
    double sum = 0.0;
    for (double v : values) sum += v;
    out.mean = sum / static_cast<double>(out.n);
    if (out.n > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - out.mean) * (v - out.mean);
        out.se = std::sqrt(ss / static_cast<double>(out.n - 1)) / std::sqrt(static_cast<double>(out.n));
    }
    return out;
}

const TrialResult& SweepReport::selected(std::size_t seed_index) const {
    const auto& s = seeds.at(seed_index);
    if (!s.best_trial) {
        throw LookupError("seed " + std::to_string(s.seed) + " has no successful trial");
    }
    const std::size_t per_seed = trials.size() / seeds.size();
    return trials.at(seed_index * per_seed + *s.best_trial);
}

std::optional<std::size_t> select_best(std::span<const TrialResult> trials) {
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < trials.size(); ++i) {
        if (trials[i].failed) {
            continue;
        }
        if (!best || trials[i].val.accuracy > trials[*best].val.accuracy) {
            best = i;
        }
    }
    return best;
}

SweepReport aggregate(std::vector<TrialResult> trials, std::span<const std::uint64_t> seeds, std::size_t n_trials) {
    if (trials.size() != seeds.size() * n_trials) {
        throw ValidationError("trial count does not match seeds x n_trials");
    }
    SweepReport report;
    report.trials = std::move(trials);
    std::vector<double> train_acc, val_acc, test_acc;
    for (std::size_t s = 0; s < seeds.size(); ++s) {
        const std::span<const TrialResult> block(report.trials.data() + s * n_trials, n_trials);
        SeedOutcome out;
        out.seed = seeds[s];
        out.failed_trials = static_cast<std::size_t>(
            std::count_if(block.begin(), block.end(), [](const TrialResult& r) { return r.failed; }));
        out.best_trial = select_best(block);
        report.failed_trials += out.failed_trials;
        if (out.best_trial) {
            const TrialResult& r = block[*out.best_trial];
            train_acc.push_back(r.train.accuracy);
            val_acc.push_back(r.val.accuracy);
            test_acc.push_back(r.test.accuracy);
        } else {
            ++report.excluded_seeds;
        }
        report.seeds.push_back(out);
    }
    report.train = mean_se(train_acc);
    report.val = mean_se(val_acc);
    report.test = mean_se(test_acc);
    return report;
}

SweepReport sweep(const SweepConfig& sweep, const TrainConfig& base) {
    sweep.validate();
    base.validate();
    const std::size_t n_seeds = sweep.seeds.size();

    std::vector<TrialData> data(n_seeds);
    parallel_for(n_seeds, sweep.workers, [&](std::size_t s) {
        TrainConfig cfg = base;
        cfg.dataset.seed = sweep.seeds[s];
        data[s] = prepare_data(cfg);
    });

    std::vector<TrialResult> trials(n_seeds * sweep.n_trials);
    parallel_for(trials.size(), sweep.workers, [&](std::size_t i) {
        const std::size_t s = i / sweep.n_trials;
        const std::size_t t = i % sweep.n_trials;
        trials[i] = train(sample_trial(base, sweep.space, sweep.seeds[s], t), data[s]);
    });
    return aggregate(std::move(trials), sweep.seeds, sweep.n_trials);
}

nlohmann::json summary_json(const SweepReport& report) {
    const auto ms = [](const MeanSe& m) { return nlohmann::json{{"mean", m.mean}, {"se", m.se}, {"n", m.n}}; };
    nlohmann::json seeds = nlohmann::json::array();
    for (std::size_t s = 0; s < report.seeds.size(); ++s) {
        const auto& so = report.seeds[s];
        nlohmann::json j{{"seed", so.seed}, {"failed_trials", so.failed_trials}};
        if (so.best_trial) {
            const TrialResult& r = report.selected(s);
            j["best_trial"] = *so.best_trial;
            j["lr"] = r.config.lr;
            j["train"] = r.train.accuracy;
            j["val"] = r.val.accuracy;
            j["test"] = r.test.accuracy;
        } else {
            j["excluded"] = true;
        }
        seeds.push_back(std::move(j));
    }
    return {{"train", ms(report.train)},
            {"val", ms(report.val)},
            {"test", ms(report.test)},
            {"failed_trials", report.failed_trials},
            {"excluded_seeds", report.excluded_seeds},
            {"seeds", std::move(seeds)}};
}

}  // namespace causalreg
