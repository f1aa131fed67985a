#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "causalreg/harness.hpp"

namespace causalreg {

/// Random-search distributions. Lists are sampled uniformly; weight decay,
/// when swept, is 10^Uniform(lo, hi).
struct SearchSpace {
    std::vector<double> lr{1e-2, 1e-3, 1e-4, 1e-5};
    std::vector<double> lambda{0.1, 1.0, 10.0, 100.0};
    std::vector<double> gamma{1e-2, 1e-4, 1e-6};
    /// Off: trials keep the base weight decay.
    bool sweep_weight_decay = false;
    double log10_weight_decay_lo = -6.0;
    double log10_weight_decay_hi = -2.0;
    /// vrex / irmv1 only.
    std::vector<double> baseline_lambda{0.01, 0.1, 1.0, 10.0, 100.0};
    std::vector<std::size_t> anneal_steps{10, 100, 1000};

    void validate() const;
};

enum class Budget { Full, Reduced };

[[nodiscard]] std::string_view to_string(Budget budget);
[[nodiscard]] Budget parse_budget(std::string_view token);

struct SweepConfig {
    std::size_t n_trials = 20;
    std::vector<std::uint64_t> seeds{0, 1, 2};
    SearchSpace space;
    /// 0 picks std::thread::hardware_concurrency().
    std::size_t workers = 0;

    void validate() const;
};

/// Full: 20 trials x 3 seeds. Reduced: 10 trials x 3 seeds.
[[nodiscard]] SweepConfig sweep_for_budget(Budget budget);

/// Trial `trial` of seed `seed`: dataset seed = seed, training seed derived
/// from (seed, trial), hyperparameters drawn from `space`. A single sampled
/// lambda (and gamma) is shared by every configured attribute.
[[nodiscard]] TrainConfig sample_trial(const TrainConfig& base, const SearchSpace& space, std::uint64_t seed,
                                       std::size_t trial);

/// Runs fn(0..n-1) on up to `workers` threads. fn must only write to
/// per-index state. The first exception (lowest index) is rethrown.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

struct MeanSe {
    double mean = 0.0;
    /// Sample standard deviation (ddof 1) over sqrt(n); 0 when n < 2.
    double se = 0.0;
    std::size_t n = 0;

    friend bool operator==(const MeanSe&, const MeanSe&) = default;
};
[[nodiscard]] MeanSe mean_se(std::span<const double> values);

struct SeedOutcome {
    std::uint64_t seed = 0;
    std::size_t failed_trials = 0;
    /// Index into the seed's trials; empty when every trial failed.
    std::optional<std::size_t> best_trial;
};

struct SweepReport {
    /// Seed-major, trial-minor.
    std::vector<TrialResult> trials;
    std::vector<SeedOutcome> seeds;
    MeanSe train;
    MeanSe val;
    MeanSe test;
    std::size_t failed_trials = 0;
    std::size_t excluded_seeds = 0;

    [[nodiscard]] const TrialResult& selected(std::size_t seed_index) const;
};

/// Highest validation accuracy wins; ties go to the lowest trial index.
/// Failed trials are never selected.
[[nodiscard]] std::optional<std::size_t> select_best(std::span<const TrialResult> trials);

/// Aggregates already-finished trials (n_trials per seed, seed-major).
[[nodiscard]] SweepReport aggregate(std::vector<TrialResult> trials, std::span<const std::uint64_t> seeds,
                                    std::size_t n_trials);

[[nodiscard]] SweepReport sweep(const SweepConfig& sweep, const TrainConfig& base);

/// Deterministic summary (no timing, no per-trial data).
[[nodiscard]] nlohmann::json summary_json(const SweepReport& report);

}  // namespace causalreg
