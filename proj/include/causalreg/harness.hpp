#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "causalreg/metrics.hpp"
#include "causalreg/mlp.hpp"
#include "causalreg/penalties.hpp"
#include "causalreg/synthdata.hpp"

namespace causalreg {

enum class SelectionMode { TestDomainValidation, TrainDomainValidation };

[[nodiscard]] std::string_view to_string(SelectionMode mode);
[[nodiscard]] SelectionMode parse_selection_mode(std::string_view token);

struct TrainConfig {
    SlabDatasetSpec dataset;
    PenaltyConfig penalty;
    std::size_t steps = 2000;
    std::size_t batch_per_env = 128;
    double lr = 1e-3;
    double weight_decay = 0.0;
    /// Only 0 is supported (the MLP has no dropout layers).
    double dropout = 0.0;
    /// Drives parameter init and minibatch sampling. The dataset has its own
    /// seed in `dataset`.
    std::uint64_t seed = 0;
    SelectionMode selection = SelectionMode::TestDomainValidation;
    std::vector<std::size_t> hidden{64, 64};
    PenaltyTarget penalty_target = PenaltyTarget::Logits;
    /// Held-out fraction of every environment.
    double val_fraction = 0.1;
    std::size_t trace_interval = 100;

    void validate() const;
};

/// Environment-level splits used by one trial.
struct TrialData {
    TabularDataset fit;       // training rows of the train environments
    TabularDataset train_val; // held-out rows of the train environments
    TabularDataset test_val;  // held-out rows of the test environments
    TabularDataset test;      // remaining rows of the test environments
    std::string attribute;    // grouping column for worst-group accuracy
};

/// Generates config.dataset and splits it per environment role.
[[nodiscard]] TrialData prepare_data(const TrainConfig& config);
[[nodiscard]] TrialData prepare_data(const TrainConfig& config, const TabularDataset& ds);

struct TrialResult {
    TrainConfig config;
    bool failed = false;
    std::optional<std::size_t> failed_step;
    std::string failure;
    EvalMetrics train;  // fit rows
    EvalMetrics val;    // split chosen by config.selection
    EvalMetrics test;   // test rows
    /// Unweighted penalty at steps 0, interval, 2 * interval, ...
    std::vector<double> penalty_trace;
    std::size_t pairs_skipped = 0;
    double wall_seconds = 0.0;
};

[[nodiscard]] TrialResult train(const TrainConfig& config);
/// Same as train(config) when `data` is prepare_data(config).
[[nodiscard]] TrialResult train(const TrainConfig& config, const TrialData& data, MlpParams* final_params = nullptr);

/// Design matrix, labels and batch metadata for a whole dataset.
struct DatasetView {
    Matrix x;
    std::vector<int> y;
    BatchMeta meta;
};
[[nodiscard]] DatasetView view_of(const TabularDataset& ds);

[[nodiscard]] EvalMetrics evaluate(const MlpParams& params, const TabularDataset& ds, const std::string& attribute);

[[nodiscard]] nlohmann::json to_json(const SlabDatasetSpec& spec);
[[nodiscard]] nlohmann::json to_json(const PenaltyConfig& config);
[[nodiscard]] nlohmann::json to_json(const TrainConfig& config);
[[nodiscard]] nlohmann::json to_json(const EvalMetrics& m);
/// Wall time is included only when `with_timing` is set.
[[nodiscard]] nlohmann::json to_json(const TrialResult& r, bool with_timing = true);

}  // namespace causalreg
