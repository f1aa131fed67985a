#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "causalreg/causal_graph.hpp"

namespace causalreg {

enum class EnvRole { Train, Test };

struct EnvironmentSpec {
    int env_id = 0;
    /// Shift-specific probability (attribute branch, or selection branch).
    double p = 0.0;
    std::size_t n_samples = 0;
    EnvRole role = EnvRole::Train;
    /// Confounded slab only: P(c = 1). Defaults to 0.25 for train and 0.75
    /// for test environments.
    std::optional<double> confounder_p;
};

/// Where label noise enters relative to the attribute (causal slab) or the
/// selection step (selected slab).
enum class NoiseOrder { BeforeMechanism, AfterMechanism };

/// Extra attribute independent of the label within every environment.
struct IndependentAttrSpec {
    std::string name = "a_ind";
    /// Number of attribute values; the majority value in environment k is
    /// k mod value_count.
    int value_count = 3;
    /// Probability of drawing uniformly among the non-majority values.
    double leak = 0.1;
};

struct SlabDatasetSpec {
    ShiftType shift = ShiftType::Causal;
    std::vector<EnvironmentSpec> environments;
    double label_noise = 0.1;
    std::uint64_t seed = 0;
    NoiseOrder noise_order = NoiseOrder::BeforeMechanism;
    /// Confounded slab: probability that a train label is y_true + c.
    double confound_shift_prob = 0.9;
    std::optional<IndependentAttrSpec> extra_ind_attr;

    /// At least two train and one test environment, probabilities in range,
    /// non-empty environments, unique env ids.
    void validate() const;
    [[nodiscard]] std::vector<int> env_ids(EnvRole role) const;
};

/// Environment layout, noise level and noise order used for the slab
/// experiments: causal p = (0.9, 1.0 | 0.0), confounded p = (1.0, 0.9 | 0.8),
/// selected p = (0.9, 1.0 | 0.0).
[[nodiscard]] SlabDatasetSpec default_slab_spec(ShiftType shift, std::uint64_t seed = 0,
                                                std::size_t rows_per_env = 2000);

/// Attribute column name produced by each slab generator.
[[nodiscard]] std::string slab_attribute_name(ShiftType shift);

struct Row {
    std::vector<double> x;
    std::map<std::string, int> attrs;
    int y = 0;

    friend bool operator==(const Row&, const Row&) = default;
};

struct Environment {
    int env_id = 0;
    std::vector<Row> rows;

    friend bool operator==(const Environment&, const Environment&) = default;
};

struct TabularDataset {
    std::vector<Environment> environments;
    int n_classes = 0;
    std::size_t feature_dim = 0;

    /// Shared feature_dim, labels in range, same attribute names everywhere.
    void validate() const;
    [[nodiscard]] const Environment& env(int env_id) const;
    [[nodiscard]] std::vector<std::string> attribute_names() const;
    [[nodiscard]] std::size_t total_rows() const;

    friend bool operator==(const TabularDataset&, const TabularDataset&) = default;
};

/// Latent per-row values the generators discard, for diagnostics and tests.
/// Indexed [environment position][row].
struct SlabTrace {
    std::vector<std::vector<int>> y_true;
    std::vector<std::vector<int>> confounder;
};

/// Index of the equal-width slab containing xc in [0, 1]; 1.0 maps to the last.
[[nodiscard]] int slab_bucket(double xc, int n_slabs);
/// y on the majority branch, |y - 1| otherwise.
[[nodiscard]] int causal_attribute(int y, bool majority_branch);
/// S = 1 iff a + y = 4 on the p branch, a - y = 1 on the 1 - p branch.
[[nodiscard]] bool selection_accepts(int y_true, int a_sel, bool p_branch);

[[nodiscard]] TabularDataset gen_causal_slab(const SlabDatasetSpec& spec, SlabTrace* trace = nullptr);
[[nodiscard]] TabularDataset gen_confounded_slab(const SlabDatasetSpec& spec, SlabTrace* trace = nullptr);
[[nodiscard]] TabularDataset gen_selected_slab(const SlabDatasetSpec& spec, SlabTrace* trace = nullptr);
/// Base generator for spec.shift, plus the independent attribute appended
/// as the last feature dimension.
[[nodiscard]] TabularDataset gen_multiattr_slab(const SlabDatasetSpec& spec, SlabTrace* trace = nullptr);
/// Dispatches on spec.shift and spec.extra_ind_attr.
[[nodiscard]] TabularDataset generate_slab(const SlabDatasetSpec& spec, SlabTrace* trace = nullptr);

/// Per-environment random split. Returns (train, validation); row order
/// within each part follows the input.
[[nodiscard]] std::pair<TabularDataset, TabularDataset> split_train_val(const TabularDataset& ds, double val_fraction,
                                                                        std::uint64_t seed);

}  // namespace causalreg
