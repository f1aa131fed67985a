#pragma once

#include <compare>
#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "causalreg/causal_graph.hpp"
#include "causalreg/mlp.hpp"

namespace causalreg {

enum class KernelKind { Rbf, L2MeanDiff };

[[nodiscard]] std::string_view to_string(KernelKind kind);
[[nodiscard]] KernelKind parse_kernel_kind(std::string_view token);

struct KernelConfig {
    KernelKind kind = KernelKind::L2MeanDiff;
    /// Inverse bandwidth of k(a, b) = exp(-gamma * |a - b|^2). Rbf only.
    double gamma = 1.0;

    void validate() const;
};

/// Biased (V-statistic) squared MMD between the rows of xs and ys.
/// rbf: mean(Kxx) + mean(Kyy) - 2 mean(Kxy), clamped at 0.
/// l2_mean_diff: |mean(xs) - mean(ys)|^2.
[[nodiscard]] double mmd2(const Matrix& xs, const Matrix& ys, const KernelConfig& cfg);

struct Mmd2Grad {
    double value = 0.0;
    Matrix grad_x;  // d value / d xs
    Matrix grad_y;  // d value / d ys
};
[[nodiscard]] Mmd2Grad mmd2_with_grad(const Matrix& xs, const Matrix& ys, const KernelConfig& cfg);

/// Per-row metadata for a batch: environment, label and attribute columns.
struct BatchMeta {
    std::vector<int> env;
    std::vector<int> y;
    std::map<std::string, std::vector<int>> attrs;

    [[nodiscard]] std::size_t size() const noexcept { return y.size(); }
};

/// A batch column a constraint can refer to.
struct MetaField {
    enum class Kind { Env, Label, Attribute };
    Kind kind = Kind::Attribute;
    std::string name;  // attribute name; empty for Env / Label

    [[nodiscard]] static MetaField env() { return {Kind::Env, {}}; }
    [[nodiscard]] static MetaField label() { return {Kind::Label, {}}; }
    [[nodiscard]] static MetaField attribute(std::string name) { return {Kind::Attribute, std::move(name)}; }

    [[nodiscard]] const std::vector<int>& column(const BatchMeta& meta) const;
    [[nodiscard]] std::string display() const;

    friend bool operator==(const MetaField&, const MetaField&) = default;
};

/// A derived constraint expressed over batch columns: the representation
/// should be independent of `target` given `given`.
struct PenaltyConstraint {
    MetaField target;
    std::vector<MetaField> given;

    /// "X_c ⊥ a_cause | Y, E"
    [[nodiscard]] std::string describe() const;
    /// "a_cause|Y,E" (Y = label, E = environment, anything else an attribute).
    [[nodiscard]] std::string spec_string() const;

    friend bool operator==(const PenaltyConstraint&, const PenaltyConstraint&) = default;
};

/// Inverse of PenaltyConstraint::spec_string.
[[nodiscard]] PenaltyConstraint parse_penalty_constraint(std::string_view text);

/// Maps a derived constraint onto batch columns using node roles.
[[nodiscard]] PenaltyConstraint to_penalty_constraint(const ConstraintSet& set, const IndependenceConstraint& c);

inline constexpr int kAnyEnv = -1;

/// Rows sharing an environment (kAnyEnv when the constraint does not
/// condition on it), conditioning values (in `given` order, environment
/// excluded) and target value.
struct GroupKey {
    int env = kAnyEnv;
    std::vector<int> cond_values;
    int attr_value = 0;

    friend auto operator<=>(const GroupKey&, const GroupKey&) = default;
};
using GroupMap = std::map<GroupKey, std::vector<std::size_t>>;

/// Exhaustive, disjoint grouping of batch rows. Throws ValidationError when
/// an attribute column named by the constraint is missing.
[[nodiscard]] GroupMap partition_groups(const BatchMeta& meta, const PenaltyConstraint& constraint);

struct AttributePenalty {
    PenaltyConstraint constraint;
    KernelConfig kernel;
    double lambda = 1.0;
};

enum class BaselineKind { None, Erm, MmdUncond, MmdCondY, Vrex, Irmv1 };

[[nodiscard]] std::string_view to_string(BaselineKind kind);
[[nodiscard]] BaselineKind parse_baseline_kind(std::string_view token);

struct PenaltyConfig {
    std::vector<AttributePenalty> cacm;
    BaselineKind baseline = BaselineKind::None;
    double baseline_lambda = 1.0;
    KernelConfig baseline_kernel{KernelKind::Rbf, 1.0};
    /// vrex / irmv1: lambda is 1.0 before this many steps.
    std::size_t anneal_steps = 0;
    /// Divide each attribute's pair sum by its number of contributing pairs.
    bool normalize_pairs = true;

    /// lambdas finite and >= 0, kernels valid, and not both graph-derived
    /// constraints and a baseline active.
    void validate() const;
    [[nodiscard]] double baseline_lambda_at(std::size_t step) const;
};

struct PenaltyResult {
    double value = 0.0;       // lambda-weighted
    double unweighted = 0.0;  // sum of per-term values before lambda
    Matrix grad;              // d value / d logits
    std::size_t pairs_used = 0;
    std::size_t pairs_skipped = 0;
    /// Pair count each term was divided by (summed over attributes); 1 in
    /// raw mode.
    double normalizer = 1.0;
    /// Set when a baseline saw fewer than two environments.
    bool degenerate = false;
};

/// Sum over configured attributes of lambda_A times the (normalized) sum of
/// mmd2 over target-value pairs inside each conditioning cell. rbf pairs need
/// at least two rows per group; l2_mean_diff pairs need one.
[[nodiscard]] PenaltyResult cacm_penalty(const Matrix& logits, const BatchMeta& meta, const PenaltyConfig& config);

/// Unweighted baseline penalty (value == unweighted; callers apply lambda).
/// mmd_uncond / mmd_cond_y use `kernel`; vrex and irmv1 use the labels in
/// `meta`.
[[nodiscard]] PenaltyResult baseline_penalty(BaselineKind kind, const Matrix& logits, const BatchMeta& meta,
                                             const KernelConfig& kernel, bool normalize_pairs = true);

}  // namespace causalreg
