#pragma once

#include <map>
#include <span>

namespace causalreg {

struct EvalMetrics {
    double accuracy = 0.0;
    std::map<int, double> per_env;
    /// Minimum accuracy over non-empty (attribute value, label) groups.
    double worst_group = 0.0;
    std::size_t count = 0;

    friend bool operator==(const EvalMetrics&, const EvalMetrics&) = default;
};

/// `envs` and `group_attr` may be empty: per_env is then left empty and
/// groups are formed by label alone. Throws ValidationError on empty input
/// or mismatched lengths.
[[nodiscard]] EvalMetrics compute_metrics(std::span<const int> preds, std::span<const int> labels,
                                          std::span<const int> envs = {}, std::span<const int> group_attr = {});

}  // namespace causalreg
