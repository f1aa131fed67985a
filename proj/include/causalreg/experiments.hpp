#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "causalreg/sweep.hpp"

namespace causalreg {

/// Slab experiment preset: default_slab_spec(shift) with the selected slab
/// selecting on the observed label, l2_mean_diff on the last hidden layer,
/// raw (unnormalized) pair sums, no weight decay, test-domain validation.
[[nodiscard]] TrainConfig slab_train_config(ShiftType shift, std::size_t rows_per_env = 2000);

/// The label-conditional and unconditional constraints on the slab
/// attribute: {A | Y, E, A | E}.
[[nodiscard]] std::vector<PenaltyConstraint> comparison_constraints(ShiftType shift);

struct ConstraintRow {
    PenaltyConstraint constraint;
    SweepReport report;
};

struct ComparisonTable {
    ShiftType shift = ShiftType::Causal;
    std::vector<ConstraintRow> rows;

    [[nodiscard]] const ConstraintRow& row(const PenaltyConstraint& c) const;
};

/// One sweep per constraint; `base.penalty.cacm` is replaced by a single
/// attribute penalty with `kernel`.
[[nodiscard]] ComparisonTable compare_constraints(const TrainConfig& base, const std::vector<PenaltyConstraint>& constraints,
                                                  const KernelConfig& kernel, const SweepConfig& sweep);

/// Markdown and CSV renderings with columns shift, constraint, train ± SE,
/// test ± SE (accuracies in percent).
[[nodiscard]] std::string comparison_markdown(const std::vector<ComparisonTable>& tables);
[[nodiscard]] std::string comparison_csv(const std::vector<ComparisonTable>& tables);
[[nodiscard]] nlohmann::json comparison_json(const std::vector<ComparisonTable>& tables);

struct LambdaPoint {
    std::string constraint;  // spec string
    double lambda = 0.0;
    MeanSe train;
    MeanSe test;
    std::size_t failed = 0;
};

/// For every (constraint, lambda, seed): one run per learning rate in `lrs`
/// with lambda held fixed, the run with the best validation accuracy kept.
/// Test accuracy of the kept runs is averaged over seeds. Training seeds
/// match across constraints and lambdas.
[[nodiscard]] std::vector<LambdaPoint> lambda_sensitivity(const TrainConfig& base, const PenaltyConstraint& correct,
                                                          const PenaltyConstraint& incorrect,
                                                          const KernelConfig& kernel,
                                                          const std::vector<double>& lambdas,
                                                          const std::vector<std::uint64_t>& seeds,
                                                          const std::vector<double>& lrs, std::size_t workers = 0);

/// The constraint valid for `shift` first, the invalid one second.
[[nodiscard]] std::pair<PenaltyConstraint, PenaltyConstraint> correct_and_incorrect(ShiftType shift);

/// constraint,lambda,train_mean,train_se,test_mean,test_se,n
[[nodiscard]] std::string lambda_csv(const std::vector<LambdaPoint>& points);

/// Fixed-point rendering shared by every summary file.
[[nodiscard]] std::string fixed(double v, int digits);
/// Escapes '|' for a markdown table cell.
[[nodiscard]] std::string markdown_cell(std::string_view text);

}  // namespace causalreg
