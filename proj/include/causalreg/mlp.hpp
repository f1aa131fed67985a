#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

namespace causalreg {

/// Rows are samples throughout: a batch is n x d, logits are n x k.
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct DenseLayer {
    Matrix weight;  // out x in
    Vector bias;    // out
};

/// Feed-forward ReLU network; the last layer emits raw logits.
struct MlpParams {
    std::vector<DenseLayer> layers;

    [[nodiscard]] std::size_t input_dim() const;
    [[nodiscard]] std::size_t output_dim() const;
    /// Layer dims chain and every entry is finite.
    void validate() const;
    [[nodiscard]] MlpParams zeros_like() const;
    [[nodiscard]] std::size_t parameter_count() const;
};

/// dims = {in, hidden..., out}. Weights and biases of a layer with fan-in
/// `in` are drawn from Uniform(-1/sqrt(in), 1/sqrt(in)).
[[nodiscard]] MlpParams init_params(std::span<const std::size_t> dims, std::uint64_t seed);

struct ForwardTrace {
    /// activations[0] is the input; activations[l + 1] = relu(pre[l]) except
    /// for the last layer, where it equals pre.back().
    std::vector<Matrix> pre;
    std::vector<Matrix> activations;

    [[nodiscard]] const Matrix& logits() const { return pre.back(); }
};

[[nodiscard]] ForwardTrace forward(const MlpParams& params, const Matrix& batch);

[[nodiscard]] Matrix softmax_rows(const Matrix& logits);
/// Mean softmax cross-entropy, log-sum-exp stabilized.
[[nodiscard]] double cross_entropy(const Matrix& logits, std::span<const int> labels);
/// d(mean CE)/d(logits).
[[nodiscard]] Matrix cross_entropy_grad(const Matrix& logits, std::span<const int> labels);

/// Penalty evaluated on logits: value and d(value)/d(logits). An empty
/// gradient means zero.
struct PenaltyEval {
    double value = 0.0;
    Matrix grad;
};
using PenaltyHook = std::function<PenaltyEval(const Matrix& logits)>;

/// Which activations the penalty hook sees: the logits, or the output of the
/// last hidden layer (post-ReLU).
enum class PenaltyTarget { Logits, Representation };

struct LossGrad {
    double loss = 0.0;  // ce + penalty
    double ce = 0.0;
    double penalty = 0.0;
    MlpParams grads;
};

/// Objective = mean CE + hook(h).value, where h is selected by `target`,
/// with exact reverse-mode gradients. Throws NumericError when the objective
/// is not finite.
[[nodiscard]] LossGrad loss_and_grad(const MlpParams& params, const Matrix& batch, std::span<const int> labels,
                                     const PenaltyHook& hook = {}, PenaltyTarget target = PenaltyTarget::Logits);

[[nodiscard]] std::vector<int> predict(const MlpParams& params, const Matrix& batch);

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    /// Decoupled: params -= lr * weight_decay * params each step.
    double weight_decay = 0.0;
};

struct AdamState {
    AdamConfig config;
    MlpParams m;
    MlpParams v;
    std::uint64_t step = 0;

    [[nodiscard]] static AdamState for_params(const MlpParams& params, AdamConfig config);
};

/// One bias-corrected Adam update of `params` in place.
void adam_step(AdamState& state, MlpParams& params, const MlpParams& grads);

// Checkpoint format (JSON):
//   {"format": "causalreg-mlp-v1",
//    "layers": [{"rows": out, "cols": in, "weight": [row-major], "bias": [...]}, ...]}
// Hidden activation is ReLU; the last layer is linear.
[[nodiscard]] nlohmann::json params_to_json(const MlpParams& params);
[[nodiscard]] MlpParams params_from_json(const nlohmann::json& j);
void save_params(const MlpParams& params, const std::filesystem::path& path);
[[nodiscard]] MlpParams load_params(const std::filesystem::path& path);

}  // namespace causalreg
