#include "causalreg/mlp.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "causalreg/errors.hpp"
#include "causalreg/rng.hpp"

namespace causalreg {

std::size_t MlpParams::input_dim() const {
    return layers.empty() ? 0 : static_cast<std::size_t>(layers.front().weight.cols());
}

std::size_t MlpParams::output_dim() const {
    return layers.empty() ? 0 : static_cast<std::size_t>(layers.back().weight.rows());
}

void MlpParams::validate() const {
    if (layers.empty()) {
        throw ValidationError("network has no layers");
    }
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& layer = layers[l];
        if (layer.weight.rows() == 0 || layer.weight.cols() == 0) {
            throw ValidationError("layer " + std::to_string(l) + " has a zero dimension");
        }
        if (layer.bias.size() != layer.weight.rows()) {
            throw ValidationError("layer " + std::to_string(l) + ": bias size differs from output width");
        }
        if (l > 0 && layer.weight.cols() != layers[l - 1].weight.rows()) {
            throw ValidationError("layer " + std::to_string(l) + ": input width does not chain");
        }
        if (!layer.weight.allFinite() || !layer.bias.allFinite()) {
            throw ValidationError("layer " + std::to_string(l) + " has non-finite entries");
        }
    }
}

MlpParams MlpParams::zeros_like() const {
    MlpParams out;
    out.layers.reserve(layers.size());
    for (const auto& layer : layers) {
        out.layers.push_back({Matrix::Zero(layer.weight.rows(), layer.weight.cols()), Vector::Zero(layer.bias.size())});
    }
    return out;
}

std::size_t MlpParams::parameter_count() const {
    std::size_t n = 0;
    for (const auto& layer : layers) {
        n += static_cast<std::size_t>(layer.weight.size() + layer.bias.size());
    }
    return n;
}

MlpParams init_params(std::span<const std::size_t> dims, std::uint64_t seed) {
    if (dims.size() < 2) {
        throw ValidationError("network needs at least input and output dims");
    }
    for (std::size_t d : dims) {
        if (d == 0) {
            throw ValidationError("layer widths must be positive");
        }
    }
    MlpParams params;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        const auto in = static_cast<Eigen::Index>(dims[l]);
        const auto out = static_cast<Eigen::Index>(dims[l + 1]);
        const double bound = 1.0 / std::sqrt(static_cast<double>(in));
        Rng rng(seed, {l});
        DenseLayer layer{Matrix(out, in), Vector(out)};
        for (Eigen::Index i = 0; i < out; ++i) {
            for (Eigen::Index j = 0; j < in; ++j) {
                layer.weight(i, j) = rng.uniform(-bound, bound);
            }
        }
        for (Eigen::Index i = 0; i < out; ++i) {
            layer.bias(i) = rng.uniform(-bound, bound);
        }
        params.layers.push_back(std::move(layer));
    }
    return params;
}

ForwardTrace forward(const MlpParams& params, const Matrix& batch) {
    if (params.layers.empty()) {
        throw ValidationError("network has no layers");
    }
    if (static_cast<std::size_t>(batch.cols()) != params.input_dim()) {
        throw ValidationError("batch width " + std::to_string(batch.cols()) + " does not match input dim " +
                              std::to_string(params.input_dim()));
    }
    ForwardTrace trace;
    trace.pre.reserve(params.layers.size());
    trace.activations.reserve(params.layers.size() + 1);
    trace.activations.push_back(batch);
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        const auto& layer = params.layers[l];
        Matrix z = trace.activations.back() * layer.weight.transpose();
        z.rowwise() += layer.bias.transpose();
        if (l + 1 < params.layers.size()) {
            trace.activations.push_back(z.cwiseMax(0.0));
        } else {
            trace.activations.push_back(z);
        }
        trace.pre.push_back(std::move(z));
    }
    return trace;
}

Matrix softmax_rows(const Matrix& logits) {
    Matrix p = logits;
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        const double mx = p.row(i).maxCoeff();
        p.row(i) = (p.row(i).array() - mx).exp();
        p.row(i) /= p.row(i).sum();
    }
    return p;
}

namespace {

void check_labels(const Matrix& logits, std::span<const int> labels) {
    if (static_cast<std::size_t>(logits.rows()) != labels.size()) {
        throw ValidationError("label count does not match batch size");
    }
    for (int y : labels) {
        if (y < 0 || y >= logits.cols()) {
            throw ValidationError("label " + std::to_string(y) + " out of range");
        }
    }
}

}  // namespace

double cross_entropy(const Matrix& logits, std::span<const int> labels) {
    check_labels(logits, labels);
    if (logits.rows() == 0) {
        return 0.0;
    }
    double total = 0.0;
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const double mx = logits.row(i).maxCoeff();
        const double lse = mx + std::log((logits.row(i).array() - mx).exp().sum());
        total += lse - logits(i, labels[static_cast<std::size_t>(i)]);
    }
    return total / static_cast<double>(logits.rows());
}

Matrix cross_entropy_grad(const Matrix& logits, std::span<const int> labels) {
    check_labels(logits, labels);
    Matrix g = softmax_rows(logits);
    for (Eigen::Index i = 0; i < g.rows(); ++i) {
        g(i, labels[static_cast<std::size_t>(i)]) -= 1.0;
    }
    if (g.rows() > 0) {
        g /= static_cast<double>(g.rows());
    }
    return g;
}

LossGrad loss_and_grad(const MlpParams& params, const Matrix& batch, std::span<const int> labels,
                       const PenaltyHook& hook, PenaltyTarget target) {
    const ForwardTrace trace = forward(params, batch);
    const Matrix& logits = trace.logits();
    const std::size_t n_layers = params.layers.size();
    if (hook && target == PenaltyTarget::Representation && n_layers < 2) {
        throw ValidationError("representation penalty needs at least one hidden layer");
    }
    // Penalized activations: logits, or activations[n_layers - 1].
    const Matrix& penalized = target == PenaltyTarget::Logits ? logits : trace.activations[n_layers - 1];

    LossGrad out;
    out.ce = cross_entropy(logits, labels);
    Matrix delta = cross_entropy_grad(logits, labels);
    Matrix pen_grad;
    if (hook) {
        PenaltyEval pen = hook(penalized);
        out.penalty = pen.value;
        if (pen.grad.size() != 0) {
            if (pen.grad.rows() != penalized.rows() || pen.grad.cols() != penalized.cols()) {
                throw ValidationError("penalty gradient shape does not match the penalized activations");
            }
            pen_grad = std::move(pen.grad);
        }
    }
    if (pen_grad.size() != 0 && target == PenaltyTarget::Logits) {
        delta += pen_grad;
    }
    out.loss = out.ce + out.penalty;
    if (!std::isfinite(out.loss) || !delta.allFinite() || !pen_grad.allFinite()) {
        std::ostringstream msg;
        msg << "non-finite objective: ce=" << out.ce << " penalty=" << out.penalty
            << " max|logit|=" << (logits.size() ? logits.cwiseAbs().maxCoeff() : 0.0);
        throw NumericError(msg.str());
    }

    out.grads = params.zeros_like();
    for (std::size_t l = n_layers; l-- > 0;) {
        const Matrix& input = trace.activations[l];
        out.grads.layers[l].weight.noalias() = delta.transpose() * input;
        out.grads.layers[l].bias = delta.colwise().sum().transpose();
        if (l > 0) {
            Matrix upstream = delta * params.layers[l].weight;
            if (l == n_layers - 1 && pen_grad.size() != 0 && target == PenaltyTarget::Representation) {
                upstream += pen_grad;
            }
            delta = upstream.cwiseProduct((trace.pre[l - 1].array() > 0.0).cast<double>().matrix());
        }
    }
    return out;
}

std::vector<int> predict(const MlpParams& params, const Matrix& batch) {
    const ForwardTrace trace = forward(params, batch);
    const Matrix& logits = trace.logits();
    std::vector<int> out(static_cast<std::size_t>(logits.rows()));
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        Eigen::Index arg = 0;
        logits.row(i).maxCoeff(&arg);
        out[static_cast<std::size_t>(i)] = static_cast<int>(arg);
    }
    return out;
}

AdamState AdamState::for_params(const MlpParams& params, AdamConfig config) {
    return AdamState{config, params.zeros_like(), params.zeros_like(), 0};
}

void adam_step(AdamState& state, MlpParams& params, const MlpParams& grads) {
    if (state.m.layers.size() != params.layers.size() || grads.layers.size() != params.layers.size()) {
        throw ValidationError("adam state, params and grads have different layer counts");
    }
    const auto& cfg = state.config;
    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);

    const auto update = [&](auto& p, auto& m, auto& v, const auto& g) {
        if (p.size() != g.size() || p.size() != m.size()) {
            throw ValidationError("adam: parameter and gradient shapes differ");
        }
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
        if (cfg.weight_decay != 0.0) {
            p *= 1.0 - cfg.lr * cfg.weight_decay;
        }
        p.array() -= cfg.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + cfg.eps);
    };
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        update(params.layers[l].weight, state.m.layers[l].weight, state.v.layers[l].weight, grads.layers[l].weight);
        update(params.layers[l].bias, state.m.layers[l].bias, state.v.layers[l].bias, grads.layers[l].bias);
    }
}

// ---------------------------------------------------------------------------

nlohmann::json params_to_json(const MlpParams& params) {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& layer : params.layers) {
        std::vector<double> w;
        w.reserve(static_cast<std::size_t>(layer.weight.size()));
        for (Eigen::Index i = 0; i < layer.weight.rows(); ++i) {
            for (Eigen::Index j = 0; j < layer.weight.cols(); ++j) {
                w.push_back(layer.weight(i, j));
            }
        }
        layers.push_back({
            {"rows", layer.weight.rows()},
            {"cols", layer.weight.cols()},
            {"weight", std::move(w)},
            {"bias", std::vector<double>(layer.bias.data(), layer.bias.data() + layer.bias.size())},
        });
    }
    return {{"format", "causalreg-mlp-v1"}, {"layers", std::move(layers)}};
}

MlpParams params_from_json(const nlohmann::json& j) {
    MlpParams params;
    try {
        if (j.at("format").get<std::string>() != "causalreg-mlp-v1") {
            throw ParseError(0, "unsupported checkpoint format");
        }
        for (const auto& jl : j.at("layers")) {
            const auto rows = jl.at("rows").get<Eigen::Index>();
            const auto cols = jl.at("cols").get<Eigen::Index>();
            const auto w = jl.at("weight").get<std::vector<double>>();
            const auto b = jl.at("bias").get<std::vector<double>>();
            if (rows <= 0 || cols <= 0 || w.size() != static_cast<std::size_t>(rows * cols) ||
                b.size() != static_cast<std::size_t>(rows)) {
                throw ParseError(0, "checkpoint layer shape header does not match data");
            }
            DenseLayer layer{Matrix(rows, cols), Vector(rows)};
            for (Eigen::Index r = 0; r < rows; ++r) {
                for (Eigen::Index c = 0; c < cols; ++c) {
                    layer.weight(r, c) = w[static_cast<std::size_t>(r * cols + c)];
                }
                layer.bias(r) = b[static_cast<std::size_t>(r)];
            }
            params.layers.push_back(std::move(layer));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(0, std::string("checkpoint: ") + e.what());
    }
    params.validate();
    return params;
}

void save_params(const MlpParams& params, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw ParseError(0, "cannot write " + path.string());
    }
    out << params_to_json(params).dump() << '\n';
}

MlpParams load_params(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ParseError(0, "cannot open " + path.string());
    }
    try {
        return params_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(0, std::string("checkpoint: ") + e.what());
    }
}

}  // namespace causalreg
