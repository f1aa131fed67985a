#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <limits>

#include "causalreg/errors.hpp"
#include "causalreg/mlp.hpp"
#include "oracles.hpp"

using namespace causalreg;

namespace {

const std::vector<std::size_t> kDims{2, 4, 4, 3};

std::vector<int> random_labels(Rng& rng, std::size_t n, int k) {
    std::vector<int> y(n);
    for (auto& v : y) v = static_cast<int>(rng.index(static_cast<std::size_t>(k)));
    return y;
}

}  // namespace

TEST_CASE("initialization is seeded and bounded by fan-in") {
    const auto a = init_params(kDims, 9);
    const auto b = init_params(kDims, 9);
    const auto c = init_params(kDims, 10);
    CHECK(a.layers[0].weight == b.layers[0].weight);
    CHECK_FALSE(a.layers[0].weight == c.layers[0].weight);
    CHECK(a.input_dim() == 2);
    CHECK(a.output_dim() == 3);
    CHECK(a.parameter_count() == (2 * 4 + 4) + (4 * 4 + 4) + (4 * 3 + 3));
    for (std::size_t l = 0; l < a.layers.size(); ++l) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(kDims[l]));
        CHECK(a.layers[l].weight.cwiseAbs().maxCoeff() <= bound);
        CHECK(a.layers[l].bias.cwiseAbs().maxCoeff() <= bound);
    }
}

TEST_CASE("forward pass matches a hand computation") {
    MlpParams p;
    p.layers.resize(2);
    p.layers[0].weight = Matrix{{1.0, -1.0}, {0.5, 2.0}};
    p.layers[0].bias = Vector{{0.0, -1.0}};
    p.layers[1].weight = Matrix{{1.0, 1.0}, {-1.0, 0.0}};
    p.layers[1].bias = Vector{{0.5, 0.0}};
    const Matrix x{{1.0, 2.0}};
    // hidden pre = (-1, 3.5), relu = (0, 3.5), logits = (4.0, 0.0)
    const auto trace = forward(p, x);
    CHECK(trace.logits()(0, 0) == doctest::Approx(4.0));
    CHECK(trace.logits()(0, 1) == doctest::Approx(0.0));
    CHECK(trace.activations[1](0, 0) == 0.0);
    CHECK(predict(p, x) == std::vector<int>{0});
}

TEST_CASE("softmax is normalized and stable") {
    const Matrix z{{1000.0, 999.0, -1000.0}, {0.0, 0.0, 0.0}};
    const Matrix s = softmax_rows(z);
    CHECK(s.allFinite());
    CHECK(s.row(0).sum() == doctest::Approx(1.0));
    CHECK(s(1, 0) == doctest::Approx(1.0 / 3.0));
    CHECK(cross_entropy(z, std::vector<int>{0, 2}) ==
          doctest::Approx(oracle::cross_entropy_naive(z, {0, 2})));
}

TEST_CASE("cross-entropy gradient matches finite differences") {
    Rng rng(1);
    const Matrix z = oracle::random_matrix(rng, 6, 4, 3.0);
    const auto y = random_labels(rng, 6, 4);
    const Matrix num = oracle::numeric_grad([&](const Matrix& m) { return oracle::cross_entropy_naive(m, y); }, z);
    CHECK(oracle::max_rel_error(cross_entropy_grad(z, y), num) < 1e-7);
}

TEST_CASE("parameter gradients match finite differences") {
    Rng rng(2);
    const Matrix x = oracle::random_matrix(rng, 8, 2);
    const auto y = random_labels(rng, 8, 3);
    const auto params = init_params(kDims, 4);

    SUBCASE("cross-entropy only") {
        const auto lg = loss_and_grad(params, x, y);
        CHECK(lg.penalty == 0.0);
        CHECK(lg.ce == doctest::Approx(oracle::cross_entropy_naive(forward(params, x).logits(), y)));
        const double err = oracle::check_param_grads(params, lg.grads, [&](const MlpParams& p) {
            return oracle::cross_entropy_naive(forward(p, x).logits(), y);
        });
        CHECK(err < 1e-6);
    }

    for (auto target : {PenaltyTarget::Logits, PenaltyTarget::Representation}) {
        // Sum of cubes keeps the hook gradient non-trivial.
        const PenaltyHook hook = [](const Matrix& h) {
            return PenaltyEval{h.array().cube().sum(), 3.0 * h.array().square().matrix()};
        };
        const auto lg = loss_and_grad(params, x, y, hook, target);
        const double err = oracle::check_param_grads(params, lg.grads, [&](const MlpParams& p) {
            const auto tr = forward(p, x);
            const Matrix& h = target == PenaltyTarget::Logits ? tr.logits() : tr.activations[p.layers.size() - 1];
            return oracle::cross_entropy_naive(tr.logits(), y) + h.array().cube().sum();
        });
        INFO("target " << static_cast<int>(target));
        CHECK(err < 1e-6);
        CHECK(lg.loss == doctest::Approx(lg.ce + lg.penalty));
    }
}

TEST_CASE("non-finite objective raises NumericError") {
    const auto params = init_params(kDims, 1);
    Matrix x(1, 2);
    x << std::numeric_limits<double>::quiet_NaN(), 0.0;
    CHECK_THROWS_AS((void)loss_and_grad(params, x, std::vector<int>{0}), NumericError);
    const PenaltyHook bad = [](const Matrix&) { return PenaltyEval{std::numeric_limits<double>::infinity(), {}}; };
    CHECK_THROWS_AS((void)loss_and_grad(params, Matrix::Zero(1, 2), std::vector<int>{0}, bad), NumericError);
}

TEST_CASE("representation target needs a hidden layer") {
    const std::vector<std::size_t> dims{2, 3};
    const auto params = init_params(dims, 1);
    const PenaltyHook hook = [](const Matrix&) { return PenaltyEval{}; };
    CHECK_THROWS_AS((void)loss_and_grad(params, Matrix::Zero(1, 2), std::vector<int>{0}, hook,
                                        PenaltyTarget::Representation),
                    ValidationError);
}

TEST_CASE("first Adam step moves each parameter by about lr against its gradient sign") {
    auto params = init_params(kDims, 3);
    const auto before = params;
    MlpParams grads = params.zeros_like();
    Rng rng(5);
    for (auto& l : grads.layers) l.weight = oracle::random_matrix(rng, l.weight.rows(), l.weight.cols());
    AdamState state = AdamState::for_params(params, AdamConfig{0.01});
    adam_step(state, params, grads);
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        const Matrix step = params.layers[l].weight - before.layers[l].weight;
        for (Eigen::Index i = 0; i < step.size(); ++i) {
            const double g = grads.layers[l].weight(i);
            CHECK(step(i) == doctest::Approx(-0.01 * g / (std::abs(g) + 1e-8)).epsilon(1e-6));
        }
        CHECK(params.layers[l].bias == before.layers[l].bias);
    }
}

TEST_CASE("decoupled weight decay shrinks parameters with zero gradient") {
    auto params = init_params(kDims, 3);
    const auto before = params;
    AdamState state = AdamState::for_params(params, AdamConfig{0.1, 0.9, 0.999, 1e-8, 0.5});
    adam_step(state, params, params.zeros_like());
    CHECK(params.layers[0].weight.isApprox(before.layers[0].weight * 0.95));
}

TEST_CASE("training fits a separable problem") {
    Rng rng(8);
    const Matrix x = oracle::random_matrix(rng, 200, 2);
    std::vector<int> y(200);
    for (Eigen::Index i = 0; i < 200; ++i) y[static_cast<std::size_t>(i)] = (x(i, 0) + x(i, 1) > 0) ? 1 : 0;
    const std::vector<std::size_t> dims{2, 16, 2};
    auto params = init_params(dims, 1);
    AdamState state = AdamState::for_params(params, AdamConfig{0.01});
    const double start = loss_and_grad(params, x, y).ce;
    for (int step = 0; step < 500; ++step) adam_step(state, params, loss_and_grad(params, x, y).grads);
    CHECK(loss_and_grad(params, x, y).ce < 0.25 * start);
    const auto pred = predict(params, x);
    std::size_t hit = 0;
    for (std::size_t i = 0; i < y.size(); ++i) hit += pred[i] == y[i];
    CHECK(hit >= 190);
}

TEST_CASE("checkpoints round-trip exactly") {
    const auto params = init_params(kDims, 12);
    const auto back = params_from_json(params_to_json(params));
    REQUIRE(back.layers.size() == params.layers.size());
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        CHECK(back.layers[l].weight == params.layers[l].weight);
        CHECK(back.layers[l].bias == params.layers[l].bias);
    }
    const auto path = std::filesystem::temp_directory_path() / "causalreg_ckpt_test.json";
    save_params(params, path);
    CHECK(load_params(path).layers[2].weight == params.layers[2].weight);
    std::filesystem::remove(path);
    CHECK_THROWS((void)params_from_json(nlohmann::json{{"format", "other"}}));
}
