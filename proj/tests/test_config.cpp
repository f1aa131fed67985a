#include <doctest.h>

#include <functional>
#include <sstream>
#include <string>

#include "causalreg/config.hpp"
#include "causalreg/errors.hpp"

using namespace causalreg;

namespace {

ConfigValues parse(const std::string& text) {
    std::istringstream in(text);
    return parse_config(in);
}

std::string error_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const std::exception& e) {
        return e.what();
    }
    return {};
}

}  // namespace

TEST_CASE("config files parse into sections") {
    const auto v = parse("# slab run\n[dataset]\nshift = selected\n\n[model]\nlr=0.01  # faster\nhidden = 32,32\n");
    CHECK(v.at("dataset").at("shift") == "selected");
    CHECK(v.at("model").at("lr") == "0.01");
    const auto rc = build_run_config(v);
    CHECK(rc.train.dataset.shift == ShiftType::Selected);
    CHECK(rc.train.lr == 0.01);
    CHECK(rc.train.hidden == std::vector<std::size_t>{32, 32});
    CHECK(rc.train.penalty_target == PenaltyTarget::Representation);
}

TEST_CASE("defaults build the slab preset") {
    const auto rc = build_run_config({});
    CHECK(rc.train.steps == 2000);
    CHECK(rc.train.dataset.environments.size() == 3);
    CHECK(rc.train.penalty.cacm.empty());
    CHECK_FALSE(rc.train.penalty.normalize_pairs);
    CHECK(rc.sweep.n_trials == 20);
    CHECK(rc.sweep.seeds == std::vector<std::uint64_t>{0, 1, 2});
    CHECK(rc.experiment.shifts.size() == 3);
    CHECK(rc.experiment.lambdas == std::vector<double>{1, 10, 100});
    CHECK(build_run_config({}, ShiftType::Confounded).train.dataset.shift == ShiftType::Confounded);
}

TEST_CASE("malformed files and unknown keys are rejected with a line number") {
    CHECK_THROWS_AS((void)parse("[dataset]\nshift causal\n"), ParseError);
    CHECK_THROWS_AS((void)parse("[nosuch]\n"), ParseError);
    CHECK_THROWS_AS((void)parse("shift=causal\n"), ParseError);
    CHECK_THROWS_AS((void)parse("[model]\nlr=1\nlr=2\n"), ParseError);
    try {
        (void)parse("[model]\n\nlearning_rate = 1\n");
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 3);
        CHECK(std::string(e.what()).find("learning_rate") != std::string::npos);
    }
}

TEST_CASE("bad values name the offending key") {
    ConfigValues v;
    set_config_value(v, "model.steps", "zero");
    CHECK(error_of([&] { (void)build_run_config(v); }).find("model.steps") != std::string::npos);
    v = {};
    set_config_value(v, "penalty.kernel", "cosine");
    CHECK(error_of([&] { (void)build_run_config(v); }).find("penalty.kernel") != std::string::npos);
    v = {};
    set_config_value(v, "model.lr", "-1");
    CHECK_THROWS_AS((void)build_run_config(v), ValidationError);
    CHECK_THROWS_AS(set_config_value(v, "model.nope", "1"), ValidationError);
    CHECK_THROWS_AS(apply_override(v, "model.lr"), ValidationError);
}

TEST_CASE("environment overrides then explicit overrides") {
    auto v = parse("[model]\nlr = 0.1\nsteps = 10\n");
    const EnvLookup fake = [](const std::string& name) -> std::optional<std::string> {
        if (name == "CAUSALREG_MODEL_LR") return "0.5";
        if (name == "CAUSALREG_SWEEP_TRIALS") return "4";
        return std::nullopt;
    };
    CHECK(env_var_name("model", "lr") == "CAUSALREG_MODEL_LR");
    apply_env_overrides(v, fake);
    CHECK(v.at("model").at("lr") == "0.5");
    CHECK(v.at("model").at("steps") == "10");
    apply_override(v, "model.lr=0.25");
    const auto rc = build_run_config(v);
    CHECK(rc.train.lr == 0.25);
    CHECK(rc.sweep.n_trials == 4);
}

TEST_CASE("canonical text and hash are stable") {
    const auto a = parse("[model]\nlr = 0.01\n[dataset]\nshift = causal\n");
    const auto b = parse("[dataset]\nshift=causal\n[model]\nlr=0.01\n");
    CHECK(canonical_text(a) == canonical_text(b));
    CHECK(config_hash(a) == config_hash(b));
    CHECK(config_hash(a).size() == 16);
    CHECK(config_hash(a) != config_hash(parse("[model]\nlr = 0.02\n")));
    // Explicit defaults hash like omitted ones.
    CHECK(config_hash(parse("[model]\nsteps = 2000\n")) == config_hash({}));
    std::istringstream in(canonical_text(a));
    CHECK(canonical_text(parse_config(in)) == canonical_text(a));
}

TEST_CASE("constraints and baselines") {
    auto v = parse("[penalty]\nconstraints = a_cause|Y,E; a_cause|E\nlambda = 10\nkernel = rbf\ngamma = 0.5\n");
    const auto rc = build_run_config(v);
    REQUIRE(rc.train.penalty.cacm.size() == 2);
    CHECK(rc.train.penalty.cacm[1].constraint.spec_string() == "a_cause|E");
    CHECK(rc.train.penalty.cacm[0].lambda == 10.0);
    CHECK(rc.train.penalty.cacm[0].kernel.kind == KernelKind::Rbf);
    CHECK(rc.train.penalty.cacm[0].kernel.gamma == 0.5);
    CHECK(rc.experiment.kernel.kind == KernelKind::Rbf);
    CHECK(build_run_config({}).experiment.kernel.kind == KernelKind::L2MeanDiff);
    set_config_value(v, "penalty.gamma", "0");
    CHECK(error_of([&] { (void)build_run_config(v); }).find("penalty.gamma") != std::string::npos);

    v = parse("[penalty]\nbaseline = vrex\nbaseline_lambda = 3\n");
    CHECK(build_run_config(v).train.penalty.baseline == BaselineKind::Vrex);
    set_config_value(v, "penalty.constraints", "a_cause|E");
    CHECK_THROWS_AS((void)build_run_config(v), ValidationError);
}
