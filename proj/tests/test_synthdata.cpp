#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <sstream>

#include "causalreg/dataset_io.hpp"
#include "causalreg/errors.hpp"
#include "causalreg/synthdata.hpp"

using namespace causalreg;

namespace {

SlabDatasetSpec spec_for(ShiftType shift, std::size_t rows, std::uint64_t seed = 3) {
    return default_slab_spec(shift, seed, rows);
}

double fraction(const Environment& env, const std::function<bool(const Row&)>& pred) {
    const auto n = std::count_if(env.rows.begin(), env.rows.end(), pred);
    return static_cast<double>(n) / static_cast<double>(env.rows.size());
}

}  // namespace

TEST_CASE("slab buckets") {
    CHECK(slab_bucket(0.0, 5) == 0);
    CHECK(slab_bucket(0.1999, 5) == 0);
    CHECK(slab_bucket(0.2, 5) == 1);
    CHECK(slab_bucket(0.99, 5) == 4);
    CHECK(slab_bucket(1.0, 5) == 4);
    CHECK(slab_bucket(0.5, 4) == 2);
}

TEST_CASE("generation is deterministic per seed") {
    for (auto shift : {ShiftType::Causal, ShiftType::Confounded, ShiftType::Selected}) {
        const auto a = generate_slab(spec_for(shift, 300, 5));
        const auto b = generate_slab(spec_for(shift, 300, 5));
        const auto c = generate_slab(spec_for(shift, 300, 6));
        CHECK(a == b);
        CHECK_FALSE(a == c);
        CHECK(a.environments.size() == 3);
        for (const auto& env : a.environments) CHECK(env.rows.size() == 300);
        CHECK(a.feature_dim == 2);
        CHECK_NOTHROW(a.validate());
    }
}

TEST_CASE("causal slab attribute follows the label with probability p") {
    SlabTrace trace;
    const auto spec = spec_for(ShiftType::Causal, 20000);
    const auto ds = gen_causal_slab(spec, &trace);
    for (std::size_t e = 0; e < ds.environments.size(); ++e) {
        const auto& env = ds.environments[e];
        const double agree = fraction(env, [](const Row& r) { return r.attrs.at("a_cause") == r.y; });
        CHECK(std::abs(agree - spec.environments[e].p) < 0.015);
        std::size_t noisy = 0;
        for (std::size_t i = 0; i < env.rows.size(); ++i) noisy += env.rows[i].y != trace.y_true[e][i];
        CHECK(std::abs(static_cast<double>(noisy) / env.rows.size() - 0.1) < 0.01);
        for (const auto& r : env.rows) {
            CHECK(r.x[1] == static_cast<double>(r.attrs.at("a_cause")));
            CHECK(slab_bucket(r.x[0], 5) == trace.y_true[e][&r - env.rows.data()]);
        }
    }
}

TEST_CASE("confounded slab shifts train labels only") {
    SlabTrace trace;
    const auto ds = gen_confounded_slab(spec_for(ShiftType::Confounded, 5000), &trace);
    for (std::size_t e = 0; e < ds.environments.size(); ++e) {
        const auto& env = ds.environments[e];
        for (std::size_t i = 0; i < env.rows.size(); ++i) {
            const auto& r = env.rows[i];
            const int c = trace.confounder[e][i];
            const int a = r.attrs.at("a_conf");
            CHECK((a == 0 || a == 2 * c));
            if (e == 2) {
                CHECK(r.y == trace.y_true[e][i]);
            } else {
                CHECK((r.y == trace.y_true[e][i] || r.y == trace.y_true[e][i] + c));
            }
        }
    }
    // Train confounder rate 0.25, test 0.75.
    const auto& c0 = trace.confounder[0];
    const auto& c2 = trace.confounder[2];
    CHECK(std::abs(std::count(c0.begin(), c0.end(), 1) / 5000.0 - 0.25) < 0.025);
    CHECK(std::abs(std::count(c2.begin(), c2.end(), 1) / 5000.0 - 0.75) < 0.025);
}

TEST_CASE("selected slab keeps only accepted rows") {
    auto spec = spec_for(ShiftType::Selected, 3000);
    spec.noise_order = NoiseOrder::BeforeMechanism;
    for (const auto& env : gen_selected_slab(spec).environments) {
        for (const auto& r : env.rows) {
            const int a = r.attrs.at("a_sel");
            CHECK((selection_accepts(r.y, a, true) || selection_accepts(r.y, a, false)));
        }
    }
    SlabTrace trace;
    spec.noise_order = NoiseOrder::AfterMechanism;
    const auto ds = gen_selected_slab(spec, &trace);
    for (std::size_t e = 0; e < ds.environments.size(); ++e) {
        for (std::size_t i = 0; i < ds.environments[e].rows.size(); ++i) {
            const int a = ds.environments[e].rows[i].attrs.at("a_sel");
            const int y = trace.y_true[e][i];
            CHECK((selection_accepts(y, a, true) || selection_accepts(y, a, false)));
        }
    }
    // Test environment (p = 0) only holds a - y = 1 rows.
    for (std::size_t i = 0; i < ds.environments[2].rows.size(); ++i) {
        CHECK(ds.environments[2].rows[i].attrs.at("a_sel") - trace.y_true[2][i] == 1);
    }
}

TEST_CASE("independent attribute is label independent within an environment") {
    auto spec = spec_for(ShiftType::Causal, 20000);
    spec.extra_ind_attr = IndependentAttrSpec{};
    const auto ds = generate_slab(spec);
    CHECK(ds.feature_dim == 3);
    for (const auto& env : ds.environments) {
        const int majority = env.env_id % 3;
        CHECK(std::abs(fraction(env, [&](const Row& r) { return r.attrs.at("a_ind") == majority; }) - 0.9) < 0.01);
        std::map<int, std::pair<int, int>> by_label;
        for (const auto& r : env.rows) {
            auto& [hit, total] = by_label[r.y];
            hit += r.attrs.at("a_ind") == majority;
            ++total;
        }
        for (const auto& [y, ht] : by_label) {
            CHECK(std::abs(static_cast<double>(ht.first) / ht.second - 0.9) < 0.03);
        }
    }
}

TEST_CASE("spec validation") {
    auto spec = spec_for(ShiftType::Causal, 10);
    spec.environments.erase(spec.environments.begin());
    CHECK_THROWS_AS(spec.validate(), ValidationError);
    spec = spec_for(ShiftType::Causal, 10);
    spec.environments[0].p = 1.5;
    CHECK_THROWS_AS(spec.validate(), ValidationError);
    spec = spec_for(ShiftType::Causal, 10);
    spec.environments[1].env_id = 0;
    CHECK_THROWS_AS(spec.validate(), ValidationError);
    CHECK_THROWS_AS((void)default_slab_spec(ShiftType::Independent), ValidationError);
    CHECK_THROWS_AS((void)gen_selected_slab(spec_for(ShiftType::Causal, 10)), ValidationError);
}

TEST_CASE("train/validation split is a deterministic partition") {
    const auto ds = generate_slab(spec_for(ShiftType::Causal, 1000));
    const auto [fit, val] = split_train_val(ds, 0.1, 11);
    const auto [fit2, val2] = split_train_val(ds, 0.1, 11);
    CHECK(fit == fit2);
    CHECK(val == val2);
    for (std::size_t e = 0; e < ds.environments.size(); ++e) {
        CHECK(val.environments[e].rows.size() == 100);
        CHECK(fit.environments[e].rows.size() == 900);
        std::vector<double> all, parts;
        for (const auto& r : ds.environments[e].rows) all.push_back(r.x[0]);
        for (const auto& r : fit.environments[e].rows) parts.push_back(r.x[0]);
        for (const auto& r : val.environments[e].rows) parts.push_back(r.x[0]);
        std::sort(all.begin(), all.end());
        std::sort(parts.begin(), parts.end());
        CHECK(all == parts);
    }
    CHECK_THROWS_AS((void)split_train_val(ds, 1.0, 0), ValidationError);
}

TEST_CASE("csv round-trips exactly") {
    auto spec = spec_for(ShiftType::Confounded, 200);
    spec.extra_ind_attr = IndependentAttrSpec{};
    const auto ds = generate_slab(spec);
    std::ostringstream out;
    write_csv(out, ds);
    std::istringstream in(out.str());
    const auto back = read_csv(in, ds.n_classes);
    CHECK(back == ds);

    std::istringstream bad("env,y,x0\n0,1\n");
    CHECK_THROWS((void)read_csv(bad));
}
