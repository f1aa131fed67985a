// Prints one [PASS]/[FAIL] line per acceptance criterion and exits non-zero
// when any criterion fails. Optional argument: output directory for the
// comparison summaries (default ./acceptance_out).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "causalreg/causal_graph.hpp"
#include "causalreg/experiments.hpp"
#include "causalreg/mlp.hpp"
#include "causalreg/penalties.hpp"
#include "oracles.hpp"

using namespace causalreg;
namespace fs = std::filesystem;

namespace {

// Tolerances, in accuracy points unless noted.
constexpr double kReferenceWindow = 10.0;
constexpr double kCausalGap = 15.0;
constexpr double kSelectedGap = 10.0;
constexpr double kConfoundedGap = 3.0;
constexpr double kCausalCond = 89.3;
constexpr double kSelectedCond = 88.7;
constexpr double kConfoundedUncond = 67.1;
constexpr double kLambdaCorrectSpread = 10.0;
constexpr double kLambdaIncorrectDrop = 15.0;
constexpr double kGradRelError = 1e-4;
constexpr double kMmdOracleAbs = 1e-9;
constexpr double kExactAbs = 1e-12;
constexpr int kDsepQueries = 200;
constexpr int kMmdCases = 100;
constexpr int kEquivalenceBatches = 50;

struct Outcome {
    bool pass = true;
    std::string detail;
};

int failures = 0;

void run(const std::string& label, const std::function<Outcome()>& fn) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = fn();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!o.pass) ++failures;
    std::cout << (o.pass ? "[PASS] " : "[FAIL] ") << label << ": " << o.detail << " (" << fixed(secs, 1) << " s)"
              << std::endl;
}

double pts(double accuracy) { return 100.0 * accuracy; }

using Lines = std::set<std::string>;

Lines derived_lines(ShiftType shift, bool edge, Orientation orientation) {
    ShiftSpec spec;
    spec.attributes = {{"a", shift}};
    spec.e_xc_edge = edge;
    spec.orientation = orientation;
    const auto set = derive_constraints(build_canonical(spec));
    Lines out;
    for (const auto& c : set.constraints) out.insert(set.describe(c));
    return out;
}

bool conditions_on_e(const std::string& line) {
    const auto bar = line.find(" | ");
    return bar != std::string::npos && line.find('E', bar) != std::string::npos;
}

Outcome derivation_exactness() {
    const Lines all{"X_c ⊥ a", "X_c ⊥ E", "X_c ⊥ a | Y", "X_c ⊥ a | E", "X_c ⊥ a | Y, E"};
    const std::map<ShiftType, Lines> causal{
        {ShiftType::Independent, all},
        {ShiftType::Causal, {"X_c ⊥ a | Y", "X_c ⊥ E", "X_c ⊥ a | Y, E"}},
        {ShiftType::Confounded, {"X_c ⊥ a", "X_c ⊥ E", "X_c ⊥ a | E"}},
        {ShiftType::Selected, {"X_c ⊥ a | Y", "X_c ⊥ a | Y, E"}},
    };
    const std::map<ShiftType, Lines> anti{
        {ShiftType::Independent, all},
        {ShiftType::Causal, {"X_c ⊥ a | Y", "X_c ⊥ E", "X_c ⊥ a | Y, E"}},
        {ShiftType::Confounded, {"X_c ⊥ a | Y", "X_c ⊥ E", "X_c ⊥ a | Y, E"}},
        {ShiftType::Selected, {"X_c ⊥ a | Y", "X_c ⊥ a | Y, E"}},
    };
    std::vector<std::string> wrong;
    for (const auto& [orientation, table] :
         {std::pair{Orientation::Causal, causal}, std::pair{Orientation::AntiCausal, anti}}) {
        for (const auto& [shift, expected] : table) {
            const std::string tag = std::string(to_string(orientation)) + "/" + std::string(to_string(shift));
            if (derived_lines(shift, false, orientation) != expected) wrong.push_back(tag);
            Lines with_edge;
            for (const auto& l : expected) {
                if (conditions_on_e(l)) with_edge.insert(l);
            }
            if (derived_lines(shift, true, orientation) != with_edge) wrong.push_back(tag + "+edge");
        }
    }
    if (wrong.empty()) return {true, "16 realizations match exactly"};
    std::string d = "mismatch:";
    for (const auto& w : wrong) d += " " + w;
    return {false, d};
}

Outcome intersection_empty() {
    std::vector<ConstraintSet> sets;
    for (auto shift : {ShiftType::Independent, ShiftType::Causal, ShiftType::Confounded, ShiftType::Selected}) {
        ShiftSpec spec;
        spec.attributes = {{"a", shift}};
        sets.push_back(derive_constraints(build_canonical(spec)));
    }
    const auto common = constraint_intersection(sets);
    return {common.empty(), "intersection size " + std::to_string(common.size())};
}

Outcome dsep_oracle() {
    Rng rng(2024, {3});
    int agree = 0;
    int asked = 0;
    while (asked < kDsepQueries) {
        const std::size_t n = 2 + rng.index(7);
        const CausalDag g = oracle::random_dag(rng, n, rng.uniform(0.15, 0.6), n > 3 && rng.bernoulli(0.3));
        std::vector<std::size_t> free;
        for (const auto& node : g.nodes()) {
            if (node.role != NodeRole::Selection) free.push_back(node.id.value);
        }
        if (free.size() < 2) continue;
        const std::size_t a = free[rng.index(free.size())];
        std::size_t b = a;
        while (b == a) b = free[rng.index(free.size())];
        std::vector<std::size_t> z;
        std::vector<NodeId> zid;
        for (auto v : free) {
            if (v != a && v != b && rng.bernoulli(0.35)) {
                z.push_back(v);
                zid.push_back(NodeId{v});
            }
        }
        ++asked;
        agree += d_separated(g, NodeId{a}, NodeId{b}, zid) == oracle::dsep_by_paths(g, a, b, z);
    }
    return {agree == asked, std::to_string(agree) + "/" + std::to_string(asked) + " queries agree"};
}

BatchMeta random_meta(Rng& rng, std::size_t n, int n_env, int n_y, int n_attr) {
    BatchMeta meta;
    for (std::size_t i = 0; i < n; ++i) {
        meta.env.push_back(static_cast<int>(rng.index(static_cast<std::size_t>(n_env))));
        meta.y.push_back(static_cast<int>(rng.index(static_cast<std::size_t>(n_y))));
        meta.attrs["a"].push_back(static_cast<int>(rng.index(static_cast<std::size_t>(n_attr))));
    }
    return meta;
}

Outcome gradient_check() {
    Rng rng(77);
    const std::vector<std::size_t> dims{2, 2, 3};
    const auto params = init_params(dims, 5);
    const Matrix x = oracle::random_matrix(rng, 8, 2, 2.0);
    BatchMeta meta;
    meta.env = {0, 0, 0, 0, 1, 1, 1, 1};
    meta.y = {0, 1, 2, 0, 1, 2, 0, 1};
    meta.attrs["a"] = {0, 0, 1, 1, 0, 1, 0, 1};

    struct Case {
        std::string name;
        std::function<PenaltyEval(const Matrix&)> eval;
        PenaltyTarget target;
    };
    const auto cacm = [&](KernelKind kind) {
        PenaltyConfig cfg;
        cfg.cacm = {{parse_penalty_constraint("a|E"), {kind, 0.7}, 1.5}};
        return [cfg, &meta](const Matrix& h) {
            const auto r = cacm_penalty(h, meta, cfg);
            return PenaltyEval{r.value, r.grad};
        };
    };
    const auto baseline = [&](BaselineKind kind) {
        return [kind, &meta](const Matrix& h) {
            const auto r = baseline_penalty(kind, h, meta, {KernelKind::Rbf, 0.7});
            return PenaltyEval{2.0 * r.value, 2.0 * r.grad};
        };
    };
    std::vector<Case> cases{
        {"ce", {}, PenaltyTarget::Logits},
        {"cacm_rbf", cacm(KernelKind::Rbf), PenaltyTarget::Logits},
        {"cacm_l2", cacm(KernelKind::L2MeanDiff), PenaltyTarget::Logits},
        {"cacm_rbf_repr", cacm(KernelKind::Rbf), PenaltyTarget::Representation},
        {"cacm_l2_repr", cacm(KernelKind::L2MeanDiff), PenaltyTarget::Representation},
        {"mmd_uncond", baseline(BaselineKind::MmdUncond), PenaltyTarget::Logits},
        {"mmd_cond_y", baseline(BaselineKind::MmdCondY), PenaltyTarget::Logits},
        {"vrex", baseline(BaselineKind::Vrex), PenaltyTarget::Logits},
        {"irmv1", baseline(BaselineKind::Irmv1), PenaltyTarget::Logits},
    };
    double worst = 0.0;
    std::string worst_name;
    for (const auto& c : cases) {
        const PenaltyHook hook = c.eval ? PenaltyHook(c.eval) : PenaltyHook{};
        const auto lg = loss_and_grad(params, x, meta.y, hook, c.target);
        const double err = oracle::check_param_grads(params, lg.grads, [&](const MlpParams& p) {
            return loss_and_grad(p, x, meta.y, hook, c.target).loss;
        });
        if (err >= worst) {
            worst = err;
            worst_name = c.name;
        }
    }
    char buf[128];
    std::snprintf(buf, sizeof buf, "max relative error %.2e (%s) over %zu objectives", worst, worst_name.c_str(),
                  cases.size());
    return {worst <= kGradRelError, buf};
}

Outcome mmd_properties() {
    Rng rng(88);
    double oracle_err = 0.0;
    double self = 0.0;
    double asym = 0.0;
    double lowest = 0.0;
    for (int t = 0; t < kMmdCases; ++t) {
        const auto d = static_cast<Eigen::Index>(1 + rng.index(4));
        const Matrix xs = oracle::random_matrix(rng, static_cast<Eigen::Index>(2 + rng.index(12)), d);
        const Matrix ys = oracle::random_matrix(rng, static_cast<Eigen::Index>(2 + rng.index(12)), d, 1.5);
        for (KernelConfig k : {KernelConfig{KernelKind::Rbf, rng.uniform(0.05, 2.0)}, KernelConfig{KernelKind::L2MeanDiff}}) {
            const double m = mmd2(xs, ys, k);
            oracle_err = std::max(oracle_err, std::abs(m - oracle::mmd2_loops(xs, ys, k)));
            self = std::max(self, std::abs(mmd2(xs, xs, k)));
            asym = std::max(asym, std::abs(m - mmd2(ys, xs, k)));
            lowest = std::min(lowest, m);
        }
    }
    char buf[200];
    std::snprintf(buf, sizeof buf, "oracle %.1e, MMD(P,P) %.1e, asymmetry %.1e, min %.1e over %d inputs", oracle_err,
                  self, asym, lowest, kMmdCases);
    return {oracle_err <= kMmdOracleAbs && self <= kExactAbs && asym <= kExactAbs && lowest >= 0.0, buf};
}

Outcome equivalence() {
    Rng rng(99);
    double worst = 0.0;
    for (int t = 0; t < kEquivalenceBatches; ++t) {
        const auto meta = random_meta(rng, 24 + rng.index(40), 2 + static_cast<int>(rng.index(3)), 3, 2);
        const Matrix z = oracle::random_matrix(rng, static_cast<Eigen::Index>(meta.size()), 3);
        for (KernelConfig k : {KernelConfig{KernelKind::Rbf, 0.5}, KernelConfig{KernelKind::L2MeanDiff}}) {
            for (bool normalize : {false, true}) {
                PenaltyConfig cfg;
                cfg.normalize_pairs = normalize;
                cfg.cacm = {{parse_penalty_constraint("E"), k, 1.0}};
                const auto a = cacm_penalty(z, meta, cfg);
                const auto b = baseline_penalty(BaselineKind::MmdUncond, z, meta, k, normalize);
                worst = std::max(worst, std::abs(a.value - b.value));
            }
        }
    }
    char buf[96];
    std::snprintf(buf, sizeof buf, "max |cacm(E) - mmd_uncond| %.1e over %d batches", worst, kEquivalenceBatches);
    return {worst <= kExactAbs, buf};
}

std::vector<ComparisonTable> slab_comparison() {
    const auto sweep_cfg = sweep_for_budget(Budget::Reduced);
    std::vector<ComparisonTable> tables;
    for (auto shift : {ShiftType::Causal, ShiftType::Selected, ShiftType::Confounded}) {
        tables.push_back(compare_constraints(slab_train_config(shift, 2000), comparison_constraints(shift), KernelConfig{}, sweep_cfg));
    }
    return tables;
}

void write_summaries(const std::vector<ComparisonTable>& tables, const fs::path& dir) {
    fs::create_directories(dir);
    std::ofstream(dir / "comparison.md") << comparison_markdown(tables);
    std::ofstream(dir / "comparison.csv") << comparison_csv(tables);
    std::ofstream(dir / "summary.json") << comparison_json(tables).dump(2) << '\n';
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct Accuracies {
    double cond_test, uncond_test, cond_train, uncond_train;
};

Accuracies accuracies(const ComparisonTable& t) {
    const auto cs = comparison_constraints(t.shift);
    const auto& c = t.row(cs[0]).report;
    const auto& u = t.row(cs[1]).report;
    return {pts(c.test.mean), pts(u.test.mean), pts(c.train.mean), pts(u.train.mean)};
}

bool within(double v, double target, double window) { return std::abs(v - target) <= window; }

Outcome comparison_check(const std::vector<ComparisonTable>& tables) {
    std::ostringstream d;
    bool ok = true;
    for (const auto& t : tables) {
        const auto a = accuracies(t);
        d << to_string(t.shift) << " cond " << fixed(a.cond_test, 1) << " uncond " << fixed(a.uncond_test, 1) << "; ";
        switch (t.shift) {
            case ShiftType::Causal:
                ok &= within(a.cond_test, kCausalCond, kReferenceWindow) && a.cond_test - a.uncond_test >= kCausalGap;
                break;
            case ShiftType::Selected:
                ok &= within(a.cond_test, kSelectedCond, kReferenceWindow) && a.cond_test - a.uncond_test >= kSelectedGap;
                break;
            default:
                ok &= within(a.uncond_test, kConfoundedUncond, kReferenceWindow) &&
                      a.uncond_test - a.cond_test >= kConfoundedGap;
                break;
        }
    }
    return {ok, d.str()};
}

Outcome risk_gap_check(const std::vector<ComparisonTable>& tables) {
    const auto a = accuracies(tables.front());
    const double correct_gap = std::abs(a.cond_train - a.cond_test);
    const double incorrect_gap = std::abs(a.uncond_train - a.uncond_test);
    return {correct_gap <= 0.5 * incorrect_gap,
            "causal |train-test| correct " + fixed(correct_gap, 1) + " vs incorrect " + fixed(incorrect_gap, 1)};
}

Outcome trace_check(const std::vector<ComparisonTable>& tables) {
    std::ostringstream d;
    bool ok = true;
    for (const auto& t : tables) {
        const auto correct = correct_and_incorrect(t.shift).first;
        const auto& rep = t.row(correct).report;
        int down = 0;
        int total = 0;
        for (std::size_t s = 0; s < rep.seeds.size(); ++s) {
            if (!rep.seeds[s].best_trial) continue;
            const auto& trace = rep.selected(s).penalty_trace;
            ++total;
            down += !trace.empty() && trace.back() < trace.front();
        }
        ok &= total > 0 && down == total;
        d << to_string(t.shift) << " " << down << "/" << total << "; ";
    }
    return {ok, "selected trials with final < initial penalty: " + d.str()};
}

Outcome lambda_check() {
    const auto [correct, incorrect] = correct_and_incorrect(ShiftType::Causal);
    const std::vector<double> lambdas{1.0, 10.0, 100.0};
    const std::vector<std::uint64_t> seeds{0, 1, 2};
    const auto points =
        lambda_sensitivity(slab_train_config(ShiftType::Causal, 2000), correct, incorrect, KernelConfig{},
                                          lambdas, seeds, SearchSpace{}.lr);
    std::map<std::string, std::map<double, double>> acc;
    for (const auto& p : points) acc[p.constraint][p.lambda] = pts(p.test.mean);
    const auto& c = acc.at(correct.spec_string());
    const auto& i = acc.at(incorrect.spec_string());
    double lo = 100.0;
    double hi = 0.0;
    for (const auto& [l, v] : c) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const double drop = i.at(1.0) - i.at(100.0);
    std::ostringstream d;
    d << "correct " << fixed(c.at(1.0), 1) << "/" << fixed(c.at(10.0), 1) << "/" << fixed(c.at(100.0), 1)
      << " (spread " << fixed(hi - lo, 1) << "), incorrect " << fixed(i.at(1.0), 1) << "/" << fixed(i.at(10.0), 1) << "/"
      << fixed(i.at(100.0), 1) << " (drop " << fixed(drop, 1) << ")";
    return {hi - lo <= kLambdaCorrectSpread && drop >= kLambdaIncorrectDrop, d.str()};
}

}  // namespace

int main(int argc, char** argv) {
    const fs::path out = argc > 1 ? fs::path(argv[1]) : fs::path("acceptance_out");

    run("1 constraint derivation", derivation_exactness);
    run("2 empty intersection", intersection_empty);
    run("3 d-separation oracle", dsep_oracle);
    run("7 gradient check", gradient_check);
    run("8 mmd estimator", mmd_properties);
    run("9 cacm(E) equals mmd_uncond", equivalence);

    std::vector<ComparisonTable> first;
    run("4 slab comparison", [&] {
        first = slab_comparison();
        write_summaries(first, out / "run1");
        return comparison_check(first);
    });
    if (!first.empty()) {
        run("5 risk-invariance gap", [&] { return risk_gap_check(first); });
        run("4/5 penalty trace", [&] { return trace_check(first); });
    } else {
        run("5 risk-invariance gap", [] { return Outcome{false, "comparison did not run"}; });
    }
    run("6 lambda sensitivity", lambda_check);
    run("10 determinism", [&] {
        write_summaries(slab_comparison(), out / "run2");
        std::vector<std::string> differing;
        for (const char* f : {"comparison.md", "comparison.csv", "summary.json"}) {
            if (slurp(out / "run1" / f) != slurp(out / "run2" / f)) differing.push_back(f);
        }
        std::string d = differing.empty() ? "summaries byte-identical" : "differs:";
        for (const auto& f : differing) d += " " + f;
        return Outcome{differing.empty() && !first.empty(), d};
    });

    std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " check(s) failed") << std::endl;
    return failures == 0 ? 0 : 1;
}
