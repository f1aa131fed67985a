#include "causalreg/experiments.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "causalreg/errors.hpp"
#include "causalreg/rng.hpp"

namespace causalreg {

std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::string markdown_cell(std::string_view text) {
    std::string out;
    for (char c : text) {
        if (c == '|') out += '\\';
        out += c;
    }
    return out;
}

TrainConfig slab_train_config(ShiftType shift, std::size_t rows_per_env) {
    TrainConfig cfg;
    cfg.dataset = default_slab_spec(shift, 0, rows_per_env);
    if (shift == ShiftType::Selected) {
        cfg.dataset.noise_order = NoiseOrder::BeforeMechanism;
    }
    cfg.penalty.cacm.clear();
    cfg.penalty.normalize_pairs = false;
    cfg.penalty_target = PenaltyTarget::Representation;
    cfg.weight_decay = 0.0;
    cfg.selection = SelectionMode::TestDomainValidation;
    return cfg;
}

std::vector<PenaltyConstraint> comparison_constraints(ShiftType shift) {
    const std::string a = slab_attribute_name(shift);
    return {parse_penalty_constraint(a + "|Y,E"), parse_penalty_constraint(a + "|E")};
}

std::pair<PenaltyConstraint, PenaltyConstraint> correct_and_incorrect(ShiftType shift) {
    auto cs = comparison_constraints(shift);
    if (shift == ShiftType::Confounded || shift == ShiftType::Independent) {
        return {cs[1], cs[0]};
    }
    return {cs[0], cs[1]};
}

const ConstraintRow& ComparisonTable::row(const PenaltyConstraint& c) const {
    for (const auto& r : rows) {
        if (r.constraint == c) {
            return r;
        }
    }
    throw LookupError("no row for constraint " + c.spec_string());
}

namespace {

TrainConfig with_constraint(const TrainConfig& base, const PenaltyConstraint& c, const KernelConfig& kernel,
                            double lambda) {
    TrainConfig cfg = base;
    cfg.penalty.baseline = BaselineKind::None;
    cfg.penalty.cacm = {AttributePenalty{c, kernel, lambda}};
    return cfg;
}

std::string pct(const MeanSe& m) { return fixed(100.0 * m.mean, 1) + " ± " + fixed(100.0 * m.se, 1); }

}  // namespace

ComparisonTable compare_constraints(const TrainConfig& base, const std::vector<PenaltyConstraint>& constraints,
                                    const KernelConfig& kernel, const SweepConfig& sweep_cfg) {
    if (constraints.empty()) {
        throw ValidationError("no constraints to compare");
    }
    ComparisonTable table;
    table.shift = base.dataset.shift;
    for (const auto& c : constraints) {
        table.rows.push_back({c, sweep(sweep_cfg, with_constraint(base, c, kernel, 1.0))});
    }
    return table;
}

std::string comparison_markdown(const std::vector<ComparisonTable>& tables) {
    std::ostringstream out;
    out << "| shift | constraint | train acc | test acc | failed trials |\n";
    out << "|---|---|---|---|---|\n";
    for (const auto& t : tables) {
        for (const auto& r : t.rows) {
            out << "| " << to_string(t.shift) << " | " << markdown_cell(r.constraint.describe()) << " | " << pct(r.report.train)
                << " | " << pct(r.report.test) << " | " << r.report.failed_trials << " |\n";
        }
    }
    return out.str();
}

std::string comparison_csv(const std::vector<ComparisonTable>& tables) {
    std::ostringstream out;
    out << "shift,constraint,train_mean,train_se,test_mean,test_se,n_seeds,failed_trials\n";
    for (const auto& t : tables) {
        for (const auto& r : t.rows) {
            const auto& rep = r.report;
            out << to_string(t.shift) << ",\"" << r.constraint.spec_string() << "\"," << fixed(rep.train.mean, 6) << ','
                << fixed(rep.train.se, 6) << ',' << fixed(rep.test.mean, 6) << ',' << fixed(rep.test.se, 6) << ','
                << rep.test.n << ',' << rep.failed_trials << '\n';
        }
    }
    return out.str();
}

nlohmann::json comparison_json(const std::vector<ComparisonTable>& tables) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& t : tables) {
        for (const auto& r : t.rows) {
            nlohmann::json j = summary_json(r.report);
            j["shift"] = to_string(t.shift);
            j["constraint"] = r.constraint.spec_string();
            out.push_back(std::move(j));
        }
    }
    return out;
}

std::vector<LambdaPoint> lambda_sensitivity(const TrainConfig& base, const PenaltyConstraint& correct,
                                            const PenaltyConstraint& incorrect, const KernelConfig& kernel,
                                            const std::vector<double>& lambdas,
                                            const std::vector<std::uint64_t>& seeds, const std::vector<double>& lrs,
                                            std::size_t workers) {
    if (lambdas.empty()) throw ValidationError("lambda list must be non-empty");
    if (seeds.empty()) throw ValidationError("seed list must be non-empty");
    if (lrs.empty()) throw ValidationError("learning-rate list must be non-empty");
    kernel.validate();
    base.validate();

    std::vector<TrialData> data(seeds.size());
    parallel_for(seeds.size(), workers, [&](std::size_t s) {
        TrainConfig cfg = base;
        cfg.dataset.seed = seeds[s];
        data[s] = prepare_data(cfg);
    });

    const std::vector<PenaltyConstraint> constraints{correct, incorrect};
    const std::size_t n_points = constraints.size() * lambdas.size();
    const std::size_t per_point = seeds.size() * lrs.size();
    std::vector<TrialResult> runs(n_points * per_point);
    parallel_for(runs.size(), workers, [&](std::size_t i) {
        const std::size_t point = i / per_point;
        const std::size_t s = (i % per_point) / lrs.size();
        const std::size_t k = i % lrs.size();
        TrainConfig cfg = with_constraint(base, constraints[point / lambdas.size()], kernel,
                                         lambdas[point % lambdas.size()]);
        cfg.dataset.seed = seeds[s];
        cfg.seed = derive_seed(seeds[s], {301, k});
        cfg.lr = lrs[k];
        runs[i] = train(cfg, data[s]);
    });

    std::vector<LambdaPoint> out;
    for (std::size_t point = 0; point < n_points; ++point) {
        LambdaPoint p;
        p.constraint = constraints[point / lambdas.size()].spec_string();
        p.lambda = lambdas[point % lambdas.size()];
        std::vector<double> train_acc, test_acc;
        for (std::size_t s = 0; s < seeds.size(); ++s) {
            const std::span<const TrialResult> block(runs.data() + point * per_point + s * lrs.size(), lrs.size());
            p.failed += static_cast<std::size_t>(
                std::count_if(block.begin(), block.end(), [](const TrialResult& r) { return r.failed; }));
            if (const auto best = select_best(block)) {
                train_acc.push_back(block[*best].train.accuracy);
                test_acc.push_back(block[*best].test.accuracy);
            }
        }
        p.train = mean_se(train_acc);
        p.test = mean_se(test_acc);
        out.push_back(std::move(p));
    }
    return out;
}

std::string lambda_csv(const std::vector<LambdaPoint>& points) {
    std::ostringstream out;
    out << "constraint,lambda,train_mean,train_se,test_mean,test_se,n,failed\n";
    for (const auto& p : points) {
        char lam[32];
        std::snprintf(lam, sizeof lam, "%g", p.lambda);
        out << '"' << p.constraint << "\"," << lam << ',' << fixed(p.train.mean, 6) << ',' << fixed(p.train.se, 6) << ','
            << fixed(p.test.mean, 6) << ',' << fixed(p.test.se, 6) << ',' << p.test.n << ',' << p.failed << '\n';
    }
    return out.str();
}

}  // namespace causalreg
