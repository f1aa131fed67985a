#include "causalreg/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "causalreg/errors.hpp"
#include "causalreg/rng.hpp"

namespace causalreg {

namespace {

enum : std::uint64_t { kInitStream = 101, kBatchStream = 102 };

}  // namespace

std::string_view to_string(SelectionMode mode) {
    return mode == SelectionMode::TestDomainValidation ? "test_domain_validation" : "train_domain_validation";
}

SelectionMode parse_selection_mode(std::string_view token) {
    if (token == "test_domain_validation") return SelectionMode::TestDomainValidation;
    if (token == "train_domain_validation") return SelectionMode::TrainDomainValidation;
    throw ValidationError("unknown selection mode: " + std::string(token));
}

void TrainConfig::validate() const {
    dataset.validate();
    penalty.validate();
    if (steps == 0) throw ValidationError("steps must be > 0");
    if (batch_per_env == 0) throw ValidationError("batch_per_env must be > 0");
    if (!(std::isfinite(lr) && lr > 0.0)) throw ValidationError("lr must be finite and > 0");
    if (!(std::isfinite(weight_decay) && weight_decay >= 0.0)) throw ValidationError("weight_decay must be >= 0");
    if (dropout != 0.0) throw ValidationError("dropout is not supported; set it to 0");
    if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw ValidationError("val_fraction must be in (0, 1)");
    if (trace_interval == 0) throw ValidationError("trace_interval must be > 0");
    for (auto h : hidden) {
        if (h == 0) throw ValidationError("hidden layer widths must be > 0");
    }
}

TrialData prepare_data(const TrainConfig& config) {
    return prepare_data(config, generate_slab(config.dataset));
}

TrialData prepare_data(const TrainConfig& config, const TabularDataset& ds) {
    ds.validate();
    auto [fit_all, val_all] = split_train_val(ds, config.val_fraction, config.dataset.seed);
    const auto train_ids = config.dataset.env_ids(EnvRole::Train);
    const auto test_ids = config.dataset.env_ids(EnvRole::Test);
    const auto pick = [](const TabularDataset& src, const std::vector<int>& ids) {
        TabularDataset out{{}, src.n_classes, src.feature_dim};
        for (int id : ids) {
            out.environments.push_back(src.env(id));
        }
        return out;
    };
    TrialData data;
    data.fit = pick(fit_all, train_ids);
    data.train_val = pick(val_all, train_ids);
    data.test_val = pick(val_all, test_ids);
    data.test = pick(fit_all, test_ids);
    data.attribute = slab_attribute_name(config.dataset.shift);
    return data;
}

DatasetView view_of(const TabularDataset& ds) {
    DatasetView v;
    const auto n = static_cast<Eigen::Index>(ds.total_rows());
    v.x.resize(n, static_cast<Eigen::Index>(ds.feature_dim));
    const auto attrs = ds.attribute_names();
    for (const auto& a : attrs) {
        v.meta.attrs[a].reserve(static_cast<std::size_t>(n));
    }
    Eigen::Index r = 0;
    for (const auto& env : ds.environments) {
        for (const auto& row : env.rows) {
            for (std::size_t j = 0; j < row.x.size(); ++j) {
                v.x(r, static_cast<Eigen::Index>(j)) = row.x[j];
            }
            v.y.push_back(row.y);
            v.meta.env.push_back(env.env_id);
            for (const auto& a : attrs) {
                v.meta.attrs[a].push_back(row.attrs.at(a));
            }
            ++r;
        }
    }
    v.meta.y = v.y;
    return v;
}

EvalMetrics evaluate(const MlpParams& params, const TabularDataset& ds, const std::string& attribute) {
    const DatasetView v = view_of(ds);
    const auto preds = predict(params, v.x);
    const auto it = v.meta.attrs.find(attribute);
    const std::span<const int> groups = it == v.meta.attrs.end() ? std::span<const int>{} : std::span<const int>(it->second);
    return compute_metrics(preds, v.y, v.meta.env, groups);
}

TrialResult train(const TrainConfig& config) {
    config.validate();
    return train(config, prepare_data(config));
}

TrialResult train(const TrainConfig& config, const TrialData& data, MlpParams* final_params) {
    config.validate();
    const auto started = std::chrono::steady_clock::now();
    TrialResult result;
    result.config = config;

    std::vector<DatasetView> envs;
    for (const auto& env : data.fit.environments) {
        if (env.rows.empty()) {
            throw ValidationError("train environment " + std::to_string(env.env_id) + " has no rows");
        }
        envs.push_back(view_of(TabularDataset{{env}, data.fit.n_classes, data.fit.feature_dim}));
    }
    const auto attr_names = data.fit.attribute_names();

    std::vector<std::size_t> dims{data.fit.feature_dim};
    dims.insert(dims.end(), config.hidden.begin(), config.hidden.end());
    dims.push_back(static_cast<std::size_t>(data.fit.n_classes));
    MlpParams params = init_params(dims, derive_seed(config.seed, {kInitStream}));
    AdamState adam = AdamState::for_params(params, AdamConfig{config.lr, 0.9, 0.999, 1e-8, config.weight_decay});
    Rng batch_rng(config.seed, {kBatchStream});

    const std::size_t batch_rows = config.batch_per_env * envs.size();
    Matrix batch(static_cast<Eigen::Index>(batch_rows), static_cast<Eigen::Index>(data.fit.feature_dim));
    BatchMeta meta;
    const bool use_cacm = !config.penalty.cacm.empty();
    const BaselineKind baseline = config.penalty.baseline;

    for (std::size_t step = 0; step < config.steps; ++step) {
        meta.env.clear();
        meta.y.clear();
        for (const auto& a : attr_names) {
            meta.attrs[a].clear();
        }
        Eigen::Index r = 0;
        for (const auto& v : envs) {
            const std::size_t n = v.y.size();
            for (std::size_t b = 0; b < config.batch_per_env; ++b, ++r) {
                const std::size_t i = batch_rng.index(n);
                batch.row(r) = v.x.row(static_cast<Eigen::Index>(i));
                meta.env.push_back(v.meta.env[i]);
                meta.y.push_back(v.y[i]);
                for (const auto& a : attr_names) {
                    meta.attrs[a].push_back(v.meta.attrs.at(a)[i]);
                }
            }
        }

        PenaltyResult last;
        PenaltyHook hook;
        if (use_cacm) {
            hook = [&](const Matrix& logits) {
                last = cacm_penalty(logits, meta, config.penalty);
                return PenaltyEval{last.value, last.grad};
            };
        } else if (baseline != BaselineKind::None && baseline != BaselineKind::Erm) {
            const double lambda = config.penalty.baseline_lambda_at(step);
            hook = [&, lambda](const Matrix& logits) {
                last = baseline_penalty(baseline, logits, meta, config.penalty.baseline_kernel,
                                        config.penalty.normalize_pairs);
                return PenaltyEval{lambda * last.value, lambda * last.grad};
            };
        }

        LossGrad lg;
        try {
            lg = loss_and_grad(params, batch, meta.y, hook, config.penalty_target);
        } catch (const NumericError& e) {
            result.failed = true;
            result.failed_step = step;
            result.failure = e.what();
            break;
        }
        result.pairs_skipped += last.pairs_skipped;
        if (step % config.trace_interval == 0) {
            result.penalty_trace.push_back(last.unweighted);
        }
        adam_step(adam, params, lg.grads);
    }

    if (!result.failed) {
        result.train = evaluate(params, data.fit, data.attribute);
        const TabularDataset& val =
            config.selection == SelectionMode::TestDomainValidation ? data.test_val : data.train_val;
        result.val = evaluate(params, val, data.attribute);
        result.test = evaluate(params, data.test, data.attribute);
        if (final_params) {
            *final_params = params;
        }
    }
    result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return result;
}

// ---------------------------------------------------------------------------

nlohmann::json to_json(const SlabDatasetSpec& spec) {
    nlohmann::json envs = nlohmann::json::array();
    for (const auto& e : spec.environments) {
        nlohmann::json j{{"env_id", e.env_id},
                         {"p", e.p},
                         {"n_samples", e.n_samples},
                         {"role", e.role == EnvRole::Train ? "train" : "test"}};
        if (e.confounder_p) {
            j["confounder_p"] = *e.confounder_p;
        }
        envs.push_back(std::move(j));
    }
    nlohmann::json out{{"shift", to_string(spec.shift)},
                       {"environments", std::move(envs)},
                       {"label_noise", spec.label_noise},
                       {"seed", spec.seed},
                       {"noise_order", spec.noise_order == NoiseOrder::BeforeMechanism ? "before" : "after"},
                       {"confound_shift_prob", spec.confound_shift_prob}};
    if (spec.extra_ind_attr) {
        out["extra_ind_attr"] = {{"name", spec.extra_ind_attr->name},
                                 {"value_count", spec.extra_ind_attr->value_count},
                                 {"leak", spec.extra_ind_attr->leak}};
    }
    return out;
}

nlohmann::json to_json(const PenaltyConfig& config) {
    nlohmann::json cacm = nlohmann::json::array();
    for (const auto& ap : config.cacm) {
        cacm.push_back({{"constraint", ap.constraint.spec_string()},
                        {"kernel", to_string(ap.kernel.kind)},
                        {"gamma", ap.kernel.gamma},
                        {"lambda", ap.lambda}});
    }
    return {{"cacm", std::move(cacm)},
            {"baseline", to_string(config.baseline)},
            {"baseline_lambda", config.baseline_lambda},
            {"baseline_kernel", to_string(config.baseline_kernel.kind)},
            {"baseline_gamma", config.baseline_kernel.gamma},
            {"anneal_steps", config.anneal_steps},
            {"normalize_pairs", config.normalize_pairs}};
}

nlohmann::json to_json(const TrainConfig& config) {
    return {{"dataset", to_json(config.dataset)},
            {"penalty", to_json(config.penalty)},
            {"steps", config.steps},
            {"batch_per_env", config.batch_per_env},
            {"lr", config.lr},
            {"weight_decay", config.weight_decay},
            {"dropout", config.dropout},
            {"seed", config.seed},
            {"selection", to_string(config.selection)},
            {"hidden", config.hidden},
            {"penalty_target", config.penalty_target == PenaltyTarget::Logits ? "logits" : "representation"},
            {"val_fraction", config.val_fraction},
            {"trace_interval", config.trace_interval}};
}

nlohmann::json to_json(const EvalMetrics& m) {
    nlohmann::json per_env = nlohmann::json::object();
    for (const auto& [e, acc] : m.per_env) {
        per_env[std::to_string(e)] = acc;
    }
    return {{"accuracy", m.accuracy}, {"worst_group", m.worst_group}, {"count", m.count}, {"per_env", std::move(per_env)}};
}

nlohmann::json to_json(const TrialResult& r, bool with_timing) {
    nlohmann::json out{{"config", to_json(r.config)},
                       {"failed", r.failed},
                       {"train", to_json(r.train)},
                       {"val", to_json(r.val)},
                       {"test", to_json(r.test)},
                       {"penalty_trace", r.penalty_trace},
                       {"pairs_skipped", r.pairs_skipped}};
    if (r.failed) {
        out["failed_step"] = r.failed_step.value_or(0);
        out["failure"] = r.failure;
    }
    if (with_timing) {
        out["wall_seconds"] = r.wall_seconds;
    }
    return out;
}

}  // namespace causalreg
