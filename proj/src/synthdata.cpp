#include "causalreg/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "causalreg/errors.hpp"
#include "causalreg/rng.hpp"

namespace causalreg {

namespace {

// RNG stream tags; one stream per generated field.
enum Stream : std::uint64_t {
    kCausalFeature = 1,
    kBranch = 2,
    kNoise = 3,
    kAttribute = 4,
    kConfounder = 5,
    kIndependent = 6,
    kLabelShift = 7,
    kSplit = 8,
};

struct EnvStreams {
    Rng xc, branch, noise, attribute, confounder, label_shift;

    EnvStreams(std::uint64_t seed, int env_id)
        : xc(seed, {std::uint64_t(env_id), kCausalFeature}),
          branch(seed, {std::uint64_t(env_id), kBranch}),
          noise(seed, {std::uint64_t(env_id), kNoise}),
          attribute(seed, {std::uint64_t(env_id), kAttribute}),
          confounder(seed, {std::uint64_t(env_id), kConfounder}),
          label_shift(seed, {std::uint64_t(env_id), kLabelShift}) {}
};

/// With probability `rate` replaces y by a uniformly drawn other class.
int apply_label_noise(int y, int n_classes, double rate, Rng& rng) {
    if (rate <= 0.0 || !rng.bernoulli(rate)) {
        return y;
    }
    const auto offset = static_cast<int>(rng.index(static_cast<std::size_t>(n_classes - 1)));
    return (y + 1 + offset) % n_classes;
}

void require_shift(const SlabDatasetSpec& spec, ShiftType shift) {
    if (spec.shift != shift) {
        throw ValidationError("slab generator for " + std::string(to_string(shift)) + " called with a " +
                              std::string(to_string(spec.shift)) + " spec");
    }
}

void init_trace(SlabTrace* trace, std::size_t n_envs) {
    if (trace) {
        trace->y_true.assign(n_envs, {});
        trace->confounder.assign(n_envs, {});
    }
}

}  // namespace

void SlabDatasetSpec::validate() const {
    if (shift == ShiftType::Independent) {
        throw ValidationError("slab datasets exist for causal, confounded and selected shifts only");
    }
    if (!(label_noise >= 0.0 && label_noise < 1.0)) {
        throw ValidationError("label_noise must be in [0, 1)");
    }
    if (!(confound_shift_prob >= 0.0 && confound_shift_prob <= 1.0)) {
        throw ValidationError("confound_shift_prob must be in [0, 1]");
    }
    std::set<int> ids;
    for (const auto& e : environments) {
        if (!(e.p >= 0.0 && e.p <= 1.0)) {
            throw ValidationError("environment " + std::to_string(e.env_id) + ": p must be in [0, 1]");
        }
        if (e.n_samples == 0) {
            throw ValidationError("environment " + std::to_string(e.env_id) + ": n_samples must be positive");
        }
        if (e.confounder_p && !(*e.confounder_p >= 0.0 && *e.confounder_p <= 1.0)) {
            throw ValidationError("environment " + std::to_string(e.env_id) + ": confounder_p must be in [0, 1]");
        }
        if (e.env_id < 0 || !ids.insert(e.env_id).second) {
            throw ValidationError("environment ids must be unique and non-negative");
        }
    }
    if (env_ids(EnvRole::Train).size() < 2) {
        throw ValidationError("need at least two train environments");
    }
    if (env_ids(EnvRole::Test).empty()) {
        throw ValidationError("need at least one test environment");
    }
    if (extra_ind_attr) {
        if (extra_ind_attr->value_count < 2) {
            throw ValidationError("independent attribute needs at least two values");
        }
        if (!(extra_ind_attr->leak >= 0.0 && extra_ind_attr->leak <= 1.0)) {
            throw ValidationError("independent attribute leak must be in [0, 1]");
        }
        if (extra_ind_attr->name == slab_attribute_name(shift)) {
            throw ValidationError("independent attribute name collides with the base attribute");
        }
    }
}

std::vector<int> SlabDatasetSpec::env_ids(EnvRole role) const {
    std::vector<int> out;
    for (const auto& e : environments) {
        if (e.role == role) {
            out.push_back(e.env_id);
        }
    }
    return out;
}

SlabDatasetSpec default_slab_spec(ShiftType shift, std::uint64_t seed, std::size_t rows_per_env) {
    SlabDatasetSpec spec;
    spec.shift = shift;
    spec.seed = seed;
    const auto envs = [&](double p0, double p1, double p_test) {
        spec.environments = {
            {0, p0, rows_per_env, EnvRole::Train, std::nullopt},
            {1, p1, rows_per_env, EnvRole::Train, std::nullopt},
            {2, p_test, rows_per_env, EnvRole::Test, std::nullopt},
        };
    };
    switch (shift) {
        case ShiftType::Causal:
            envs(0.9, 1.0, 0.0);
            spec.label_noise = 0.1;
            spec.noise_order = NoiseOrder::BeforeMechanism;
            break;
        case ShiftType::Confounded:
            envs(1.0, 0.9, 0.8);
            spec.label_noise = 0.0;
            spec.noise_order = NoiseOrder::AfterMechanism;
            break;
        case ShiftType::Selected:
            envs(0.9, 1.0, 0.0);
            spec.label_noise = 0.1;
            spec.noise_order = NoiseOrder::AfterMechanism;
            break;
        case ShiftType::Independent:
            throw ValidationError("no slab dataset for the independent shift");
    }
    return spec;
}

std::string slab_attribute_name(ShiftType shift) {
    switch (shift) {
        case ShiftType::Causal: return "a_cause";
        case ShiftType::Confounded: return "a_conf";
        case ShiftType::Selected: return "a_sel";
        case ShiftType::Independent: return "a_ind";
    }
    return "a";
}

// ---------------------------------------------------------------------------

void TabularDataset::validate() const {
    std::optional<std::vector<std::string>> names;
    for (const auto& e : environments) {
        for (const auto& r : e.rows) {
            if (r.x.size() != feature_dim) {
                throw ValidationError("row feature width differs from feature_dim in env " + std::to_string(e.env_id));
            }
            if (r.y < 0 || r.y >= n_classes) {
                throw ValidationError("label out of range in env " + std::to_string(e.env_id));
            }
            std::vector<std::string> row_names;
            for (const auto& [k, v] : r.attrs) {
                row_names.push_back(k);
            }
            if (!names) {
                names = std::move(row_names);
            } else if (*names != row_names) {
                throw ValidationError("attribute names differ between rows");
            }
        }
    }
}

const Environment& TabularDataset::env(int env_id) const {
    for (const auto& e : environments) {
        if (e.env_id == env_id) {
            return e;
        }
    }
    throw LookupError("unknown environment " + std::to_string(env_id));
}

std::vector<std::string> TabularDataset::attribute_names() const {
    std::vector<std::string> out;
    for (const auto& e : environments) {
        if (!e.rows.empty()) {
            for (const auto& [k, v] : e.rows.front().attrs) {
                out.push_back(k);
            }
            break;
        }
    }
    return out;
}

std::size_t TabularDataset::total_rows() const {
    std::size_t n = 0;
    for (const auto& e : environments) {
        n += e.rows.size();
    }
    return n;
}

// ---------------------------------------------------------------------------

int slab_bucket(double xc, int n_slabs) {
    const int k = static_cast<int>(std::floor(xc * n_slabs));
    return std::clamp(k, 0, n_slabs - 1);
}

int causal_attribute(int y, bool majority_branch) {
    return majority_branch ? y : std::abs(y - 1);
}

bool selection_accepts(int y_true, int a_sel, bool p_branch) {
    return p_branch ? (a_sel + y_true == 4) : (a_sel - y_true == 1);
}

TabularDataset gen_causal_slab(const SlabDatasetSpec& spec, SlabTrace* trace) {
    require_shift(spec, ShiftType::Causal);
    spec.validate();
    constexpr int kClasses = 5;
    const std::string attr = slab_attribute_name(ShiftType::Causal);
    const bool noise_first = spec.noise_order == NoiseOrder::BeforeMechanism;

    TabularDataset ds{{}, kClasses, 2};
    init_trace(trace, spec.environments.size());
    for (std::size_t ei = 0; ei < spec.environments.size(); ++ei) {
        const auto& es = spec.environments[ei];
        EnvStreams rng(spec.seed, es.env_id);
        Environment env{es.env_id, {}};
        env.rows.reserve(es.n_samples);
        for (std::size_t i = 0; i < es.n_samples; ++i) {
            const double xc = rng.xc.uniform();
            const int y_true = slab_bucket(xc, kClasses);
            const bool majority = rng.branch.bernoulli(es.p);
            int y = y_true;
            int a = 0;
            if (noise_first) {
                y = apply_label_noise(y_true, kClasses, spec.label_noise, rng.noise);
                a = causal_attribute(y, majority);
            } else {
                a = causal_attribute(y_true, majority);
                y = apply_label_noise(y_true, kClasses, spec.label_noise, rng.noise);
            }
            env.rows.push_back(Row{{xc, static_cast<double>(a)}, {{attr, a}}, y});
            if (trace) {
                trace->y_true[ei].push_back(y_true);
            }
        }
        ds.environments.push_back(std::move(env));
    }
    return ds;
}

TabularDataset gen_confounded_slab(const SlabDatasetSpec& spec, SlabTrace* trace) {
    require_shift(spec, ShiftType::Confounded);
    spec.validate();
    constexpr int kSlabs = 4;
    constexpr int kClasses = 5;  // y_true + c reaches 4
    const std::string attr = slab_attribute_name(ShiftType::Confounded);

    TabularDataset ds{{}, kClasses, 2};
    init_trace(trace, spec.environments.size());
    for (std::size_t ei = 0; ei < spec.environments.size(); ++ei) {
        const auto& es = spec.environments[ei];
        const bool train = es.role == EnvRole::Train;
        const double c_prob = es.confounder_p.value_or(train ? 0.25 : 0.75);
        EnvStreams rng(spec.seed, es.env_id);
        Environment env{es.env_id, {}};
        env.rows.reserve(es.n_samples);
        for (std::size_t i = 0; i < es.n_samples; ++i) {
            const double xc = rng.xc.uniform();
            const int y_true = slab_bucket(xc, kSlabs);
            const int c = rng.confounder.bernoulli(c_prob) ? 1 : 0;
            const bool shifted = rng.label_shift.bernoulli(spec.confound_shift_prob);
            int y = (train && shifted) ? y_true + c : y_true;
            y = apply_label_noise(y, kClasses, spec.label_noise, rng.noise);
            const int a = rng.branch.bernoulli(es.p) ? 2 * c : 0;
            env.rows.push_back(Row{{xc, static_cast<double>(a)}, {{attr, a}}, y});
            if (trace) {
                trace->y_true[ei].push_back(y_true);
                trace->confounder[ei].push_back(c);
            }
        }
        ds.environments.push_back(std::move(env));
    }
    return ds;
}

TabularDataset gen_selected_slab(const SlabDatasetSpec& spec, SlabTrace* trace) {
    require_shift(spec, ShiftType::Selected);
    spec.validate();
    constexpr int kClasses = 4;
    constexpr std::size_t kStallWindow = 10000;
    constexpr double kMinAcceptance = 0.01;
    const std::string attr = slab_attribute_name(ShiftType::Selected);
    const bool noise_first = spec.noise_order == NoiseOrder::BeforeMechanism;

    TabularDataset ds{{}, kClasses, 2};
    init_trace(trace, spec.environments.size());
    for (std::size_t ei = 0; ei < spec.environments.size(); ++ei) {
        const auto& es = spec.environments[ei];
        EnvStreams rng(spec.seed, es.env_id);
        Environment env{es.env_id, {}};
        env.rows.reserve(es.n_samples);
        std::size_t window_draws = 0;
        std::size_t window_accepts = 0;
        while (env.rows.size() < es.n_samples) {
            const double xc = rng.xc.uniform();
            const int y_true = slab_bucket(xc, kClasses);
            const int a = 1 + static_cast<int>(rng.attribute.index(4));
            const bool p_branch = rng.branch.bernoulli(es.p);
            int y = y_true;
            bool keep = false;
            if (noise_first) {
                y = apply_label_noise(y_true, kClasses, spec.label_noise, rng.noise);
                keep = selection_accepts(y, a, p_branch);
            } else {
                keep = selection_accepts(y_true, a, p_branch);
                if (keep) {
                    y = apply_label_noise(y_true, kClasses, spec.label_noise, rng.noise);
                }
            }
            ++window_draws;
            if (keep) {
                ++window_accepts;
                env.rows.push_back(Row{{xc, static_cast<double>(a)}, {{attr, a}}, y});
                if (trace) {
                    trace->y_true[ei].push_back(y_true);
                }
            }
            if (window_draws == kStallWindow) {
                const double rate = static_cast<double>(window_accepts) / static_cast<double>(window_draws);
                if (rate < kMinAcceptance) {
                    throw ValidationError("selection sampling stalled in env " + std::to_string(es.env_id) +
                                          ": acceptance rate " + std::to_string(rate) + " over the last " +
                                          std::to_string(kStallWindow) + " draws");
                }
                window_draws = 0;
                window_accepts = 0;
            }
        }
        ds.environments.push_back(std::move(env));
    }
    return ds;
}

TabularDataset gen_multiattr_slab(const SlabDatasetSpec& spec, SlabTrace* trace) {
    if (!spec.extra_ind_attr) {
        throw ValidationError("multi-attribute slab needs extra_ind_attr");
    }
    spec.validate();
    SlabDatasetSpec base_spec = spec;
    base_spec.extra_ind_attr.reset();
    TabularDataset ds;
    switch (spec.shift) {
        case ShiftType::Causal: ds = gen_causal_slab(base_spec, trace); break;
        case ShiftType::Confounded: ds = gen_confounded_slab(base_spec, trace); break;
        case ShiftType::Selected: ds = gen_selected_slab(base_spec, trace); break;
        case ShiftType::Independent: throw ValidationError("no slab dataset for the independent shift");
    }

    const auto& ind = *spec.extra_ind_attr;
    for (auto& env : ds.environments) {
        Rng rng(spec.seed, {std::uint64_t(env.env_id), kIndependent});
        const int majority = env.env_id % ind.value_count;
        for (auto& row : env.rows) {
            int value = majority;
            if (rng.bernoulli(ind.leak)) {
                const auto offset = static_cast<int>(rng.index(static_cast<std::size_t>(ind.value_count - 1)));
                value = (majority + 1 + offset) % ind.value_count;
            }
            row.attrs[ind.name] = value;
            row.x.push_back(static_cast<double>(value));
        }
    }
    ds.feature_dim += 1;
    return ds;
}

TabularDataset generate_slab(const SlabDatasetSpec& spec, SlabTrace* trace) {
    if (spec.extra_ind_attr) {
        return gen_multiattr_slab(spec, trace);
    }
    switch (spec.shift) {
        case ShiftType::Causal: return gen_causal_slab(spec, trace);
        case ShiftType::Confounded: return gen_confounded_slab(spec, trace);
        case ShiftType::Selected: return gen_selected_slab(spec, trace);
        case ShiftType::Independent: break;
    }
    throw ValidationError("no slab dataset for the independent shift");
}

std::pair<TabularDataset, TabularDataset> split_train_val(const TabularDataset& ds, double val_fraction,
                                                          std::uint64_t seed) {
    if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
        throw ValidationError("val_fraction must be in (0, 1)");
    }
    TabularDataset train{{}, ds.n_classes, ds.feature_dim};
    TabularDataset val{{}, ds.n_classes, ds.feature_dim};
    for (const auto& env : ds.environments) {
        const std::size_t n = env.rows.size();
        if (n < 2) {
            throw ValidationError("environment " + std::to_string(env.env_id) + " has fewer than 2 rows to split");
        }
        std::vector<std::size_t> perm(n);
        std::iota(perm.begin(), perm.end(), 0);
        Rng rng(seed, {std::uint64_t(env.env_id), kSplit});
        for (std::size_t i = n - 1; i > 0; --i) {
            std::swap(perm[i], perm[rng.index(i + 1)]);
        }
        auto n_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(n)));
        n_val = std::clamp<std::size_t>(n_val, 1, n - 1);
        std::vector<bool> in_val(n, false);
        for (std::size_t i = 0; i < n_val; ++i) {
            in_val[perm[i]] = true;
        }
        Environment tr{env.env_id, {}};
        Environment va{env.env_id, {}};
        for (std::size_t i = 0; i < n; ++i) {
            (in_val[i] ? va : tr).rows.push_back(env.rows[i]);
        }
        train.environments.push_back(std::move(tr));
        val.environments.push_back(std::move(va));
    }
    return {std::move(train), std::move(val)};
}

}  // namespace causalreg
