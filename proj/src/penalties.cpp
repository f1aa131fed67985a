#include "causalreg/penalties.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "causalreg/errors.hpp"

namespace causalreg {

std::string_view to_string(KernelKind kind) {
    return kind == KernelKind::Rbf ? "rbf" : "l2_mean_diff";
}

KernelKind parse_kernel_kind(std::string_view token) {
    if (token == "rbf") return KernelKind::Rbf;
    if (token == "l2_mean_diff" || token == "l2") return KernelKind::L2MeanDiff;
    throw ValidationError("unknown kernel: " + std::string(token));
}

void KernelConfig::validate() const {
    if (kind == KernelKind::Rbf && !(std::isfinite(gamma) && gamma > 0.0)) {
        throw ValidationError("rbf gamma must be finite and positive");
    }
}

namespace {

Matrix squared_distances(const Matrix& a, const Matrix& b) {
    Matrix d(a.rows(), b.rows());
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        for (Eigen::Index j = 0; j < b.rows(); ++j) {
            d(i, j) = (a.row(i) - b.row(j)).squaredNorm();
        }
    }
    return d;
}

void check_mmd_inputs(const Matrix& xs, const Matrix& ys) {
    if (xs.rows() == 0 || ys.rows() == 0) {
        throw ValidationError("mmd2 needs non-empty samples");
    }
    if (xs.cols() != ys.cols()) {
        throw ValidationError("mmd2 samples differ in dimension");
    }
}

}  // namespace

Mmd2Grad mmd2_with_grad(const Matrix& xs, const Matrix& ys, const KernelConfig& cfg) {
    check_mmd_inputs(xs, ys);
    cfg.validate();
    const double n = static_cast<double>(xs.rows());
    const double m = static_cast<double>(ys.rows());
    Mmd2Grad out;

    if (cfg.kind == KernelKind::L2MeanDiff) {
        const Eigen::RowVectorXd diff = xs.colwise().mean() - ys.colwise().mean();
        out.value = diff.squaredNorm();
        out.grad_x = (2.0 / n * diff).replicate(xs.rows(), 1);
        out.grad_y = (-2.0 / m * diff).replicate(ys.rows(), 1);
        return out;
    }

    const double g = cfg.gamma;
    const Matrix kxx = (-g * squared_distances(xs, xs)).array().exp().matrix();
    const Matrix kyy = (-g * squared_distances(ys, ys)).array().exp().matrix();
    const Matrix kxy = (-g * squared_distances(xs, ys)).array().exp().matrix();
    out.value = kxx.sum() / (n * n) + kyy.sum() / (m * m) - 2.0 * kxy.sum() / (n * m);
    if (out.value <= 0.0) {
        out.value = 0.0;
        out.grad_x = Matrix::Zero(xs.rows(), xs.cols());
        out.grad_y = Matrix::Zero(ys.rows(), ys.cols());
        return out;
    }
    // d k(a, b) / d a = -2 g k(a, b) (a - b)
    const Vector kxx_rows = kxx.rowwise().sum();
    const Vector kyy_rows = kyy.rowwise().sum();
    const Vector kxy_rows = kxy.rowwise().sum();
    const Vector kxy_cols = kxy.colwise().sum().transpose();
    out.grad_x = -4.0 * g / (n * n) * (kxx_rows.asDiagonal() * xs - kxx * xs) +
                 4.0 * g / (n * m) * (kxy_rows.asDiagonal() * xs - kxy * ys);
    out.grad_y = -4.0 * g / (m * m) * (kyy_rows.asDiagonal() * ys - kyy * ys) +
                 4.0 * g / (n * m) * (kxy_cols.asDiagonal() * ys - kxy.transpose() * xs);
    return out;
}

double mmd2(const Matrix& xs, const Matrix& ys, const KernelConfig& cfg) {
    check_mmd_inputs(xs, ys);
    cfg.validate();
    if (cfg.kind == KernelKind::L2MeanDiff) {
        return (xs.colwise().mean() - ys.colwise().mean()).squaredNorm();
    }
    const double n = static_cast<double>(xs.rows());
    const double m = static_cast<double>(ys.rows());
    const auto kernel_sum = [&](const Matrix& a, const Matrix& b) {
        return (-cfg.gamma * squared_distances(a, b)).array().exp().sum();
    };
    const double v = kernel_sum(xs, xs) / (n * n) + kernel_sum(ys, ys) / (m * m) - 2.0 * kernel_sum(xs, ys) / (n * m);
    return std::max(v, 0.0);
}

// ---------------------------------------------------------------------------

const std::vector<int>& MetaField::column(const BatchMeta& meta) const {
    switch (kind) {
        case Kind::Env: return meta.env;
        case Kind::Label: return meta.y;
        case Kind::Attribute: {
            const auto it = meta.attrs.find(name);
            if (it == meta.attrs.end()) {
                throw ValidationError("batch has no attribute column '" + name + "'");
            }
            return it->second;
        }
    }
    throw ValidationError("bad meta field");
}

std::string MetaField::display() const {
    switch (kind) {
        case Kind::Env: return "E";
        case Kind::Label: return "Y";
        case Kind::Attribute: return name;
    }
    return "?";
}

std::string PenaltyConstraint::describe() const {
    std::string out = "X_c ⊥ " + target.display();
    for (std::size_t i = 0; i < given.size(); ++i) {
        out += (i == 0 ? " | " : ", ") + given[i].display();
    }
    return out;
}

std::string PenaltyConstraint::spec_string() const {
    std::string out = target.display();
    if (!given.empty()) {
        out += '|';
        for (std::size_t i = 0; i < given.size(); ++i) {
            if (i) {
                out += ',';
            }
            out += given[i].display();
        }
    }
    return out;
}

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string_view::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t");
    return std::string(s.substr(b, e - b + 1));
}

MetaField field_from_token(const std::string& tok) {
    if (tok == "E") return MetaField::env();
    if (tok == "Y") return MetaField::label();
    if (tok.empty()) throw ValidationError("empty constraint variable");
    return MetaField::attribute(tok);
}

}  // namespace

PenaltyConstraint parse_penalty_constraint(std::string_view text) {
    const auto bar = text.find('|');
    PenaltyConstraint c;
    c.target = field_from_token(trim(text.substr(0, bar)));
    if (c.target.kind == MetaField::Kind::Label) {
        throw ValidationError("constraint target cannot be the label");
    }
    if (bar != std::string_view::npos) {
        std::string rest(text.substr(bar + 1));
        std::istringstream is(rest);
        for (std::string tok; std::getline(is, tok, ',');) {
            const auto t = trim(tok);
            if (t.empty()) {
                continue;
            }
            MetaField f = field_from_token(t);
            if (f == c.target) {
                throw ValidationError("constraint conditions on its own target: " + std::string(text));
            }
            c.given.push_back(std::move(f));
        }
    }
    return c;
}

PenaltyConstraint to_penalty_constraint(const ConstraintSet& set, const IndependenceConstraint& c) {
    const auto field = [&](NodeId id) {
        const Node& n = set.graph.node(id);
        switch (n.role) {
            case NodeRole::Environment: return MetaField::env();
            case NodeRole::Label: return MetaField::label();
            case NodeRole::Attribute: return MetaField::attribute(n.name);
            default:
                throw ValidationError("node " + n.name + " (" + std::string(to_string(n.role)) +
                                      ") has no batch column");
        }
    };
    PenaltyConstraint out;
    out.target = field(c.other);
    if (out.target.kind == MetaField::Kind::Label) {
        throw ValidationError("constraint target cannot be the label");
    }
    for (NodeId id : c.given) {
        out.given.push_back(field(id));
    }
    return out;
}

GroupMap partition_groups(const BatchMeta& meta, const PenaltyConstraint& constraint) {
    const std::size_t n = meta.size();
    const auto check_len = [n](const std::vector<int>& col) {
        if (col.size() != n) {
            throw ValidationError("batch metadata columns have different lengths");
        }
        return &col;
    };
    const std::vector<int>* target = check_len(constraint.target.column(meta));
    bool by_env = false;
    std::vector<const std::vector<int>*> cond;
    for (const auto& f : constraint.given) {
        if (f.kind == MetaField::Kind::Env) {
            by_env = true;
        } else {
            cond.push_back(check_len(f.column(meta)));
        }
    }
    if (by_env) {
        check_len(meta.env);
    }

    GroupMap groups;
    GroupKey key;
    key.cond_values.resize(cond.size());
    for (std::size_t r = 0; r < n; ++r) {
        key.env = by_env ? meta.env[r] : kAnyEnv;
        for (std::size_t c = 0; c < cond.size(); ++c) {
            key.cond_values[c] = (*cond[c])[r];
        }
        key.attr_value = (*target)[r];
        groups[key].push_back(r);
    }
    return groups;
}

// ---------------------------------------------------------------------------

std::string_view to_string(BaselineKind kind) {
    switch (kind) {
        case BaselineKind::None: return "none";
        case BaselineKind::Erm: return "erm";
        case BaselineKind::MmdUncond: return "mmd_uncond";
        case BaselineKind::MmdCondY: return "mmd_cond_y";
        case BaselineKind::Vrex: return "vrex";
        case BaselineKind::Irmv1: return "irmv1";
    }
    return "unknown";
}

BaselineKind parse_baseline_kind(std::string_view token) {
    for (auto k : {BaselineKind::None, BaselineKind::Erm, BaselineKind::MmdUncond, BaselineKind::MmdCondY,
                   BaselineKind::Vrex, BaselineKind::Irmv1}) {
        if (to_string(k) == token) {
            return k;
        }
    }
    throw ValidationError("unknown baseline: " + std::string(token));
}

void PenaltyConfig::validate() const {
    const auto check_lambda = [](double l, const std::string& what) {
        if (!(std::isfinite(l) && l >= 0.0)) {
            throw ValidationError(what + ": lambda must be finite and >= 0");
        }
    };
    for (const auto& ap : cacm) {
        check_lambda(ap.lambda, ap.constraint.describe());
        ap.kernel.validate();
    }
    check_lambda(baseline_lambda, "baseline");
    baseline_kernel.validate();
    if (!cacm.empty() && baseline != BaselineKind::None && baseline != BaselineKind::Erm) {
        throw ValidationError("graph-derived constraints and a baseline penalty cannot both be active");
    }
}

double PenaltyConfig::baseline_lambda_at(std::size_t step) const {
    const bool annealed = baseline == BaselineKind::Vrex || baseline == BaselineKind::Irmv1;
    return annealed && step < anneal_steps ? 1.0 : baseline_lambda;
}

namespace {

Matrix gather_rows(const Matrix& m, const std::vector<std::size_t>& rows) {
    Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
    }
    return out;
}

void scatter_add(Matrix& dst, const std::vector<std::size_t>& rows, const Matrix& src, double scale) {
    for (std::size_t i = 0; i < rows.size(); ++i) {
        dst.row(static_cast<Eigen::Index>(rows[i])) += scale * src.row(static_cast<Eigen::Index>(i));
    }
}

/// Accumulates pairwise mmd2 over a list of groups.
struct PairSum {
    double sum = 0.0;
    std::size_t used = 0;
    std::size_t skipped = 0;
    Matrix grad;

    PairSum(Eigen::Index n, Eigen::Index k) : grad(Matrix::Zero(n, k)) {}

    void add_all_pairs(const Matrix& logits, const std::vector<const std::vector<std::size_t>*>& groups,
                       const KernelConfig& kernel) {
        const std::size_t min_rows = kernel.kind == KernelKind::Rbf ? 2 : 1;
        for (std::size_t i = 0; i < groups.size(); ++i) {
            for (std::size_t j = i + 1; j < groups.size(); ++j) {
                const auto& gi = *groups[i];
                const auto& gj = *groups[j];
                if (gi.size() < min_rows || gj.size() < min_rows) {
                    ++skipped;
                    continue;
                }
                const Mmd2Grad r = mmd2_with_grad(gather_rows(logits, gi), gather_rows(logits, gj), kernel);
                sum += r.value;
                scatter_add(grad, gi, r.grad_x, 1.0);
                scatter_add(grad, gj, r.grad_y, 1.0);
                ++used;
            }
        }
    }
};

}  // namespace

PenaltyResult cacm_penalty(const Matrix& logits, const BatchMeta& meta, const PenaltyConfig& config) {
    if (static_cast<std::size_t>(logits.rows()) != meta.size()) {
        throw ValidationError("logit rows do not match batch metadata");
    }
    PenaltyResult out;
    out.grad = Matrix::Zero(logits.rows(), logits.cols());
    out.normalizer = 0.0;
    for (const auto& ap : config.cacm) {
        const GroupMap groups = partition_groups(meta, ap.constraint);
        PairSum acc(logits.rows(), logits.cols());
        // Groups of one conditioning cell are contiguous in key order.
        auto it = groups.begin();
        while (it != groups.end()) {
            std::vector<const std::vector<std::size_t>*> cell;
            auto end = it;
            while (end != groups.end() && end->first.env == it->first.env &&
                   end->first.cond_values == it->first.cond_values) {
                cell.push_back(&end->second);
                ++end;
            }
            acc.add_all_pairs(logits, cell, ap.kernel);
            it = end;
        }
        out.pairs_used += acc.used;
        out.pairs_skipped += acc.skipped;
        if (acc.used == 0) {
            continue;
        }
        const double scale = config.normalize_pairs ? 1.0 / static_cast<double>(acc.used) : 1.0;
        out.normalizer += config.normalize_pairs ? static_cast<double>(acc.used) : 1.0;
        out.unweighted += scale * acc.sum;
        out.value += ap.lambda * scale * acc.sum;
        out.grad += (ap.lambda * scale) * acc.grad;
    }
    if (out.normalizer == 0.0) {
        out.normalizer = 1.0;
    }
    return out;
}

PenaltyResult baseline_penalty(BaselineKind kind, const Matrix& logits, const BatchMeta& meta,
                               const KernelConfig& kernel, bool normalize_pairs) {
    const std::size_t n = meta.size();
    if (static_cast<std::size_t>(logits.rows()) != n || meta.env.size() != n) {
        throw ValidationError("logit rows do not match batch metadata");
    }
    PenaltyResult out;
    out.grad = Matrix::Zero(logits.rows(), logits.cols());
    if (kind == BaselineKind::None || kind == BaselineKind::Erm) {
        return out;
    }

    std::map<int, std::vector<std::size_t>> by_env;
    for (std::size_t r = 0; r < n; ++r) {
        by_env[meta.env[r]].push_back(r);
    }
    if (by_env.size() < 2) {
        out.degenerate = true;
        return out;
    }

    const auto finish_pairs = [&](PairSum& acc) {
        out.pairs_used = acc.used;
        out.pairs_skipped = acc.skipped;
        if (acc.used == 0) {
            return;
        }
        const double scale = normalize_pairs ? 1.0 / static_cast<double>(acc.used) : 1.0;
        out.normalizer = normalize_pairs ? static_cast<double>(acc.used) : 1.0;
        out.value = scale * acc.sum;
        out.grad = scale * acc.grad;
    };

    switch (kind) {
        case BaselineKind::MmdUncond: {
            PairSum acc(logits.rows(), logits.cols());
            std::vector<const std::vector<std::size_t>*> groups;
            for (const auto& [e, rows] : by_env) {
                groups.push_back(&rows);
            }
            acc.add_all_pairs(logits, groups, kernel);
            finish_pairs(acc);
            break;
        }
        case BaselineKind::MmdCondY: {
            if (meta.y.size() != n) {
                throw ValidationError("labels missing from batch metadata");
            }
            std::map<int, std::map<int, std::vector<std::size_t>>> by_class;
            for (std::size_t r = 0; r < n; ++r) {
                by_class[meta.y[r]][meta.env[r]].push_back(r);
            }
            PairSum acc(logits.rows(), logits.cols());
            for (const auto& [y, envs] : by_class) {
                std::vector<const std::vector<std::size_t>*> groups;
                for (const auto& [e, rows] : envs) {
                    groups.push_back(&rows);
                }
                acc.add_all_pairs(logits, groups, kernel);
            }
            finish_pairs(acc);
            break;
        }
        case BaselineKind::Vrex: {
            const Matrix probs = softmax_rows(logits);
            std::vector<double> losses;
            for (const auto& [e, rows] : by_env) {
                const std::vector<int> labels = [&] {
                    std::vector<int> l;
                    for (auto r : rows) l.push_back(meta.y[r]);
                    return l;
                }();
                losses.push_back(cross_entropy(gather_rows(logits, rows), labels));
            }
            const double n_env = static_cast<double>(losses.size());
            double mean = 0.0;
            for (double l : losses) mean += l;
            mean /= n_env;
            std::size_t ei = 0;
            for (const auto& [e, rows] : by_env) {
                const double dev = losses[ei++] - mean;
                out.value += dev * dev / n_env;
                const double coef = 2.0 * dev / n_env / static_cast<double>(rows.size());
                for (auto r : rows) {
                    const auto ri = static_cast<Eigen::Index>(r);
                    out.grad.row(ri) = coef * probs.row(ri);
                    out.grad(ri, meta.y[r]) -= coef;
                }
            }
            break;
        }
        case BaselineKind::Irmv1: {
            // Per env: g_e = d/dw mean CE(w * logits, y) at w = 1
            //              = mean_r (sum_k p_rk z_rk - z_{r,y_r}).
            const Matrix probs = softmax_rows(logits);
            for (const auto& [e, rows] : by_env) {
                const double ne = static_cast<double>(rows.size());
                double ge = 0.0;
                for (auto r : rows) {
                    const auto ri = static_cast<Eigen::Index>(r);
                    ge += probs.row(ri).dot(logits.row(ri)) - logits(ri, meta.y[r]);
                }
                ge /= ne;
                out.value += ge * ge;
                // d g_e / d z_rj = (p_rj (1 + z_rj - zbar_r) - [j == y_r]) / n_e
                for (auto r : rows) {
                    const auto ri = static_cast<Eigen::Index>(r);
                    const double zbar = probs.row(ri).dot(logits.row(ri));
                    Eigen::RowVectorXd d =
                        probs.row(ri).array() * (1.0 + logits.row(ri).array() - zbar);
                    d(meta.y[r]) -= 1.0;
                    out.grad.row(ri) = (2.0 * ge / ne) * d;
                }
            }
            break;
        }
        case BaselineKind::None:
        case BaselineKind::Erm:
            break;
    }
    out.unweighted = out.value;
    return out;
}

}  // namespace causalreg
