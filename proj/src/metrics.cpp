#include "causalreg/metrics.hpp"

#include <algorithm>
#include <utility>

#include "causalreg/errors.hpp"

namespace causalreg {

namespace {

struct Tally {
    std::size_t correct = 0;
    std::size_t total = 0;

    [[nodiscard]] double rate() const { return static_cast<double>(correct) / static_cast<double>(total); }
};

}  // namespace

EvalMetrics compute_metrics(std::span<const int> preds, std::span<const int> labels, std::span<const int> envs,
                            std::span<const int> group_attr) {
    const std::size_t n = preds.size();
    if (n == 0) {
        throw ValidationError("metrics on empty input");
    }
    if (labels.size() != n || (!envs.empty() && envs.size() != n) || (!group_attr.empty() && group_attr.size() != n)) {
        throw ValidationError("metrics inputs differ in length");
    }
    Tally overall;
    std::map<int, Tally> by_env;
    std::map<std::pair<int, int>, Tally> by_group;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t hit = preds[i] == labels[i] ? 1 : 0;
        overall.correct += hit;
        ++overall.total;
        if (!envs.empty()) {
            auto& t = by_env[envs[i]];
            t.correct += hit;
            ++t.total;
        }
        auto& g = by_group[{group_attr.empty() ? 0 : group_attr[i], labels[i]}];
        g.correct += hit;
        ++g.total;
    }
    EvalMetrics out;
    out.count = n;
    out.accuracy = overall.rate();
    for (const auto& [e, t] : by_env) {
        out.per_env[e] = t.rate();
    }
    out.worst_group = 1.0;
    for (const auto& [key, t] : by_group) {
        out.worst_group = std::min(out.worst_group, t.rate());
    }
    return out;
}

}  // namespace causalreg
