#include "causalreg/causal_graph.hpp"

#include <algorithm>
#include <deque>
#include <set>

#include "causalreg/errors.hpp"

namespace causalreg {

namespace {

struct RoleToken {
    NodeRole role;
    std::string_view token;
};

constexpr RoleToken kRoleTokens[] = {
    {NodeRole::CausalFeature, "causal_feature"},
    {NodeRole::ObservedFeature, "observed_feature"},
    {NodeRole::Label, "label"},
    {NodeRole::Attribute, "attribute"},
    {NodeRole::Environment, "environment"},
    {NodeRole::Confounder, "confounder"},
    {NodeRole::Selection, "selection"},
};

std::string join_names(const CausalDag& g, const std::vector<NodeId>& ids, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (i) {
            out += sep;
        }
        out += g.node(ids[i]).name;
    }
    return out;
}

bool is_reserved_name(std::string_view name) {
    return name == canonical_names::causal_feature || name == canonical_names::label ||
           name == canonical_names::observed_feature || name == canonical_names::environment;
}

}  // namespace

std::string_view to_string(NodeRole role) {
    for (const auto& rt : kRoleTokens) {
        if (rt.role == role) {
            return rt.token;
        }
    }
    return "unknown";
}

NodeRole parse_node_role(std::string_view token) {
    for (const auto& rt : kRoleTokens) {
        if (rt.token == token) {
            return rt.role;
        }
    }
    throw ValidationError("unknown node role: " + std::string(token));
}

// ---------------------------------------------------------------------------

NodeId CausalDag::add_node(std::string name, NodeRole role, bool observed) {
    if (name.empty()) {
        throw ValidationError("node name must be non-empty");
    }
    if (find(name)) {
        throw ValidationError("duplicate node name: " + name);
    }
    const NodeId id{nodes_.size()};
    nodes_.push_back(Node{id, std::move(name), role, observed});
    parents_.emplace_back();
    children_.emplace_back();
    return id;
}

void CausalDag::add_edge(NodeId parent, NodeId child) {
    check(parent);
    check(child);
    if (parent == child) {
        throw ValidationError("self-loop on node " + nodes_[parent.value].name);
    }
    if (has_edge(parent, child)) {
        throw ValidationError("duplicate edge " + nodes_[parent.value].name + " -> " + nodes_[child.value].name);
    }
    if (reaches(child, parent)) {
        throw ValidationError("edge " + nodes_[parent.value].name + " -> " + nodes_[child.value].name +
                              " would create a cycle");
    }
    parents_[child.value].push_back(parent);
    children_[parent.value].push_back(child);
    edges_.emplace_back(parent, child);
}

void CausalDag::add_edge(std::string_view parent, std::string_view child) {
    add_edge(id_of(parent), id_of(child));
}

const Node& CausalDag::node(NodeId id) const {
    check(id);
    return nodes_[id.value];
}

const std::vector<NodeId>& CausalDag::parents(NodeId id) const {
    check(id);
    return parents_[id.value];
}

const std::vector<NodeId>& CausalDag::children(NodeId id) const {
    check(id);
    return children_[id.value];
}

bool CausalDag::has_edge(NodeId parent, NodeId child) const {
    check(parent);
    check(child);
    const auto& ch = children_[parent.value];
    return std::find(ch.begin(), ch.end(), child) != ch.end();
}

std::optional<NodeId> CausalDag::find(std::string_view name) const {
    for (const auto& n : nodes_) {
        if (n.name == name) {
            return n.id;
        }
    }
    return std::nullopt;
}

NodeId CausalDag::id_of(std::string_view name) const {
    if (auto id = find(name)) {
        return *id;
    }
    throw LookupError("unknown node: " + std::string(name));
}

std::vector<NodeId> CausalDag::with_role(NodeRole role) const {
    std::vector<NodeId> out;
    for (const auto& n : nodes_) {
        if (n.role == role) {
            out.push_back(n.id);
        }
    }
    return out;
}

void CausalDag::validate_roles() const {
    const auto require_one = [this](NodeRole role) {
        const auto n = with_role(role).size();
        if (n != 1) {
            throw ValidationError("graph must have exactly one " + std::string(to_string(role)) + " node, found " +
                                  std::to_string(n));
        }
    };
    require_one(NodeRole::CausalFeature);
    require_one(NodeRole::Label);
    require_one(NodeRole::ObservedFeature);
    if (with_role(NodeRole::Environment).size() > 1) {
        throw ValidationError("graph must have at most one environment node");
    }
    for (const auto& n : nodes_) {
        switch (n.role) {
            case NodeRole::CausalFeature:
                if (n.observed) {
                    throw ValidationError("causal feature node " + n.name + " must be unobserved");
                }
                break;
            case NodeRole::Label:
            case NodeRole::ObservedFeature:
            case NodeRole::Attribute:
            case NodeRole::Environment:
                if (!n.observed) {
                    throw ValidationError(std::string(to_string(n.role)) + " node " + n.name + " must be observed");
                }
                break;
            case NodeRole::Confounder:
            case NodeRole::Selection:
                break;
        }
    }
}

NodeId CausalDag::causal_feature() const { return unique_role(NodeRole::CausalFeature); }
NodeId CausalDag::label() const { return unique_role(NodeRole::Label); }
NodeId CausalDag::observed_feature() const { return unique_role(NodeRole::ObservedFeature); }

std::optional<NodeId> CausalDag::environment() const {
    const auto ids = with_role(NodeRole::Environment);
    if (ids.empty()) {
        return std::nullopt;
    }
    return ids.front();
}

void CausalDag::check(NodeId id) const {
    if (id.value >= nodes_.size()) {
        throw LookupError("unknown node id " + std::to_string(id.value));
    }
}

bool CausalDag::reaches(NodeId from, NodeId to) const {
    std::vector<bool> seen(nodes_.size(), false);
    std::vector<NodeId> stack{from};
    while (!stack.empty()) {
        const NodeId cur = stack.back();
        stack.pop_back();
        if (cur == to) {
            return true;
        }
        if (seen[cur.value]) {
            continue;
        }
        seen[cur.value] = true;
        for (NodeId c : children_[cur.value]) {
            stack.push_back(c);
        }
    }
    return false;
}

NodeId CausalDag::unique_role(NodeRole role) const {
    const auto ids = with_role(role);
    if (ids.size() != 1) {
        throw ValidationError("expected exactly one " + std::string(to_string(role)) + " node");
    }
    return ids.front();
}

// ---------------------------------------------------------------------------

bool d_separated(const CausalDag& g, NodeId a, NodeId b, std::span<const NodeId> given) {
    const std::size_t n = g.size();
    (void)g.node(a);
    (void)g.node(b);
    if (a == b) {
        throw ValidationError("d-separation query needs two distinct nodes");
    }

    std::vector<bool> in_z(n, false);
    for (NodeId z : given) {
        (void)g.node(z);
        in_z[z.value] = true;
    }
    for (NodeId s : g.with_role(NodeRole::Selection)) {
        in_z[s.value] = true;
    }
    if (in_z[a.value] || in_z[b.value]) {
        throw ValidationError("query endpoints must not be conditioned on");
    }

    // Ancestors of Z (Z included): colliders in this set are open.
    std::vector<bool> anc(n, false);
    std::vector<NodeId> stack;
    for (std::size_t i = 0; i < n; ++i) {
        if (in_z[i]) {
            stack.push_back(NodeId{i});
        }
    }
    while (!stack.empty()) {
        const NodeId cur = stack.back();
        stack.pop_back();
        if (anc[cur.value]) {
            continue;
        }
        anc[cur.value] = true;
        for (NodeId p : g.parents(cur)) {
            stack.push_back(p);
        }
    }

    // Traverse (node, direction) states. `up` means the ball arrived from a
    // child, `down` that it arrived from a parent.
    enum Dir : int { up = 0, down = 1 };
    std::vector<bool> visited(2 * n, false);
    std::deque<std::pair<NodeId, Dir>> queue{{a, up}};
    while (!queue.empty()) {
        const auto [cur, dir] = queue.front();
        queue.pop_front();
        const std::size_t key = 2 * cur.value + dir;
        if (visited[key]) {
            continue;
        }
        visited[key] = true;
        const bool conditioned = in_z[cur.value];
        if (!conditioned && cur == b) {
            return false;
        }
        if (dir == up && !conditioned) {
            for (NodeId p : g.parents(cur)) {
                queue.emplace_back(p, up);
            }
            for (NodeId c : g.children(cur)) {
                queue.emplace_back(c, down);
            }
        } else if (dir == down) {
            if (!conditioned) {
                for (NodeId c : g.children(cur)) {
                    queue.emplace_back(c, down);
                }
            }
            if (anc[cur.value]) {
                for (NodeId p : g.parents(cur)) {
                    queue.emplace_back(p, up);
                }
            }
        }
    }
    return true;
}

// ---------------------------------------------------------------------------

std::string_view to_string(ShiftType shift) {
    switch (shift) {
        case ShiftType::Independent: return "independent";
        case ShiftType::Causal: return "causal";
        case ShiftType::Confounded: return "confounded";
        case ShiftType::Selected: return "selected";
    }
    return "unknown";
}

ShiftType parse_shift_type(std::string_view token) {
    if (token == "independent") return ShiftType::Independent;
    if (token == "causal") return ShiftType::Causal;
    if (token == "confounded") return ShiftType::Confounded;
    if (token == "selected") return ShiftType::Selected;
    throw ValidationError("unknown shift type: " + std::string(token));
}

std::string_view to_string(Orientation orientation) {
    return orientation == Orientation::Causal ? "causal" : "anti-causal";
}

Orientation parse_orientation(std::string_view token) {
    if (token == "causal") return Orientation::Causal;
    if (token == "anti-causal" || token == "anticausal") return Orientation::AntiCausal;
    throw ValidationError("unknown orientation: " + std::string(token));
}

void ShiftSpec::validate() const {
    std::set<std::string_view> seen;
    for (const auto& a : attributes) {
        if (a.name.empty()) {
            throw ValidationError("attribute name must be non-empty");
        }
        if (is_reserved_name(a.name)) {
            throw ValidationError("attribute name collides with a canonical node: " + a.name);
        }
        if (!seen.insert(a.name).second) {
            throw ValidationError("attribute names must be unique: " + a.name);
        }
    }
    if (e_xc_edge && !include_env) {
        throw ValidationError("e_xc_edge requires include_env");
    }
}

CausalDag build_canonical(const ShiftSpec& spec) {
    spec.validate();
    CausalDag g;
    const NodeId xc = g.add_node(std::string(canonical_names::causal_feature), NodeRole::CausalFeature, false);
    const NodeId y = g.add_node(std::string(canonical_names::label), NodeRole::Label, true);
    const NodeId x = g.add_node(std::string(canonical_names::observed_feature), NodeRole::ObservedFeature, true);
    std::optional<NodeId> env;
    if (spec.include_env) {
        env = g.add_node(std::string(canonical_names::environment), NodeRole::Environment, true);
    }

    if (spec.orientation == Orientation::Causal) {
        g.add_edge(xc, y);
    } else {
        g.add_edge(y, xc);
    }
    g.add_edge(xc, x);
    if (spec.e_xc_edge) {
        g.add_edge(*env, xc);
    }

    std::vector<NodeId> attrs;
    for (const auto& a : spec.attributes) {
        attrs.push_back(g.add_node(a.name, NodeRole::Attribute, true));
    }
    for (std::size_t i = 0; i < attrs.size(); ++i) {
        const NodeId attr = attrs[i];
        g.add_edge(attr, x);
        if (env) {
            g.add_edge(*env, attr);
        }
        switch (spec.attributes[i].shift) {
            case ShiftType::Independent:
                break;
            case ShiftType::Causal:
                g.add_edge(y, attr);
                break;
            case ShiftType::Confounded: {
                const NodeId c = g.add_node("C_" + spec.attributes[i].name, NodeRole::Confounder, false);
                g.add_edge(c, y);
                g.add_edge(c, attr);
                break;
            }
            case ShiftType::Selected: {
                const NodeId s = g.add_node("S_" + spec.attributes[i].name, NodeRole::Selection, false);
                g.add_edge(y, s);
                g.add_edge(attr, s);
                break;
            }
        }
    }
    return g;
}

// ---------------------------------------------------------------------------

bool ConstraintSet::contains(const IndependenceConstraint& c) const {
    return std::find(constraints.begin(), constraints.end(), c) != constraints.end();
}

std::string ConstraintSet::describe(const IndependenceConstraint& c) const {
    std::string out = graph.node(c.subject).name + " ⊥ " + graph.node(c.other).name;
    if (!c.given.empty()) {
        out += " | " + join_names(graph, c.given, ", ");
    }
    return out;
}

std::vector<std::string> ConstraintSet::given_names(const IndependenceConstraint& c) const {
    std::vector<std::string> out;
    for (NodeId id : c.given) {
        out.push_back(graph.node(id).name);
    }
    return out;
}

namespace {

// Calls fn(subset) for every subset of `pool` of size k, in lexicographic
// order of positions.
template <typename Fn>
void for_each_combination(const std::vector<NodeId>& pool, std::size_t k, Fn&& fn) {
    if (k > pool.size()) {
        return;
    }
    std::vector<std::size_t> idx(k);
    for (std::size_t i = 0; i < k; ++i) {
        idx[i] = i;
    }
    std::vector<NodeId> subset(k);
    while (true) {
        for (std::size_t i = 0; i < k; ++i) {
            subset[i] = pool[idx[i]];
        }
        fn(subset);
        std::size_t i = k;
        while (i > 0 && idx[i - 1] == pool.size() - k + (i - 1)) {
            --i;
        }
        if (i == 0) {
            return;
        }
        ++idx[i - 1];
        for (std::size_t j = i; j < k; ++j) {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

}  // namespace

ConstraintSet derive_constraints(const CausalDag& g, std::size_t max_cond_size) {
    g.validate_roles();
    const NodeId xc = g.causal_feature();
    const NodeId y = g.label();
    const NodeId x = g.observed_feature();
    const auto env = g.environment();

    ConstraintSet out{g, {}, {}};
    for (const auto& v : g.nodes()) {
        if (!v.observed || v.id == y || v.id == x || v.id == xc) {
            continue;
        }
        if (env && v.id == *env) {
            if (d_separated(g, xc, v.id, {})) {
                out.constraints.push_back({xc, v.id, {}});
            }
            continue;
        }
        std::vector<NodeId> pool;
        for (const auto& w : g.nodes()) {
            if (w.observed && w.id != v.id && w.id != x && w.id != xc) {
                pool.push_back(w.id);
            }
        }
        const std::size_t max_k = std::min(max_cond_size, pool.size());
        for (std::size_t k = 0; k <= max_k; ++k) {
            for_each_combination(pool, k, [&](const std::vector<NodeId>& z) {
                if (d_separated(g, xc, v.id, z)) {
                    out.constraints.push_back({xc, v.id, z});
                }
            });
        }
    }

    for (NodeId attr : g.with_role(NodeRole::Attribute)) {
        const IndependenceConstraint* best = nullptr;
        const auto rank = [&](const IndependenceConstraint& c) {
            const bool has_env = env && std::find(c.given.begin(), c.given.end(), *env) != c.given.end();
            return std::make_tuple(!has_env, c.given.size(), c.given);
        };
        for (const auto& c : out.constraints) {
            if (c.other != attr) {
                continue;
            }
            if (best == nullptr || rank(c) < rank(*best)) {
                best = &c;
            }
        }
        if (best) {
            out.selected.emplace(g.node(attr).name, *best);
        }
    }
    return out;
}

namespace {

std::string role_key(const CausalDag& g, NodeId id) {
    const Node& n = g.node(id);
    switch (n.role) {
        case NodeRole::Attribute: return "attr:" + n.name;
        case NodeRole::Label: return "label";
        case NodeRole::Environment: return "env";
        default: return std::string(to_string(n.role)) + ":" + n.name;
    }
}

std::pair<std::string, std::vector<std::string>> match_key(const ConstraintSet& s, const IndependenceConstraint& c) {
    std::vector<std::string> given;
    for (NodeId id : c.given) {
        given.push_back(role_key(s.graph, id));
    }
    std::sort(given.begin(), given.end());
    return {role_key(s.graph, c.other), std::move(given)};
}

std::set<std::string> attribute_names(const CausalDag& g) {
    std::set<std::string> names;
    for (NodeId id : g.with_role(NodeRole::Attribute)) {
        names.insert(g.node(id).name);
    }
    return names;
}

}  // namespace

std::vector<IndependenceConstraint> constraint_intersection(std::span<const ConstraintSet> sets) {
    if (sets.size() < 2) {
        throw ValidationError("constraint intersection needs at least two constraint sets");
    }
    const auto vocab = attribute_names(sets.front().graph);
    for (const auto& s : sets.subspan(1)) {
        if (attribute_names(s.graph) != vocab) {
            throw ValidationError("constraint sets are over different attribute vocabularies");
        }
    }

    std::vector<std::set<std::pair<std::string, std::vector<std::string>>>> keys;
    for (const auto& s : sets.subspan(1)) {
        auto& k = keys.emplace_back();
        for (const auto& c : s.constraints) {
            k.insert(match_key(s, c));
        }
    }

    std::vector<IndependenceConstraint> out;
    for (const auto& c : sets.front().constraints) {
        const auto key = match_key(sets.front(), c);
        const bool everywhere = std::all_of(keys.begin(), keys.end(), [&](const auto& k) { return k.contains(key); });
        if (everywhere) {
            out.push_back(c);
        }
    }
    return out;
}

}  // namespace causalreg
