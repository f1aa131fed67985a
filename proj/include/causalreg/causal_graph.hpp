#pragma once

#include <compare>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace causalreg {

enum class NodeRole {
    CausalFeature,    // latent causal features of the label
    ObservedFeature,  // the observed input
    Label,
    Attribute,
    Environment,
    Confounder,
    Selection,  // implicitly conditioned on in every query
};

[[nodiscard]] std::string_view to_string(NodeRole role);
/// Accepts the snake_case tokens used by the graph file format.
[[nodiscard]] NodeRole parse_node_role(std::string_view token);

struct NodeId {
    std::size_t value{};
    friend auto operator<=>(const NodeId&, const NodeId&) = default;
};

struct Node {
    NodeId id;
    std::string name;
    NodeRole role;
    bool observed;
};

/// Directed acyclic graph with role-tagged nodes. Edges are checked on
/// insertion (no self-loops, duplicates or cycles); role invariants are
/// checked separately by validate_roles() so that role-free graphs can still
/// be queried for d-separation.
class CausalDag {
public:
    NodeId add_node(std::string name, NodeRole role, bool observed);
    void add_edge(NodeId parent, NodeId child);
    void add_edge(std::string_view parent, std::string_view child);

    [[nodiscard]] std::size_t size() const noexcept { return nodes_.size(); }
    [[nodiscard]] const std::vector<Node>& nodes() const noexcept { return nodes_; }
    [[nodiscard]] const std::vector<std::pair<NodeId, NodeId>>& edges() const noexcept { return edges_; }
    [[nodiscard]] const Node& node(NodeId id) const;
    [[nodiscard]] const std::vector<NodeId>& parents(NodeId id) const;
    [[nodiscard]] const std::vector<NodeId>& children(NodeId id) const;
    [[nodiscard]] bool has_edge(NodeId parent, NodeId child) const;

    [[nodiscard]] std::optional<NodeId> find(std::string_view name) const;
    [[nodiscard]] NodeId id_of(std::string_view name) const;
    [[nodiscard]] std::vector<NodeId> with_role(NodeRole role) const;

    /// Exactly one causal feature, label and observed feature; at most one
    /// environment; causal feature unobserved; label, features, attributes
    /// and environment observed.
    void validate_roles() const;

    [[nodiscard]] NodeId causal_feature() const;
    [[nodiscard]] NodeId label() const;
    [[nodiscard]] NodeId observed_feature() const;
    [[nodiscard]] std::optional<NodeId> environment() const;

private:
    void check(NodeId id) const;
    [[nodiscard]] bool reaches(NodeId from, NodeId to) const;
    [[nodiscard]] NodeId unique_role(NodeRole role) const;

    std::vector<Node> nodes_;
    std::vector<std::vector<NodeId>> parents_;
    std::vector<std::vector<NodeId>> children_;
    std::vector<std::pair<NodeId, NodeId>> edges_;
};

/// True iff every path between a and b is blocked given `given` plus all
/// Selection-role nodes. Reachability (Bayes-ball) formulation, linear in
/// the graph size.
[[nodiscard]] bool d_separated(const CausalDag& g, NodeId a, NodeId b, std::span<const NodeId> given);

// ---------------------------------------------------------------------------
// Canonical realizations

enum class ShiftType { Independent, Causal, Confounded, Selected };
enum class Orientation { Causal, AntiCausal };

[[nodiscard]] std::string_view to_string(ShiftType shift);
[[nodiscard]] ShiftType parse_shift_type(std::string_view token);
[[nodiscard]] std::string_view to_string(Orientation orientation);
[[nodiscard]] Orientation parse_orientation(std::string_view token);

struct AttributeShift {
    std::string name;
    ShiftType shift;
};

/// Declarative description of a data-generating process over the canonical
/// graph.
struct ShiftSpec {
    std::vector<AttributeShift> attributes;
    bool e_xc_edge = false;
    Orientation orientation = Orientation::Causal;
    bool include_env = true;

    void validate() const;
};

/// Node names used by build_canonical.
namespace canonical_names {
inline constexpr std::string_view causal_feature = "X_c";
inline constexpr std::string_view label = "Y";
inline constexpr std::string_view observed_feature = "X";
inline constexpr std::string_view environment = "E";
}  // namespace canonical_names

/// Realizes the canonical graph for `spec`. Node order is X_c, Y, X, [E],
/// attributes in spec order, then one auxiliary node per confounded
/// (C_<name>) or selected (S_<name>) attribute.
[[nodiscard]] CausalDag build_canonical(const ShiftSpec& spec);

// ---------------------------------------------------------------------------
// Constraint derivation

/// subject ⊥ other | given. `given` is kept sorted by node id.
struct IndependenceConstraint {
    NodeId subject;
    NodeId other;
    std::vector<NodeId> given;

    friend bool operator==(const IndependenceConstraint&, const IndependenceConstraint&) = default;
};

struct ConstraintSet {
    CausalDag graph;
    std::vector<IndependenceConstraint> constraints;
    /// attribute name -> the constraint the training penalty enforces.
    std::map<std::string, IndependenceConstraint> selected;

    [[nodiscard]] bool contains(const IndependenceConstraint& c) const;
    /// "X_c ⊥ color | Y, E"
    [[nodiscard]] std::string describe(const IndependenceConstraint& c) const;
    [[nodiscard]] std::vector<std::string> given_names(const IndependenceConstraint& c) const;
};

inline constexpr std::size_t kDefaultMaxCondSize = 2;

/// Phase I. For every observed node V other than the label and the observed
/// features, emits each conditioning set Z (|Z| <= max_cond_size, drawn from
/// the remaining observed nodes, label included) that d-separates the causal
/// feature from V, in increasing size. The environment node is only tested
/// unconditionally. The selected constraint per attribute prefers sets
/// containing the environment, then smaller sets, then lower node ids.
[[nodiscard]] ConstraintSet derive_constraints(const CausalDag& g, std::size_t max_cond_size = kDefaultMaxCondSize);

/// Constraints valid in every set. Constraints are matched across graphs by
/// the attribute they are about and the multiset of conditioning roles
/// (attributes matched by name). Returned in the order of `sets.front()`.
[[nodiscard]] std::vector<IndependenceConstraint> constraint_intersection(std::span<const ConstraintSet> sets);

}  // namespace causalreg
