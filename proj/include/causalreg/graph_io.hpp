#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include <nlohmann/json.hpp>

#include "causalreg/causal_graph.hpp"

namespace causalreg {

// Graph files are line oriented:
//
//   # comment
//   node <name> role=<role> observed=<true|false>
//   edge <parent> <child>
//
// Shift specs are key-value lines:
//
//   attribute <name>=<independent|causal|confounded|selected>
//   e_xc_edge=<bool>
//   orientation=<causal|anti-causal>
//   include_env=<bool>

[[nodiscard]] CausalDag parse_graph(std::istream& in);
[[nodiscard]] ShiftSpec parse_shift_spec(std::istream& in);
void write_graph(std::ostream& out, const CausalDag& g);
void write_shift_spec(std::ostream& out, const ShiftSpec& spec);

/// Reads a graph file, or a shift spec realized through build_canonical.
/// The format is detected from the first non-comment line.
[[nodiscard]] CausalDag load_graph_or_spec(const std::filesystem::path& path);

/// {"subject":"X_c","other":"color","given":["Y","E"]}
[[nodiscard]] nlohmann::json constraint_to_json(const ConstraintSet& set, const IndependenceConstraint& c);
/// {"constraints":[...], "selected":{"<attr>":{...}}}
[[nodiscard]] nlohmann::json constraint_set_to_json(const ConstraintSet& set);
/// Inverse of constraint_to_json against the graph the set was derived from.
[[nodiscard]] IndependenceConstraint constraint_from_json(const CausalDag& g, const nlohmann::json& j);

}  // namespace causalreg
