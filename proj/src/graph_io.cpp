#include "causalreg/graph_io.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <vector>

#include "causalreg/errors.hpp"

namespace causalreg {

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::string strip_comment(const std::string& line) {
    return trim(line.substr(0, line.find('#')));
}

std::vector<std::string> split_ws(const std::string& s) {
    std::istringstream is(s);
    std::vector<std::string> out;
    for (std::string tok; is >> tok;) {
        out.push_back(tok);
    }
    return out;
}

bool parse_bool(std::string_view v, std::size_t line, std::string_view key) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ParseError(line, std::string(key) + ": expected a boolean, got '" + std::string(v) + "'");
}

std::pair<std::string, std::string> split_kv(const std::string& tok, std::size_t line) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) {
        throw ParseError(line, "expected key=value, got '" + tok + "'");
    }
    return {trim(std::string_view(tok).substr(0, eq)), trim(std::string_view(tok).substr(eq + 1))};
}

}  // namespace

CausalDag parse_graph(std::istream& in) {
    CausalDag g;
    std::size_t lineno = 0;
    for (std::string raw; std::getline(in, raw);) {
        ++lineno;
        const auto line = strip_comment(raw);
        if (line.empty()) {
            continue;
        }
        const auto toks = split_ws(line);
        try {
            if (toks[0] == "node") {
                if (toks.size() < 2) {
                    throw ParseError(lineno, "node: missing name");
                }
                std::optional<NodeRole> role;
                bool observed = true;
                for (std::size_t i = 2; i < toks.size(); ++i) {
                    auto [k, v] = split_kv(toks[i], lineno);
                    if (k == "role") {
                        role = parse_node_role(v);
                    } else if (k == "observed") {
                        observed = parse_bool(v, lineno, k);
                    } else {
                        throw ParseError(lineno, "node: unknown key '" + k + "'");
                    }
                }
                if (!role) {
                    throw ParseError(lineno, "node " + toks[1] + ": missing role=");
                }
                g.add_node(toks[1], *role, observed);
            } else if (toks[0] == "edge") {
                if (toks.size() != 3) {
                    throw ParseError(lineno, "edge: expected 'edge <parent> <child>'");
                }
                g.add_edge(toks[1], toks[2]);
            } else {
                throw ParseError(lineno, "unknown directive '" + toks[0] + "'");
            }
        } catch (const ParseError&) {
            throw;
        } catch (const std::exception& e) {
            throw ParseError(lineno, e.what());
        }
    }
    return g;
}

ShiftSpec parse_shift_spec(std::istream& in) {
    ShiftSpec spec;
    std::size_t lineno = 0;
    for (std::string raw; std::getline(in, raw);) {
        ++lineno;
        const auto line = strip_comment(raw);
        if (line.empty()) {
            continue;
        }
        try {
            if (line.rfind("attribute", 0) == 0 && line.size() > 9 && (line[9] == ' ' || line[9] == '\t')) {
                auto [name, shift] = split_kv(trim(std::string_view(line).substr(10)), lineno);
                spec.attributes.push_back({name, parse_shift_type(shift)});
                continue;
            }
            auto [k, v] = split_kv(line, lineno);
            if (k == "e_xc_edge") {
                spec.e_xc_edge = parse_bool(v, lineno, k);
            } else if (k == "orientation") {
                spec.orientation = parse_orientation(v);
            } else if (k == "include_env") {
                spec.include_env = parse_bool(v, lineno, k);
            } else {
                throw ParseError(lineno, "unknown key '" + k + "'");
            }
        } catch (const ParseError&) {
            throw;
        } catch (const std::exception& e) {
            throw ParseError(lineno, e.what());
        }
    }
    spec.validate();
    return spec;
}

void write_graph(std::ostream& out, const CausalDag& g) {
    for (const auto& n : g.nodes()) {
        out << "node " << n.name << " role=" << to_string(n.role) << " observed=" << (n.observed ? "true" : "false")
            << '\n';
    }
    for (const auto& [p, c] : g.edges()) {
        out << "edge " << g.node(p).name << ' ' << g.node(c).name << '\n';
    }
}

void write_shift_spec(std::ostream& out, const ShiftSpec& spec) {
    for (const auto& a : spec.attributes) {
        out << "attribute " << a.name << '=' << to_string(a.shift) << '\n';
    }
    out << "e_xc_edge=" << (spec.e_xc_edge ? "true" : "false") << '\n';
    out << "orientation=" << to_string(spec.orientation) << '\n';
    out << "include_env=" << (spec.include_env ? "true" : "false") << '\n';
}

CausalDag load_graph_or_spec(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ParseError(0, "cannot open " + path.string());
    }
    std::stringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();

    bool is_graph = false;
    bool has_content = false;
    std::istringstream scan(text);
    for (std::string raw; std::getline(scan, raw);) {
        const auto line = strip_comment(raw);
        if (line.empty()) {
            continue;
        }
        has_content = true;
        is_graph = line.rfind("node ", 0) == 0 || line.rfind("edge ", 0) == 0;
        break;
    }
    if (!has_content) {
        throw ParseError(0, path.string() + " has no graph or shift spec");
    }
    std::istringstream body(text);
    if (is_graph) {
        return parse_graph(body);
    }
    return build_canonical(parse_shift_spec(body));
}

nlohmann::json constraint_to_json(const ConstraintSet& set, const IndependenceConstraint& c) {
    return nlohmann::json{
        {"subject", set.graph.node(c.subject).name},
        {"other", set.graph.node(c.other).name},
        {"given", set.given_names(c)},
    };
}

nlohmann::json constraint_set_to_json(const ConstraintSet& set) {
    nlohmann::json list = nlohmann::json::array();
    for (const auto& c : set.constraints) {
        list.push_back(constraint_to_json(set, c));
    }
    nlohmann::json selected = nlohmann::json::object();
    for (const auto& [attr, c] : set.selected) {
        selected[attr] = constraint_to_json(set, c);
    }
    return {{"constraints", std::move(list)}, {"selected", std::move(selected)}};
}

IndependenceConstraint constraint_from_json(const CausalDag& g, const nlohmann::json& j) {
    IndependenceConstraint c;
    try {
        c.subject = g.id_of(j.at("subject").get<std::string>());
        c.other = g.id_of(j.at("other").get<std::string>());
        for (const auto& name : j.at("given")) {
            c.given.push_back(g.id_of(name.get<std::string>()));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(0, std::string("constraint json: ") + e.what());
    }
    std::sort(c.given.begin(), c.given.end());
    return c;
}

}  // namespace causalreg
