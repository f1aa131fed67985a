#include "causalreg/dataset_io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "causalreg/errors.hpp"

namespace causalreg {

namespace {

std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) {
            return out;
        }
        start = pos + 1;
    }
}

int parse_int(std::string_view s, std::size_t line, std::string_view column) {
    int v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) {
        throw ParseError(line, "column " + std::string(column) + ": expected an integer, got '" + std::string(s) + "'");
    }
    return v;
}

double parse_real(std::string_view s, std::size_t line, std::string_view column) {
    // from_chars for double is not available in every libstdc++ we target.
    const std::string buf(s);
    char* end = nullptr;
    const double v = std::strtod(buf.c_str(), &end);
    if (buf.empty() || end != buf.c_str() + buf.size()) {
        throw ParseError(line, "column " + std::string(column) + ": expected a real, got '" + buf + "'");
    }
    return v;
}

}  // namespace

void write_csv(std::ostream& out, const TabularDataset& ds) {
    const auto attrs = ds.attribute_names();
    out << "env,y";
    for (const auto& a : attrs) {
        out << ',' << a;
    }
    for (std::size_t j = 0; j < ds.feature_dim; ++j) {
        out << ",x" << j;
    }
    out << '\n';
    char buf[32];
    for (const auto& env : ds.environments) {
        for (const auto& row : env.rows) {
            out << env.env_id << ',' << row.y;
            for (const auto& a : attrs) {
                out << ',' << row.attrs.at(a);
            }
            for (double v : row.x) {
                std::snprintf(buf, sizeof buf, "%.17g", v);
                out << ',' << buf;
            }
            out << '\n';
        }
    }
}

void export_csv(const TabularDataset& ds, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw ParseError(0, "cannot write " + path.string());
    }
    write_csv(out, ds);
}

TabularDataset read_csv(std::istream& in, std::optional<int> n_classes) {
    std::string line;
    if (!std::getline(in, line)) {
        throw ParseError(1, "empty csv");
    }
    if (!line.empty() && line.back() == '\r') {
        line.pop_back();
    }
    const auto header = split_commas(line);
    if (header.size() < 2 || header[0] != "env" || header[1] != "y") {
        throw ParseError(1, "header must start with env,y");
    }
    std::vector<std::string> attrs;
    std::size_t col = 2;
    while (col < header.size() && !(header[col].size() > 1 && header[col][0] == 'x' &&
                                    std::all_of(header[col].begin() + 1, header[col].end(), [](unsigned char ch) { return std::isdigit(ch) != 0; }))) {
        attrs.emplace_back(header[col]);
        ++col;
    }
    const std::size_t feature_dim = header.size() - col;
    for (std::size_t j = 0; j < feature_dim; ++j) {
        if (header[col + j] != "x" + std::to_string(j)) {
            throw ParseError(1, "feature columns must be x0..x" + std::to_string(feature_dim - 1));
        }
    }

    TabularDataset ds{{}, 0, feature_dim};
    int max_y = -1;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        const auto fields = split_commas(line);
        if (fields.size() != header.size()) {
            throw ParseError(lineno, "expected " + std::to_string(header.size()) + " fields, got " +
                                         std::to_string(fields.size()));
        }
        const int env_id = parse_int(fields[0], lineno, "env");
        Row row;
        row.y = parse_int(fields[1], lineno, "y");
        if (row.y < 0) {
            throw ParseError(lineno, "negative label");
        }
        for (std::size_t a = 0; a < attrs.size(); ++a) {
            row.attrs.emplace(attrs[a], parse_int(fields[2 + a], lineno, attrs[a]));
        }
        row.x.reserve(feature_dim);
        for (std::size_t j = 0; j < feature_dim; ++j) {
            row.x.push_back(parse_real(fields[col + j], lineno, header[col + j]));
        }
        max_y = std::max(max_y, row.y);
        auto it = std::find_if(ds.environments.begin(), ds.environments.end(),
                               [&](const Environment& e) { return e.env_id == env_id; });
        if (it == ds.environments.end()) {
            ds.environments.push_back(Environment{env_id, {}});
            it = std::prev(ds.environments.end());
        }
        it->rows.push_back(std::move(row));
    }
    ds.n_classes = n_classes.value_or(max_y + 1);
    if (max_y >= ds.n_classes) {
        throw ParseError(0, "label " + std::to_string(max_y) + " out of range for n_classes " +
                                std::to_string(ds.n_classes));
    }
    return ds;
}

TabularDataset import_csv(const std::filesystem::path& path, std::optional<int> n_classes) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ParseError(0, "cannot open " + path.string());
    }
    return read_csv(in, n_classes);
}

}  // namespace causalreg
