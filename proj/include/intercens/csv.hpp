#pragma once

// Headered CSV input/output. "Inf" encodes +infinity. Numbers are written in
// shortest round-trip form so a dataset survives write-then-read unchanged.

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <istream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "intercens/core.hpp"
#include "intercens/errors.hpp"

namespace intercens::csv {

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> line_numbers;  // 1-based source line of each row

    std::optional<std::size_t> column(std::string_view name) const {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) return std::nullopt;
        return static_cast<std::size_t>(it - header.begin());
    }
};

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline std::vector<std::string> split_line(std::string_view line) {
    std::vector<std::string> out;
    std::string field;
    bool quoted = false;
    for (char c : line) {
        if (c == '"') {
            quoted = !quoted;
        } else if (c == ',' && !quoted) {
            out.emplace_back(trim(field));
            field.clear();
        } else {
            field.push_back(c);
        }
    }
    out.emplace_back(trim(field));
    return out;
}

inline Table read_table(std::istream& in) {
    Table t;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        auto fields = split_line(line);
        if (t.header.empty()) {
            t.header = std::move(fields);
            continue;
        }
        if (fields.size() != t.header.size()) {
            throw ParseError("expected " + std::to_string(t.header.size()) + " fields, found " +
                                 std::to_string(fields.size()),
                             lineno);
        }
        t.rows.push_back(std::move(fields));
        t.line_numbers.push_back(lineno);
    }
    if (t.header.empty()) throw ParseError("missing header row");
    return t;
}

inline Table read_table(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path.string());
    return read_table(in);
}

inline std::optional<double> parse_number(std::string_view s) {
    s = trim(s);
    if (s == "Inf" || s == "inf" || s == "Infinity" || s == "+Inf") return kInfinity;
    if (s == "-Inf" || s == "-inf") return -kInfinity;
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
    return v;
}

inline double require_number(std::string_view s, std::size_t line, std::string_view column) {
    if (auto v = parse_number(s)) return *v;
    throw ParseError("column '" + std::string(column) + "': not a number: '" + std::string(s) + "'", line);
}

inline std::string format_number(double v) {
    if (v == kInfinity) return "Inf";
    if (v == -kInfinity) return "-Inf";
    if (std::isnan(v)) return "NaN";
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

/// Fixed-precision rendering for human-facing tables.
inline std::string format_fixed(double v, int digits) {
    if (!std::isfinite(v)) return format_number(v);
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed, digits);
    return std::string(buf, ptr);
}

class Writer {
public:
    explicit Writer(std::vector<std::string> header) : columns_(header.size()) { row(header); }

    Writer& row(const std::vector<std::string>& fields) {
        for (std::size_t j = 0; j < fields.size(); ++j) {
            if (j > 0) out_ << ',';
            out_ << fields[j];
        }
        out_ << '\n';
        return *this;
    }

    std::string str() const { return out_.str(); }
    std::size_t columns() const { return columns_; }

private:
    std::ostringstream out_;
    std::size_t columns_;
};

/// Writes via a temporary sibling file and rename, so readers never observe
/// a partially written file.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write " + tmp.string());
        out << content;
        if (!out) throw Error("write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

/// One selected covariate: a numeric column, or an indicator "name=level".
struct CovariateSpec {
    std::string column;
    std::optional<double> level;

    static CovariateSpec parse(std::string_view spec) {
        const auto eq = spec.find('=');
        if (eq == std::string_view::npos) return {std::string(trim(spec)), std::nullopt};
        auto lv = parse_number(spec.substr(eq + 1));
        if (!lv) throw ParseError("bad indicator level in covariate '" + std::string(spec) + "'");
        return {std::string(trim(spec.substr(0, eq))), *lv};
    }

    std::string name() const { return level ? column + "=" + format_number(*level) : column; }
};

/// Builds a Dataset from a table with columns left, right, optional cens, and
/// covariates. When `covariates` is empty every other numeric column is used.
/// An explicit cens value wins over the endpoint rule.
inline Dataset dataset_from_table(const Table& t, const std::vector<std::string>& covariates = {},
                                  bool all_other_columns = true) {
    const auto lc = t.column("left");
    const auto rc = t.column("right");
    if (!lc || !rc) throw ParseError("dataset needs 'left' and 'right' columns");
    const auto cc = t.column("cens");

    std::vector<CovariateSpec> specs;
    if (!covariates.empty()) {
        for (const auto& c : covariates) specs.push_back(CovariateSpec::parse(c));
    } else if (all_other_columns) {
        for (std::size_t j = 0; j < t.header.size(); ++j) {
            if (j == *lc || j == *rc || (cc && j == *cc)) continue;
            specs.push_back({t.header[j], std::nullopt});
        }
    }
    std::vector<std::size_t> cols;
    std::vector<std::string> names;
    for (const auto& s : specs) {
        const auto c = t.column(s.column);
        if (!c) throw ParseError("unknown covariate column '" + s.column + "'");
        cols.push_back(*c);
        names.push_back(s.name());
    }

    std::vector<Observation> obs;
    obs.reserve(t.rows.size());
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto& row = t.rows[r];
        const auto line = t.line_numbers[r];
        const double left = require_number(row[*lc], line, "left");
        const double right = require_number(row[*rc], line, "right");
        std::vector<double> x(cols.size());
        for (std::size_t j = 0; j < cols.size(); ++j) {
            const double v = require_number(row[cols[j]], line, t.header[cols[j]]);
            x[j] = specs[j].level ? (v == *specs[j].level ? 1.0 : 0.0) : v;
        }
        try {
            if (cc && !row[*cc].empty()) {
                const auto kind = parse_censor_kind(row[*cc]);
                if (!kind) throw ParseError("unknown cens value '" + row[*cc] + "'", line);
                obs.push_back(Observation::make(left, right, std::move(x), *kind));
            } else {
                obs.push_back(Observation::make(left, right, std::move(x)));
            }
        } catch (const InvalidInterval& e) {
            throw ParseError(e.what(), line);
        }
    }
    return Dataset(std::move(obs), std::move(names));
}

inline Dataset read_dataset(std::istream& in, const std::vector<std::string>& covariates = {}) {
    return dataset_from_table(read_table(in), covariates);
}

inline Dataset read_dataset(const std::filesystem::path& path, const std::vector<std::string>& covariates = {}) {
    return dataset_from_table(read_table(path), covariates);
}

inline std::string write_dataset(const Dataset& d) {
    std::vector<std::string> header{"left", "right", "cens"};
    header.insert(header.end(), d.covariate_names.begin(), d.covariate_names.end());
    Writer w(header);
    for (const auto& o : d.observations) {
        std::vector<std::string> f{format_number(o.left), format_number(o.right), std::string(to_string(o.kind))};
        for (double x : o.covariates) f.push_back(format_number(x));
        w.row(f);
    }
    return w.str();
}

}  // namespace intercens::csv
