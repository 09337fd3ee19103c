#pragma once

// CSV tables with "#"-prefixed metadata lines. Numbers are written with
// std::to_chars (shortest round-trip form), so identical runs produce
// byte-identical files.

#include <charconv>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "nonadiab/error.hpp"

namespace nonadiab {

struct Table {
    std::vector<std::pair<std::string, std::string>> metadata;
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    std::size_t column(const std::string& name) const {
        for (std::size_t i = 0; i < columns.size(); ++i)
            if (columns[i] == name) return i;
        throw ConfigError("missing column '" + name + "'");
    }

    std::string meta(const std::string& key) const {
        for (const auto& [k, v] : metadata)
            if (k == key) return v;
        return {};
    }

    std::vector<double> numbers(const std::string& name) const;
};

inline std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline double parse_number(const std::string& s) {
    if (s == "nan") return std::nan("");
    if (s == "inf") return INFINITY;
    if (s == "-inf") return -INFINITY;
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) throw ConfigError("not a number: '" + s + "'");
    return v;
}

inline std::vector<double> Table::numbers(const std::string& name) const {
    const std::size_t c = column(name);
    std::vector<double> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(parse_number(r.at(c)));
    return out;
}

/// Row builder: numbers via format_number, text as is.
class RowBuilder {
public:
    RowBuilder& operator<<(double v) {
        cells_.push_back(format_number(v));
        return *this;
    }
    RowBuilder& operator<<(std::size_t v) {
        cells_.push_back(std::to_string(v));
        return *this;
    }
    RowBuilder& operator<<(int v) {
        cells_.push_back(std::to_string(v));
        return *this;
    }
    RowBuilder& operator<<(std::string v) {
        cells_.push_back(std::move(v));
        return *this;
    }
    std::vector<std::string> take() { return std::move(cells_); }

private:
    std::vector<std::string> cells_;
};

inline void write_csv(const std::filesystem::path& path, const Table& table) {
    std::ostringstream os;
    for (const auto& [k, v] : table.metadata) os << "# " << k << "=" << v << "\n";
    for (std::size_t i = 0; i < table.columns.size(); ++i) os << (i ? "," : "") << table.columns[i];
    os << "\n";
    for (const auto& row : table.rows) {
        for (std::size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << row[i];
        os << "\n";
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot write " + path.string());
    f << os.str();
}

inline Table read_csv(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot read " + path.string());
    Table t;
    std::string line;
    bool header = false;
    const auto split = [](const std::string& s) {
        std::vector<std::string> out;
        std::size_t start = 0;
        while (true) {
            const auto comma = s.find(',', start);
            out.push_back(s.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        return out;
    };
    while (std::getline(f, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line.rfind("# ", 0) == 0) {
            const auto eq = line.find('=');
            if (eq != std::string::npos) t.metadata.emplace_back(line.substr(2, eq - 2), line.substr(eq + 1));
            continue;
        }
        if (!header) {
            t.columns = split(line);
            header = true;
            continue;
        }
        auto cells = split(line);
        if (cells.size() != t.columns.size()) throw ConfigError(path.string() + ": ragged row");
        t.rows.push_back(std::move(cells));
    }
    if (!header) throw ConfigError(path.string() + ": no header line");
    return t;
}

}  // namespace nonadiab
