#pragma once

// Plain CSV: header row, comma separated, no quoting (no field ever holds a
// comma). Numbers are written with 17 significant digits so they read back
// exactly.

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "optistate/core/errors.hpp"

namespace optistate {

inline std::string format_number(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path + " for writing");
    f << text;
    if (!f) throw IoError("write failed: " + path);
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

class CsvWriter {
public:
    explicit CsvWriter(std::vector<std::string> header) : width_(header.size()) { line(header); }

    void row(const std::vector<std::string>& cells) {
        if (cells.size() != width_) throw ShapeError("csv: row width does not match the header");
        line(cells);
    }

    void row(const std::vector<double>& values) {
        std::vector<std::string> cells;
        cells.reserve(values.size());
        for (double v : values) cells.push_back(format_number(v));
        row(cells);
    }

    const std::string& text() const { return text_; }
    void save(const std::string& path) const { write_text_file(path, text_); }

private:
    void line(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i > 0) text_ += ',';
            text_ += cells[i];
        }
        text_ += '\n';
    }

    std::size_t width_;
    std::string text_;
};

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    /// Index of a named column, or -1.
    int find(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (header[i] == name) return static_cast<int>(i);
        }
        return -1;
    }

    std::vector<double> numbers(const std::string& name) const {
        const int c = find(name);
        if (c < 0) throw FormatError("csv: missing column '" + name + "'");
        std::vector<double> out;
        out.reserve(rows.size());
        for (const auto& r : rows) {
            const std::string& s = r[static_cast<std::size_t>(c)];
            std::size_t used = 0;
            double v = 0.0;
            try {
                v = std::stod(s, &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used != s.size() || s.empty()) throw FormatError("csv: column '" + name + "' holds '" + s + "'");
            out.push_back(v);
        }
        return out;
    }
};

inline CsvTable parse_csv(const std::string& text) {
    CsvTable t;
    std::istringstream in(text);
    std::string line;
    auto split = [](const std::string& l) {
        std::vector<std::string> cells;
        std::string cur;
        for (char ch : l) {
            if (ch == ',') {
                cells.push_back(cur);
                cur.clear();
            } else if (ch != '\r') {
                cur += ch;
            }
        }
        cells.push_back(cur);
        return cells;
    };
    if (!std::getline(in, line)) throw FormatError("csv: empty file");
    t.header = split(line);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto cells = split(line);
        if (cells.size() != t.header.size()) throw FormatError("csv: ragged row");
        t.rows.push_back(std::move(cells));
    }
    return t;
}

inline CsvTable read_csv(const std::string& path) { return parse_csv(read_text_file(path)); }

} // namespace optistate
