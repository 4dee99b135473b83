#include "lmmsel/cli/csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>

#include <fmt/format.h>

namespace lmmsel::cli {

namespace {

std::vector<std::string> split_record(std::istream& in, std::string& line, bool& ok) {
    std::vector<std::string> fields;
    ok = static_cast<bool>(std::getline(in, line));
    if (!ok) return fields;
    std::string field;
    bool quoted = false;
    for (std::size_t i = 0;; ++i) {
        if (i == line.size()) {
            if (!quoted) break;
            // Quoted field spanning lines.
            std::string next;
            if (!std::getline(in, next)) throw DataError("unterminated quoted field");
            field += '\n';
            line = next;
            i = static_cast<std::size_t>(-1);
            continue;
        }
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(field));
            field.clear();
        } else if (c != '\r') {
            field += c;
        }
    }
    fields.push_back(std::move(field));
    return fields;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

std::string cell_ref(const std::string& source, std::size_t row, std::size_t col) {
    return fmt::format("{} (row {}, column {})", source, row + 2, col + 1);
}

}  // namespace

CsvTable parse_csv(std::istream& in, const std::string& source) {
    CsvTable t;
    std::string line;
    bool ok = false;
    try {
        t.header = split_record(in, line, ok);
        if (!ok) throw DataError(source + ": empty file (a header row is required)");
        for (auto& h : t.header) h = trim(h);
        for (;;) {
            auto fields = split_record(in, line, ok);
            if (!ok) break;
            if (fields.size() == 1 && trim(fields[0]).empty()) continue;  // blank line
            if (fields.size() != t.header.size())
                throw DataError(fmt::format("{}: row {} has {} fields, header has {}", source, t.rows.size() + 2,
                                            fields.size(), t.header.size()));
            t.rows.push_back(std::move(fields));
        }
    } catch (const DataError& e) {
        const std::string what = e.what();
        if (what.rfind(source, 0) == 0) throw;
        throw DataError(source + ": " + what);
    }
    if (t.rows.empty()) throw DataError(source + ": no data rows");
    return t;
}

CsvTable read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    return parse_csv(in, path);
}

Matrix numeric_matrix(const CsvTable& table, const std::string& source) {
    Matrix m(static_cast<Eigen::Index>(table.rows.size()), static_cast<Eigen::Index>(table.columns()));
    for (std::size_t i = 0; i < table.rows.size(); ++i)
        for (std::size_t j = 0; j < table.columns(); ++j) {
            const std::string cell = trim(table.rows[i][j]);
            double v = 0.0;
            const auto [end, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
            if (cell.empty() || ec != std::errc() || end != cell.data() + cell.size() || !std::isfinite(v))
                throw DataError("non-numeric or non-finite value '" + cell + "' in " + cell_ref(source, i, j));
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
        }
    return m;
}

std::vector<std::vector<long long>> integer_columns(const CsvTable& table, const std::string& source) {
    std::vector<std::vector<long long>> cols(table.columns(), std::vector<long long>(table.rows.size()));
    for (std::size_t i = 0; i < table.rows.size(); ++i)
        for (std::size_t j = 0; j < table.columns(); ++j) {
            const std::string cell = trim(table.rows[i][j]);
            long long v = 0;
            const auto [end, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
            if (cell.empty() || ec != std::errc() || end != cell.data() + cell.size())
                throw DataError("non-integer value '" + cell + "' in " + cell_ref(source, i, j));
            cols[j][i] = v;
        }
    return cols;
}

Vector read_vector(const std::string& path) {
    const CsvTable t = read_csv(path);
    if (t.columns() != 1) throw DataError(path + ": expected exactly one column, found " + std::to_string(t.columns()));
    return numeric_matrix(t, path).col(0);
}

std::string format_double(double v) { return fmt::format("{:.17g}", v); }

std::string csv_field(const std::string& text) {
    if (text.find_first_of(",\"\n\r") == std::string::npos) return text;
    std::string out = "\"";
    for (char c : text) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + '"';
}

}  // namespace lmmsel::cli
