#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "lmmsel/model.hpp"

namespace lmmsel::cli {

/// Comma-separated table with a mandatory header row. Fields may be quoted
/// with double quotes ("" inside quotes is a literal quote).
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::size_t columns() const noexcept { return header.size(); }
};

CsvTable parse_csv(std::istream& in, const std::string& source);
CsvTable read_csv(const std::string& path);

/// Every cell parsed as a finite double; DataError names the offending cell.
Matrix numeric_matrix(const CsvTable& table, const std::string& source);

/// Every cell parsed as an integer.
std::vector<std::vector<long long>> integer_columns(const CsvTable& table, const std::string& source);

/// Single numeric column.
Vector read_vector(const std::string& path);

/// Shortest text that reads back to the same double (17 significant digits).
std::string format_double(double v);

/// Quotes a field when it contains a comma, quote or newline.
std::string csv_field(const std::string& text);

}  // namespace lmmsel::cli
