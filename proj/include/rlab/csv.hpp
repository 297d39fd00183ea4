#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace rlab {

// Minimal CSV with RFC-style quoting for fields containing commas,
// quotes, or newlines.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int column(const std::string& name) const; // -1 when absent
    int require_column(const std::string& name, const std::string& context) const;
};

CsvTable read_csv(std::istream& in);
CsvTable read_csv_file(const std::string& path);

std::string csv_escape(const std::string& field);
void write_csv_row(std::ostream& out, const std::vector<std::string>& fields);

} // namespace rlab
