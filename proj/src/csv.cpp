#include "rlab/csv.hpp"

#include <fstream>
#include <sstream>

#include "rlab/error.hpp"

namespace rlab {

int CsvTable::column(const std::string& name) const {
    for (size_t i = 0; i < header.size(); ++i)
        if (header[i] == name) return static_cast<int>(i);
    return -1;
}

int CsvTable::require_column(const std::string& name, const std::string& context) const {
    const int i = column(name);
    if (i < 0) throw DataError(context + ": missing required column '" + name + "'");
    return i;
}

namespace {

std::vector<std::string> parse_line(const std::string& line, std::istream& in) {
    std::vector<std::string> fields;
    std::string field;
    std::string buf = line;
    size_t i = 0;
    bool in_quotes = false;
    while (true) {
        if (i >= buf.size()) {
            if (in_quotes) {
                // Quoted field spans a newline.
                std::string next;
                if (!std::getline(in, next)) throw DataError("csv: unterminated quoted field");
                buf += "\n" + next;
                continue;
            }
            break;
        }
        const char c = buf[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < buf.size() && buf[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                field.push_back(c);
            }
        } else if (c == '"' && field.empty()) {
            in_quotes = true;
        } else if (c == ',') {
            fields.push_back(std::move(field));
            field.clear();
        } else {
            field.push_back(c);
        }
        ++i;
    }
    fields.push_back(std::move(field));
    return fields;
}

} // namespace

CsvTable read_csv(std::istream& in) {
    CsvTable t;
    std::string line;
    if (!std::getline(in, line)) throw DataError("csv: empty input");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    t.header = parse_line(line, in);
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue; // full-line comments
        auto fields = parse_line(line, in);
        if (fields.size() != t.header.size())
            throw DataError("csv: row with " + std::to_string(fields.size()) + " fields, header has " +
                            std::to_string(t.header.size()));
        t.rows.push_back(std::move(fields));
    }
    return t;
}

CsvTable read_csv_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("csv: cannot read " + path);
    return read_csv(in);
}

std::string csv_escape(const std::string& field) {
    if (field.find_first_of(",\"\n") == std::string::npos) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    out.push_back('"');
    return out;
}

void write_csv_row(std::ostream& out, const std::vector<std::string>& fields) {
    for (size_t i = 0; i < fields.size(); ++i) {
        if (i) out << ",";
        out << csv_escape(fields[i]);
    }
    out << "\n";
}

} // namespace rlab
