#include "annak/csv.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "annak/common.hpp"

namespace annak {

WarningSink& global_warnings() {
    static WarningSink sink;
    return sink;
}

void warn(const std::string& msg) {
    global_warnings().emit(msg);
    std::fprintf(stderr, "warning: %s\n", msg.c_str());
}

int CsvTable::column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == name) return static_cast<int>(i);
    }
    return -1;
}

int CsvTable::require_column(const std::string& name) const {
    const int idx = column(name);
    if (idx < 0) throw input_error("missing required CSV column: " + name);
    return idx;
}

namespace {

std::vector<std::string> split_line(const std::string& line, std::size_t lineno,
                                    const std::string& origin) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    if (quoted) {
        throw input_error(origin + ":" + std::to_string(lineno) + ": unterminated quote");
    }
    fields.push_back(cur);
    return fields;
}

}  // namespace

CsvTable parse_csv(const std::string& text, const std::string& origin) {
    CsvTable table;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        auto fields = split_line(line, lineno, origin);
        if (table.header.empty()) {
            table.header = std::move(fields);
        } else {
            if (fields.size() != table.header.size()) {
                throw input_error(origin + ":" + std::to_string(lineno) + ": expected " +
                                  std::to_string(table.header.size()) + " fields, got " +
                                  std::to_string(fields.size()));
            }
            table.rows.push_back(std::move(fields));
        }
    }
    if (table.header.empty()) throw input_error(origin + ": empty CSV");
    return table;
}

CsvTable read_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw input_error("cannot open file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_csv(buf.str(), path);
}

double parse_double_field(const std::string& field, const std::string& context) {
    if (field.empty() || field == "NA" || field == "NaN" || field == "nan") return missing();
    double value = 0.0;
    const char* first = field.data();
    const char* last = first + field.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last) {
        throw input_error(context + ": not a number: '" + field + "'");
    }
    return value;
}

long parse_long_field(const std::string& field, const std::string& context) {
    long value = 0;
    const char* first = field.data();
    const char* last = first + field.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last) {
        throw input_error(context + ": not an integer: '" + field + "'");
    }
    return value;
}

std::string format_double(double v) {
    if (std::isnan(v)) return "NA";
    char buf[40];
    // %.17g round-trips; trim to the shortest representation that re-parses.
    for (int prec = 15; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
        double back = 0.0;
        std::from_chars(buf, buf + std::char_traits<char>::length(buf), back);
        if (back == v) break;
    }
    return buf;
}

CsvWriter::CsvWriter(const std::string& path) : out_(path, std::ios::binary) {
    if (!out_) throw input_error("cannot open output file: " + path);
}

std::string csv_join(const std::vector<std::string>& fields) {
    std::string line;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) line.push_back(',');
        const std::string& f = fields[i];
        if (f.find_first_of(",\"\n") != std::string::npos) {
            line.push_back('"');
            for (char c : f) {
                if (c == '"') line.push_back('"');
                line.push_back(c);
            }
            line.push_back('"');
        } else {
            line += f;
        }
    }
    line.push_back('\n');
    return line;
}

void CsvWriter::write_row(const std::vector<std::string>& fields) {
    const std::string line = csv_join(fields);
    out_ << line;
    mirror_ += line;
}

std::string CsvWriter::str() const { return mirror_; }

}  // namespace annak
