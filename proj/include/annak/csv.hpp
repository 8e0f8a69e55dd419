#pragma once

#include <cstddef>
#include <fstream>
#include <string>
#include <vector>

namespace annak {

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int column(const std::string& name) const;          // -1 when absent
    int require_column(const std::string& name) const;  // throws input_error
};

// Minimal RFC-ish CSV: comma separated, optional double quotes, no embedded
// newlines. Plenty for the tidy files this toolkit exchanges.
CsvTable read_csv(const std::string& path);
CsvTable parse_csv(const std::string& text, const std::string& origin = "<string>");

// "NA" and empty fields decode to NaN; everything else must parse fully.
double parse_double_field(const std::string& field, const std::string& context);
long parse_long_field(const std::string& field, const std::string& context);

// Shortest round-trip-exact representation; NaN encodes as "NA".
std::string format_double(double v);

class CsvWriter {
public:
    explicit CsvWriter(const std::string& path);
    void write_row(const std::vector<std::string>& fields);
    std::string str() const;  // in-memory mirror, used by determinism checks

private:
    std::ofstream out_;
    std::string mirror_;
};

std::string csv_join(const std::vector<std::string>& fields);

}  // namespace annak
