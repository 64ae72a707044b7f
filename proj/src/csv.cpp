#include "dpg/csv.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <sstream>

#include "dpg/errors.hpp"

namespace dpg {

std::string csv_double(double v) {
    if (std::isnan(v)) return "nan";
    char buf[40];
    // %.17g round-trips any double; trim to the shortest form that does.
    for (int prec = 1; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
        if (std::strtod(buf, nullptr) == v) return buf;
    }
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string csv_int(std::int64_t v) { return std::to_string(v); }

CsvWriter::CsvWriter(const std::string& path, const std::string& schema,
                     const std::vector<std::string>& columns)
    : out_(path, std::ios::binary), width_(columns.size()) {
    if (!out_) throw error("cannot open for writing: " + path);
    out_ << "schema," << schema << "\n";
    for (std::size_t i = 0; i < columns.size(); ++i)
        out_ << columns[i] << (i + 1 == columns.size() ? "\n" : ",");
}

void CsvWriter::row(const std::vector<std::string>& fields) {
    if (fields.size() != width_) throw usage_error("csv row width mismatch");
    for (std::size_t i = 0; i < fields.size(); ++i)
        out_ << fields[i] << (i + 1 == fields.size() ? "\n" : ",");
}

void CsvWriter::flush() { out_.flush(); }

std::size_t CsvTable::column(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
        if (columns[i] == name) return i;
    throw schema_error("csv is missing column: " + name);
}

double CsvTable::cell_double(std::size_t row, std::size_t col) const {
    return std::strtod(rows.at(row).at(col).c_str(), nullptr);
}

std::int64_t CsvTable::cell_int(std::size_t row, std::size_t col) const {
    return std::strtoll(rows.at(row).at(col).c_str(), nullptr, 10);
}

CsvTable read_csv(const std::string& path, const std::string& expected_schema) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw error("cannot open for reading: " + path);

    auto split_line = [](const std::string& line) {
        std::vector<std::string> out;
        std::string cur;
        std::istringstream s(line);
        while (std::getline(s, cur, ',')) out.push_back(cur);
        if (!line.empty() && line.back() == ',') out.push_back("");
        return out;
    };

    CsvTable t;
    std::string line;
    if (!std::getline(in, line)) throw schema_error("empty csv: " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto first = split_line(line);
    if (first.size() != 2 || first[0] != "schema")
        throw schema_error("csv has no schema row: " + path);
    t.schema = first[1];
    if (t.schema != expected_schema)
        throw schema_error("csv schema '" + t.schema + "' does not match expected '" +
                           expected_schema + "' in " + path);

    if (!std::getline(in, line)) throw schema_error("csv has no header row: " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    t.columns = split_line(line);

    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = split_line(line);
        if (fields.size() != t.columns.size())
            throw schema_error("csv row width mismatch in " + path);
        t.rows.push_back(std::move(fields));
    }
    return t;
}

} // namespace dpg
