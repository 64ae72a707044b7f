#ifndef DPG_CSV_HPP
#define DPG_CSV_HPP

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

namespace dpg {

// Deterministic number formatting for CSV cells: shortest round-trippable
// representation of a double, fixed across runs.
std::string csv_double(double v);
std::string csv_int(std::int64_t v);

// Comma-separated files whose first record is `schema,<name>` and whose
// second record is the column header. No field in this project ever needs
// quoting (numbers and bare identifiers only).
class CsvWriter {
public:
    CsvWriter(const std::string& path, const std::string& schema,
              const std::vector<std::string>& columns);

    void row(const std::vector<std::string>& fields);
    void flush();

private:
    std::ofstream out_;
    std::size_t width_;
};

struct CsvTable {
    std::string schema;
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    // Index of a column; throws schema_error when absent.
    std::size_t column(const std::string& name) const;
    double cell_double(std::size_t row, std::size_t col) const;
    std::int64_t cell_int(std::size_t row, std::size_t col) const;
};

// Reads and validates against the expected schema name.
CsvTable read_csv(const std::string& path, const std::string& expected_schema);

} // namespace dpg

#endif
