#pragma once

#include <string>
#include <vector>

#include "optbt/dates.hpp"

namespace optbt {

// Strict CSV: comma-separated, no quoting, header row required. All the
// file formats here are machine-written, so a forgiving parser would only
// hide data defects.
class CsvReader {
public:
    // Throws IOError if the file cannot be opened, ParseError if the header
    // does not contain exactly the expected column names in order.
    CsvReader(const std::string& path, const std::vector<std::string>& expected_header);

    // Advances to the next data row; false at EOF. Throws ParseError when a
    // row has the wrong field count.
    bool next_row();

    // Data row number (1 = first row after the header), for error messages.
    std::size_t row_number() const { return row_; }

    const std::string& field(std::size_t col) const { return fields_[col]; }
    double field_double(std::size_t col) const;
    long field_long(std::size_t col) const;
    Date field_date(std::size_t col) const;

private:
    [[noreturn]] void fail(std::size_t col, const std::string& detail) const;

    std::string path_;
    std::vector<std::string> header_;
    std::vector<std::string> lines_;
    std::size_t next_line_ = 0;
    std::size_t row_ = 0;
    std::vector<std::string> fields_;
};

// Full-precision double formatting (shortest round-trip form).
std::string format_double(double v);

// Write contents to a temporary file in the same directory, then rename over
// the target so readers never observe a partial file.
void write_file_atomic(const std::string& path, const std::string& contents);

}  // namespace optbt
