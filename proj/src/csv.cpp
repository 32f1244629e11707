#include "optbt/csv.hpp"

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "optbt/errors.hpp"

namespace optbt {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
        if (i == line.size() || line[i] == ',') {
            out.emplace_back(line.substr(start, i - start));
            start = i + 1;
        }
    }
    return out;
}

}  // namespace

CsvReader::CsvReader(const std::string& path, const std::vector<std::string>& expected_header)
    : path_(path), header_(expected_header) {
    std::ifstream in(path);
    if (!in.is_open()) throw IOError("cannot open " + path);
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (first) {
            first = false;
            auto cols = split_csv_line(line);
            if (cols != expected_header) {
                std::ostringstream want;
                for (std::size_t i = 0; i < expected_header.size(); ++i)
                    want << (i ? "," : "") << expected_header[i];
                throw ParseError(0, "header", path + ": expected header '" + want.str() + "', got '" + line + "'");
            }
            continue;
        }
        if (line.empty()) continue;
        lines_.push_back(std::move(line));
    }
    if (first) throw ParseError(0, "header", path + ": empty file");
}

bool CsvReader::next_row() {
    if (next_line_ >= lines_.size()) return false;
    ++row_;
    fields_ = split_csv_line(lines_[next_line_++]);
    if (fields_.size() != header_.size())
        throw ParseError(row_, "row",
                         path_ + ": expected " + std::to_string(header_.size()) + " fields, got " +
                             std::to_string(fields_.size()));
    return true;
}

void CsvReader::fail(std::size_t col, const std::string& detail) const {
    throw ParseError(row_, header_[col], path_ + ": " + detail);
}

double CsvReader::field_double(std::size_t col) const {
    const std::string& s = fields_[col];
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) fail(col, "not a number: '" + s + "'");
    return v;
}

long CsvReader::field_long(std::size_t col) const {
    const std::string& s = fields_[col];
    long v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) fail(col, "not an integer: '" + s + "'");
    return v;
}

Date CsvReader::field_date(std::size_t col) const {
    auto d = parse_iso_date(fields_[col]);
    if (!d) fail(col, "not an ISO date (YYYY-MM-DD): '" + fields_[col] + "'");
    return *d;
}

std::string format_double(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, ptr);
}

void write_file_atomic(const std::string& path, const std::string& contents) {
    namespace fs = std::filesystem;
    fs::path target(path);
    if (target.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(target.parent_path(), ec);
    }
    fs::path tmp = target;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out.is_open()) throw IOError("cannot open " + tmp.string() + " for writing");
        out << contents;
        if (!out.good()) throw IOError("write failed for " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) throw IOError("rename " + tmp.string() + " -> " + path + " failed: " + ec.message());
}

}  // namespace optbt
