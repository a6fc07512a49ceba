#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace spft {

/// Shortest decimal representation that round-trips to the same double.
[[nodiscard]] std::string format_double(double v);

/// Comma-separated table with a header row. Fields are written verbatim; the
/// writers in this project only emit identifiers and numbers, so no quoting.
class CsvTable {
public:
    explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

    class Row {
    public:
        Row& add(std::string_view s) {
            cells_.emplace_back(s);
            return *this;
        }
        Row& add(double v) {
            cells_.push_back(format_double(v));
            return *this;
        }
        Row& add(long long v) {
            cells_.push_back(std::to_string(v));
            return *this;
        }
        Row& add(unsigned long long v) {
            cells_.push_back(std::to_string(v));
            return *this;
        }
        Row& add(int v) { return add(static_cast<long long>(v)); }
        Row& add(unsigned long v) { return add(static_cast<unsigned long long>(v)); }
        Row& add(bool v) { return add(v ? std::string_view("1") : std::string_view("0")); }
        Row& add(const char* s) { return add(std::string_view(s)); }
        Row& add(const std::string& s) { return add(std::string_view(s)); }

    private:
        friend class CsvTable;
        std::vector<std::string> cells_;
    };

    Row& row() { return rows_.emplace_back(); }
    [[nodiscard]] std::size_t size() const noexcept { return rows_.size(); }
    [[nodiscard]] std::string str() const;

private:
    std::vector<std::string> header_;
    std::vector<Row> rows_;
};

}  // namespace spft
