#include "spft/csv.hpp"

#include <charconv>
#include <stdexcept>

namespace spft {

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return {buf, res.ptr};
}

std::string CsvTable::str() const {
    std::string out;
    auto line = [&out](const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) out += ',';
            out += cells[i];
        }
        out += '\n';
    };
    line(header_);
    for (const Row& r : rows_) {
        if (r.cells_.size() != header_.size()) throw std::logic_error("csv: row width does not match header");
        line(r.cells_);
    }
    return out;
}

}  // namespace spft
