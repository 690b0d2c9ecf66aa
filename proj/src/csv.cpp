#include "nmqsd/csv.hpp"

#include <cstdio>

namespace nmqsd::csv {

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string num(int v) { return std::to_string(v); }
std::string num(std::size_t v) { return std::to_string(v); }

void header(std::ostream& os, const std::vector<std::string>& columns) {
    for (std::size_t i = 0; i < columns.size(); ++i) os << (i ? "," : "") << columns[i];
    os << '\n';
}

void row(std::ostream& os, const std::vector<double>& values) {
    for (std::size_t i = 0; i < values.size(); ++i) os << (i ? "," : "") << num(values[i]);
    os << '\n';
}

} // namespace nmqsd::csv
