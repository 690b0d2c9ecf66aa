// csv.hpp — CSV emission: decimal, 17 significant digits, '\n' line endings
#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace nmqsd::csv {

std::string num(double v);
std::string num(int v);
std::string num(std::size_t v);

void header(std::ostream& os, const std::vector<std::string>& columns);

template <typename... Ts>
void row(std::ostream& os, const Ts&... values) {
    bool first = true;
    ((os << (first ? "" : ",") << num(values), first = false), ...);
    os << '\n';
}

void row(std::ostream& os, const std::vector<double>& values);

} // namespace nmqsd::csv
