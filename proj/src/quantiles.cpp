#include "semf/quantiles.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>

#include "semf/errors.hpp"

namespace semf {

double empiricalQuantile(std::vector<double> values, double q) {
    if (values.empty()) throw DataError("empiricalQuantile: empty sample");
    if (!(q >= 0.0 && q <= 1.0)) throw ConfigError("empiricalQuantile: level must lie in [0, 1]");
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    if (n == 1) return values[0];
    const double rank = q * static_cast<double>(n - 1);
    const auto lo = static_cast<std::size_t>(std::floor(rank));
    const auto hi = std::min(lo + 1, n - 1);
    const double frac = rank - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
}

}  // namespace semf
