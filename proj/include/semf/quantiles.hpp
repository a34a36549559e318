#pragma once

#include <vector>

namespace semf {

/// Empirical quantile with linear interpolation at rank q*(n-1), matching the
/// usual "linear" convention. q must lie in [0, 1]; values need not be sorted.
double empiricalQuantile(std::vector<double> values, double q);

}  // namespace semf
