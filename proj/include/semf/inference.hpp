#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "semf/engine.hpp"
#include "semf/quantiles.hpp"
#include "semf/types.hpp"

namespace semf {

/// Two-sided intervals with point predictions, one row per input row. Values
/// are in whatever units the model works in (standardized during a run; the
/// harness inverse-transforms before reporting).
struct IntervalBatch {
    Vector point;
    Vector lower;
    Vector upper;
    double alpha = 0.05;
    int R_infer = 0;
    std::vector<Matrix> samples;  // per row, R_infer x R_infer draws; kept on request
};

/// Mean decoder output over R_infer latent draws for one row of the sources.
double predictPoint(const SemfModel& model, const std::vector<Matrix>& x_sources, int row,
                    int R_infer, std::mt19937_64& gen);

/// Two-stage MC intervals: R_infer latent draws, then R_infer outcome draws
/// around each decoded mean; bounds are the alpha/2 and 1-alpha/2 empirical
/// quantiles of the pooled samples. Rows use independent streams derived from
/// (seed, row), so results do not depend on evaluation order.
IntervalBatch predictIntervals(const SemfModel& model, const std::vector<Matrix>& x_sources,
                               int R_infer, double alpha, std::uint64_t seed,
                               bool keep_samples = false);

}  // namespace semf
