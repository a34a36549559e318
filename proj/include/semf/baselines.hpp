#pragma once

#include <cstdint>

#include "semf/conformal.hpp"
#include "semf/dataset.hpp"
#include "semf/inference.hpp"
#include "semf/learners.hpp"
#include "semf/metrics.hpp"

namespace semf {

struct BaselineResult {
    QuantileRegressor model;
    ConformalCalibrator calibrator;
    IntervalBatch test_intervals;  // calibrated; point is the interval midpoint
    MetricReport report;           // evaluated in the dataset's own units
};

/// Quantile-regression comparison system: fits the family's quantile model at
/// (alpha/2, 1-alpha/2) on the train segment (early-stop segment as monitor
/// where the family uses one), calibrates on the validation segment, and
/// evaluates the calibrated intervals on the test segment.
BaselineResult runBaseline(const LearnerConfig& learners, const Dataset& dataset, double alpha,
                           std::uint64_t seed);

}  // namespace semf
