#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "semf/types.hpp"

namespace semf {

/// Improvement-oriented relative changes, in percent: positive is better for
/// every field (width, CRPS, and pinball changes are sign-flipped so that a
/// reduction reports as a positive delta).
struct DeltaReport {
    double d_cwr = 0.0;
    double d_nmpiw = 0.0;
    double d_crps = 0.0;
    double d_pinball = 0.0;
    double d_picp = 0.0;
};

struct MetricReport {
    double picp = 0.0;
    double mpiw = 0.0;
    double nmpiw = 0.0;
    double cwr = 0.0;
    double crps_mean = 0.0;
    double pinball_mean = 0.0;  // mean of losses at tau=alpha/2 (lower) and 1-alpha/2 (upper)
    double y_range_min = 0.0;   // normalization range, kept for audit
    double y_range_max = 0.0;
    std::optional<DeltaReport> deltas;
};

double picp(const Vector& y, const Vector& lowers, const Vector& uppers);
double mpiw(const Vector& lowers, const Vector& uppers);
double nmpiw(const Vector& lowers, const Vector& uppers, double y_range_min, double y_range_max);
double crpsUniform(double y, double lower, double upper);
double pinball(double y, double q, double tau);

/// Raw relative change in percent: (semf - baseline) / baseline * 100.
double relativeDelta(double metric_semf, double metric_baseline);

MetricReport evaluateIntervals(const Vector& y, const Vector& lowers, const Vector& uppers,
                               double y_range_min, double y_range_max, double alpha);

DeltaReport improvementDeltas(const MetricReport& semf_report, const MetricReport& baseline_report);

/// Picks the candidate with the largest d_cwr among those passing the
/// admission ladder: d_cwr > 0 with d_picp > 0, relaxed to d_picp > -5 and
/// then d_picp > -10 when earlier rungs are empty. Returns the index.
std::size_t selectBestConfig(const std::vector<DeltaReport>& candidates);

}  // namespace semf
