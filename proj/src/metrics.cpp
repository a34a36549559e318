#include "semf/metrics.hpp"

#include <cmath>
#include <limits>

#include "semf/errors.hpp"

namespace semf {

namespace {

void validateIntervalArrays(const Vector& lowers, const Vector& uppers) {
    if (lowers.size() != uppers.size() || lowers.size() == 0)
        throw DataError("interval metrics: empty or misaligned bounds");
    if (!lowers.allFinite() || !uppers.allFinite())
        throw DataError("interval metrics: non-finite bounds");
    for (Eigen::Index i = 0; i < lowers.size(); ++i)
        if (lowers[i] > uppers[i]) throw DataError("interval metrics: lower exceeds upper");
}

}  // namespace

double picp(const Vector& y, const Vector& lowers, const Vector& uppers) {
    validateIntervalArrays(lowers, uppers);
    if (y.size() != lowers.size()) throw DataError("picp: outcome length mismatch");
    if (!y.allFinite()) throw DataError("picp: non-finite outcomes");
    Eigen::Index covered = 0;
    for (Eigen::Index i = 0; i < y.size(); ++i)
        if (y[i] >= lowers[i] && y[i] <= uppers[i]) ++covered;
    return static_cast<double>(covered) / static_cast<double>(y.size());
}

double mpiw(const Vector& lowers, const Vector& uppers) {
    validateIntervalArrays(lowers, uppers);
    return (uppers - lowers).mean();
}

double nmpiw(const Vector& lowers, const Vector& uppers, double y_range_min, double y_range_max) {
    if (!(y_range_max > y_range_min)) throw DataError("nmpiw: outcome range is empty");
    return mpiw(lowers, uppers) / (y_range_max - y_range_min);
}

double crpsUniform(double y, double lower, double upper) {
    if (lower > upper) throw DataError("crpsUniform: lower exceeds upper");
    if (lower == upper) return std::abs(y - lower);  // point-mass limit
    const double width = upper - lower;
    if (y <= lower) return lower - y + width / 3.0;
    if (y >= upper) return y - upper + width / 3.0;
    const double a = y - lower;
    const double b = upper - y;
    return (a * a * a + b * b * b) / (3.0 * width * width);
}

double pinball(double y, double q, double tau) {
    if (!(tau > 0.0 && tau < 1.0)) throw ConfigError("pinball: tau must lie in (0, 1)");
    const double indicator = y <= q ? 1.0 : 0.0;
    return (y - q) * (tau - indicator);
}

double relativeDelta(double metric_semf, double metric_baseline) {
    if (metric_baseline == 0.0) throw NumericError("relativeDelta: baseline metric is zero");
    return (metric_semf - metric_baseline) / metric_baseline * 100.0;
}

MetricReport evaluateIntervals(const Vector& y, const Vector& lowers, const Vector& uppers,
                               double y_range_min, double y_range_max, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("evaluateIntervals: alpha must lie in (0, 1)");
    MetricReport report;
    report.picp = picp(y, lowers, uppers);
    report.mpiw = mpiw(lowers, uppers);
    report.nmpiw = nmpiw(lowers, uppers, y_range_min, y_range_max);
    report.cwr = report.nmpiw > 0.0 ? report.picp / report.nmpiw : 0.0;
    report.y_range_min = y_range_min;
    report.y_range_max = y_range_max;

    const double tau_low = alpha / 2.0;
    const double tau_high = 1.0 - alpha / 2.0;
    double crps_total = 0.0;
    double pinball_total = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        crps_total += crpsUniform(y[i], lowers[i], uppers[i]);
        pinball_total += 0.5 * (pinball(y[i], lowers[i], tau_low) + pinball(y[i], uppers[i], tau_high));
    }
    report.crps_mean = crps_total / static_cast<double>(y.size());
    report.pinball_mean = pinball_total / static_cast<double>(y.size());
    return report;
}

DeltaReport improvementDeltas(const MetricReport& semf_report, const MetricReport& baseline_report) {
    DeltaReport deltas;
    deltas.d_cwr = relativeDelta(semf_report.cwr, baseline_report.cwr);
    deltas.d_picp = relativeDelta(semf_report.picp, baseline_report.picp);
    // Lower is better for these three, so a reduction reports as positive.
    deltas.d_nmpiw = -relativeDelta(semf_report.nmpiw, baseline_report.nmpiw);
    deltas.d_crps = -relativeDelta(semf_report.crps_mean, baseline_report.crps_mean);
    deltas.d_pinball = -relativeDelta(semf_report.pinball_mean, baseline_report.pinball_mean);
    return deltas;
}

std::size_t selectBestConfig(const std::vector<DeltaReport>& candidates) {
    if (candidates.empty()) throw ConfigError("selectBestConfig: no candidates");
    const double picp_floors[] = {0.0, -5.0, -10.0};
    for (double floor : picp_floors) {
        std::size_t best = candidates.size();
        double best_cwr = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < candidates.size(); ++i) {
            const auto& c = candidates[i];
            if (c.d_cwr > 0.0 && c.d_picp > floor && c.d_cwr > best_cwr) {
                best = i;
                best_cwr = c.d_cwr;
            }
        }
        if (best < candidates.size()) return best;
    }
    throw ConfigError("selectBestConfig: no admissible configuration");
}

}  // namespace semf
