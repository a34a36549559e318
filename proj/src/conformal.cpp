#include "semf/conformal.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>

#include "semf/errors.hpp"

namespace semf {

Vector conformityScores(const Vector& lowers, const Vector& uppers, const Vector& y) {
    if (lowers.size() != uppers.size() || lowers.size() != y.size() || y.size() == 0)
        throw DataError("conformityScores: empty or misaligned inputs");
    if (!lowers.allFinite() || !uppers.allFinite() || !y.allFinite())
        throw DataError("conformityScores: non-finite inputs");
    Vector scores(y.size());
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        if (lowers[i] > uppers[i]) throw DataError("conformityScores: lower exceeds upper");
        scores[i] = std::max(lowers[i] - y[i], y[i] - uppers[i]);
    }
    return scores;
}

ConformalCalibrator calibrate(const Vector& scores, double alpha) {
    if (scores.size() == 0) throw DataError("calibrate: no conformity scores");
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("calibrate: alpha must lie in (0, 1)");
    if (!scores.allFinite()) throw DataError("calibrate: non-finite scores");

    ConformalCalibrator calibrator;
    calibrator.alpha = alpha;
    calibrator.n_calib = static_cast<int>(scores.size());
    calibrator.scores.assign(scores.data(), scores.data() + scores.size());
    std::sort(calibrator.scores.begin(), calibrator.scores.end());

    // The 1e-9 backoff keeps e.g. 0.9*20 from rounding up to index 19.
    const double position = (1.0 - alpha) * static_cast<double>(calibrator.n_calib + 1);
    const auto index = static_cast<long>(std::ceil(position - 1e-9));
    calibrator.q_hat = index > calibrator.n_calib
                           ? calibrator.scores.back()
                           : calibrator.scores[static_cast<std::size_t>(index - 1)];
    return calibrator;
}

std::pair<Vector, Vector> applyCalibration(const ConformalCalibrator& calibrator,
                                           const Vector& lowers, const Vector& uppers) {
    if (calibrator.n_calib == 0) throw DataError("applyCalibration: calibrator is empty");
    if (lowers.size() != uppers.size()) throw DataError("applyCalibration: misaligned bounds");
    Vector adj_lower = lowers.array() - calibrator.q_hat;
    Vector adj_upper = uppers.array() + calibrator.q_hat;
    for (Eigen::Index i = 0; i < adj_lower.size(); ++i) {
        if (adj_lower[i] > adj_upper[i]) {
            // A strongly negative correction can cross the bounds; collapse to
            // the midpoint rather than emit an inverted interval.
            const double mid = 0.5 * (adj_lower[i] + adj_upper[i]);
            adj_lower[i] = mid;
            adj_upper[i] = mid;
        }
    }
    return {std::move(adj_lower), std::move(adj_upper)};
}

}  // namespace semf
