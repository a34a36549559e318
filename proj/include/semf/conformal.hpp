#pragma once

#include <utility>
#include <vector>

#include "semf/types.hpp"

namespace semf {

/// Split-conformal correction for two-sided intervals. The score of a row is
/// its worst boundary violation; the correction widens (or narrows, when the
/// source already overcovers) every interval symmetrically.
struct ConformalCalibrator {
    double q_hat = 0.0;
    double alpha = 0.0;
    int n_calib = 0;
    std::vector<double> scores;  // ascending, kept for audit
};

Vector conformityScores(const Vector& lowers, const Vector& uppers, const Vector& y);

ConformalCalibrator calibrate(const Vector& scores, double alpha);

std::pair<Vector, Vector> applyCalibration(const ConformalCalibrator& calibrator,
                                           const Vector& lowers, const Vector& uppers);

}  // namespace semf
