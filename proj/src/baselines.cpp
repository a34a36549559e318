#include "semf/baselines.hpp"

#include "semf/errors.hpp"
#include "semf/rng.hpp"

namespace semf {

BaselineResult runBaseline(const LearnerConfig& learners, const Dataset& dataset, double alpha,
                           std::uint64_t seed) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("runBaseline: alpha must lie in (0, 1)");
    const auto& split = dataset.split;
    if (split.train_idx.empty() || split.valid_idx.empty() || split.test_idx.empty())
        throw DataError("runBaseline: dataset must carry train, validation, and test segments");

    const Matrix x_train = dataset.featureRows(split.train_idx);
    const Vector y_train = dataset.outcomeRows(split.train_idx);
    const double tau_low = alpha / 2.0;
    const double tau_high = 1.0 - alpha / 2.0;

    BaselineResult result;
    if (familyUsesEarlyStopping(learners.family) && !split.early_stop_idx.empty()) {
        const Matrix x_monitor = dataset.featureRows(split.early_stop_idx);
        const Vector y_monitor = dataset.outcomeRows(split.early_stop_idx);
        result.model = fitQuantile(learners, x_train, y_train, tau_low, tau_high,
                                   rng::deriveSeed(seed, "baseline", 0), &x_monitor, &y_monitor);
    } else {
        result.model = fitQuantile(learners, x_train, y_train, tau_low, tau_high,
                                   rng::deriveSeed(seed, "baseline", 0));
    }

    const Matrix x_valid = dataset.featureRows(split.valid_idx);
    const auto [valid_lower, valid_upper] = result.model.predict(x_valid);
    const Vector scores =
        conformityScores(valid_lower, valid_upper, dataset.outcomeRows(split.valid_idx));
    result.calibrator = calibrate(scores, alpha);

    const Matrix x_test = dataset.featureRows(split.test_idx);
    const auto [test_lower, test_upper] = result.model.predict(x_test);
    auto [adj_lower, adj_upper] = applyCalibration(result.calibrator, test_lower, test_upper);

    result.test_intervals.alpha = alpha;
    result.test_intervals.R_infer = 0;
    result.test_intervals.point = 0.5 * (adj_lower + adj_upper);
    result.test_intervals.lower = std::move(adj_lower);
    result.test_intervals.upper = std::move(adj_upper);

    const Vector y_test = dataset.outcomeRows(split.test_idx);
    result.report = evaluateIntervals(y_test, result.test_intervals.lower,
                                      result.test_intervals.upper, dataset.outcome.minCoeff(),
                                      dataset.outcome.maxCoeff(), alpha);
    return result;
}

}  // namespace semf
