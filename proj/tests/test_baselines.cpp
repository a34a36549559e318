#include "doctest.h"
#include "semf/baselines.hpp"
#include "semf/errors.hpp"
#include "semf/simulation.hpp"

using namespace semf;

namespace {

Dataset baselineDataset(std::uint64_t seed, bool carve) {
    SimSpec spec;
    spec.n = 300;
    spec.k = 2;
    spec.seed = seed;
    Dataset ds = generate(spec);
    ds.split = makeSplit(ds.numRows(), {}, seed, carve);
    return ds;
}

}  // namespace

TEST_CASE("ridge baseline produces calibrated test intervals") {
    const Dataset ds = baselineDataset(1, false);
    LearnerConfig learners;
    learners.family = LearnerFamily::Ridge;
    const BaselineResult result = runBaseline(learners, ds, 0.05, 3);

    CHECK(result.model.fitted());
    CHECK(result.model.tauLow() == doctest::Approx(0.025));
    CHECK(result.model.tauHigh() == doctest::Approx(0.975));
    CHECK(result.calibrator.n_calib == static_cast<int>(ds.split.valid_idx.size()));

    const auto n_test = static_cast<Eigen::Index>(ds.split.test_idx.size());
    REQUIRE(result.test_intervals.lower.size() == n_test);
    CHECK((result.test_intervals.upper - result.test_intervals.lower).minCoeff() >= 0.0);
    const Vector mid = 0.5 * (result.test_intervals.lower + result.test_intervals.upper);
    CHECK((result.test_intervals.point - mid).cwiseAbs().maxCoeff() < 1e-12);

    CHECK(result.report.picp >= 0.7);  // conformalized; small test set keeps the band loose
    CHECK(result.report.picp <= 1.0);
    CHECK(result.report.mpiw > 0.0);
}

TEST_CASE("boosted baseline consumes the early-stop monitor segment") {
    const Dataset ds = baselineDataset(2, true);
    REQUIRE_FALSE(ds.split.early_stop_idx.empty());
    LearnerConfig learners;
    learners.family = LearnerFamily::BoostedTrees;
    learners.trees.n_trees = 25;
    learners.trees.max_depth = 3;
    const BaselineResult result = runBaseline(learners, ds, 0.1, 5);
    CHECK(result.model.fitted());
    CHECK(result.report.picp >= 0.6);
    CHECK((result.test_intervals.upper - result.test_intervals.lower).minCoeff() >= 0.0);
}

TEST_CASE("baselines are deterministic in the seed") {
    const Dataset ds = baselineDataset(3, false);
    LearnerConfig learners;
    learners.family = LearnerFamily::RandomizedTrees;
    learners.trees.n_trees = 10;
    learners.trees.max_depth = 4;
    const BaselineResult a = runBaseline(learners, ds, 0.05, 9);
    const BaselineResult b = runBaseline(learners, ds, 0.05, 9);
    CHECK(a.calibrator.q_hat == b.calibrator.q_hat);
    CHECK((a.test_intervals.lower - b.test_intervals.lower).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.test_intervals.upper - b.test_intervals.upper).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("baseline requires the full split") {
    Dataset ds = baselineDataset(4, false);
    ds.split.valid_idx.clear();
    LearnerConfig learners;
    learners.family = LearnerFamily::Ridge;
    CHECK_THROWS_AS(runBaseline(learners, ds, 0.05, 0), DataError);
    CHECK_THROWS_AS(runBaseline(learners, baselineDataset(4, false), 1.2, 0), ConfigError);
}
