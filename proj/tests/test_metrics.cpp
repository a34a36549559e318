#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "semf/errors.hpp"
#include "semf/metrics.hpp"
#include "semf/rng.hpp"

using namespace semf;

namespace {

// Stratified MC estimate of the uniform-forecast CRPS; the sorted draws make
// the mean pairwise distance an O(n) sum.
double crpsMonteCarlo(double y, double lower, double upper, int n, std::uint64_t seed) {
    auto gen = rng::makeStream(seed, "crps_mc", 0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double width = upper - lower;
    std::vector<double> x(static_cast<std::size_t>(n));
    double term1 = 0.0;
    for (int i = 0; i < n; ++i) {
        x[static_cast<std::size_t>(i)] = lower + width * ((i + unit(gen)) / n);
        term1 += std::abs(x[static_cast<std::size_t>(i)] - y);
    }
    term1 /= n;
    double pair_sum = 0.0;
    for (int j = 0; j < n; ++j) pair_sum += (2.0 * j + 1.0 - n) * x[static_cast<std::size_t>(j)];
    const double term2 = 2.0 * pair_sum / (static_cast<double>(n) * (n - 1.0));
    return term1 - 0.5 * term2;
}

MetricReport reportWith(double picp_v, double nmpiw_v, double crps_v, double pinball_v) {
    MetricReport r;
    r.picp = picp_v;
    r.nmpiw = nmpiw_v;
    r.cwr = nmpiw_v > 0.0 ? picp_v / nmpiw_v : 0.0;
    r.crps_mean = crps_v;
    r.pinball_mean = pinball_v;
    return r;
}

}  // namespace

TEST_CASE("picp counts closed-interval boundaries as covered") {
    Vector y(3), lo(3), hi(3);
    y << 0.0, 1.0, 2.0;
    lo << 0.0, 0.0, 0.0;
    hi << 1.0, 1.0, 1.0;
    CHECK(picp(y, lo, hi) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("width metrics and the cwr identity") {
    Vector lo(2), hi(2);
    lo << 0.0, 1.0;
    hi << 1.0, 4.0;
    CHECK(mpiw(lo, hi) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(nmpiw(lo, hi, 0.0, 8.0) == doctest::Approx(0.25).epsilon(1e-12));
    CHECK_THROWS_AS(nmpiw(lo, hi, 3.0, 3.0), DataError);

    Vector y(2);
    y << 0.5, 2.0;
    const MetricReport report = evaluateIntervals(y, lo, hi, 0.0, 8.0, 0.05);
    CHECK(std::abs(report.cwr * report.nmpiw - report.picp) < 1e-12);
}

TEST_CASE("crps closed form matches the frozen oracles") {
    CHECK(crpsUniform(0.5, 0.0, 1.0) == doctest::Approx(1.0 / 12.0).epsilon(1e-12));
    CHECK(crpsUniform(0.0, 0.0, 1.0) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(crpsUniform(1.0, 0.0, 1.0) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(crpsUniform(-1.0, 0.0, 1.0) == doctest::Approx(4.0 / 3.0).epsilon(1e-12));
    CHECK(crpsUniform(3.0, 0.0, 1.0) == doctest::Approx(2.0 + 1.0 / 3.0).epsilon(1e-12));
    CHECK(crpsUniform(0.7, 0.7, 0.7) == 0.0);
    CHECK(crpsUniform(1.0, 0.25, 0.25) == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("crps branches agree at the boundaries") {
    const double eps = 1e-9;
    CHECK(std::abs(crpsUniform(0.0, 0.0, 2.0) - crpsUniform(-eps, 0.0, 2.0)) < 1e-8);
    CHECK(std::abs(crpsUniform(2.0, 0.0, 2.0) - crpsUniform(2.0 + eps, 0.0, 2.0)) < 1e-8);
}

TEST_CASE("crps closed form matches a Monte Carlo estimate") {
    int point = 0;
    for (double lower : {-1.0, 0.0, 0.5}) {
        for (double width : {0.2, 1.0, 2.0}) {
            const double upper = lower + width;
            for (double y : {lower, upper, lower + 0.3 * width, lower - 0.7, upper + 1.1}) {
                const double exact = crpsUniform(y, lower, upper);
                const double mc = crpsMonteCarlo(y, lower, upper, 100000,
                                                 static_cast<std::uint64_t>(point++));
                CHECK(std::abs(exact - mc) < 1e-3);
            }
        }
    }
}

TEST_CASE("pinball loss at the reference points") {
    CHECK(pinball(1.0, 0.0, 0.9) == doctest::Approx(0.9).epsilon(1e-12));
    CHECK(pinball(0.0, 1.0, 0.9) == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(pinball(0.5, 0.5, 0.3) == 0.0);
    CHECK_THROWS_AS(pinball(0.0, 0.0, 0.0), ConfigError);
    CHECK_THROWS_AS(pinball(0.0, 0.0, 1.0), ConfigError);
}

TEST_CASE("the empirical quantile minimizes mean pinball loss") {
    auto gen = rng::makeStream(11, "pinball_data", 0);
    std::normal_distribution<double> dist;
    std::vector<double> sample(2001);
    for (auto& v : sample) v = dist(gen);
    std::sort(sample.begin(), sample.end());
    const double tau = 0.8;
    const double q_star = sample[static_cast<std::size_t>(tau * (sample.size() - 1))];

    auto meanLoss = [&](double q) {
        double total = 0.0;
        for (double v : sample) total += pinball(v, q, tau);
        return total / static_cast<double>(sample.size());
    };
    const double at_quantile = meanLoss(q_star);
    for (double shift : {-0.5, -0.1, 0.1, 0.5}) CHECK(at_quantile <= meanLoss(q_star + shift));
}

TEST_CASE("evaluateIntervals assembles every field") {
    Vector y(1), lo(1), hi(1);
    y << 0.5;
    lo << 0.0;
    hi << 1.0;
    const MetricReport report = evaluateIntervals(y, lo, hi, 0.0, 2.0, 0.1);
    CHECK(report.picp == 1.0);
    CHECK(report.mpiw == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(report.nmpiw == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(report.cwr == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(report.crps_mean == doctest::Approx(1.0 / 12.0).epsilon(1e-12));
    CHECK(report.pinball_mean == doctest::Approx(0.025).epsilon(1e-12));
    CHECK(report.y_range_min == 0.0);
    CHECK(report.y_range_max == 2.0);
    CHECK_FALSE(report.deltas.has_value());
}

TEST_CASE("interval validation rejects crossed and non-finite bounds") {
    Vector y(1), lo(1), hi(1);
    y << 0.0;
    lo << 1.0;
    hi << 0.0;
    CHECK_THROWS_AS(picp(y, lo, hi), DataError);
    hi << std::numeric_limits<double>::infinity();
    lo << 0.0;
    CHECK_THROWS_AS(mpiw(lo, hi), DataError);
    CHECK_THROWS_AS(evaluateIntervals(y, lo, hi, 0.0, 1.0, 1.5), ConfigError);
}

TEST_CASE("widening intervals never lowers coverage and never narrows width") {
    auto gen = rng::makeStream(12, "mono_data", 0);
    std::normal_distribution<double> dist;
    Vector y(50), lo(50), hi(50);
    for (int i = 0; i < 50; ++i) {
        y(i) = dist(gen);
        const double a = dist(gen), b = dist(gen);
        lo(i) = std::min(a, b);
        hi(i) = std::max(a, b);
    }
    const Vector lo_wide = lo.array() - 0.5;
    const Vector hi_wide = hi.array() + 0.5;
    CHECK(picp(y, lo_wide, hi_wide) >= picp(y, lo, hi));
    CHECK(nmpiw(lo_wide, hi_wide, -3.0, 3.0) >= nmpiw(lo, hi, -3.0, 3.0));
}

TEST_CASE("relative deltas carry the improvement orientation") {
    CHECK(relativeDelta(12.0, 10.0) == doctest::Approx(20.0).epsilon(1e-12));
    CHECK_THROWS_AS(relativeDelta(1.0, 0.0), NumericError);

    // A width reduction from 0.31 to 0.12 must report as a positive delta.
    const MetricReport semf_r = reportWith(0.95, 0.12, 0.2, 0.05);
    const MetricReport base_r = reportWith(0.95, 0.31, 0.2, 0.05);
    const DeltaReport d = improvementDeltas(semf_r, base_r);
    CHECK(d.d_nmpiw == doctest::Approx(61.29).epsilon(1e-3));
    CHECK(d.d_cwr > 0.0);
    CHECK(d.d_picp == 0.0);

    // CRPS and pinball reductions are also positive.
    const DeltaReport d2 = improvementDeltas(reportWith(0.9, 0.2, 0.1, 0.02),
                                             reportWith(0.9, 0.2, 0.2, 0.04));
    CHECK(d2.d_crps == doctest::Approx(50.0).epsilon(1e-9));
    CHECK(d2.d_pinball == doctest::Approx(50.0).epsilon(1e-9));
}

TEST_CASE("config selection walks the relaxation ladder") {
    auto deltas = [](double d_cwr, double d_picp) {
        DeltaReport d;
        d.d_cwr = d_cwr;
        d.d_picp = d_picp;
        return d;
    };

    // strict gate: positive picp delta wins even against a larger cwr gain
    CHECK(selectBestConfig({deltas(10.0, 1.0), deltas(50.0, -1.0)}) == 0);
    // first relaxation admits picp > -5
    CHECK(selectBestConfig({deltas(30.0, -4.0), deltas(50.0, -6.0)}) == 0);
    // second relaxation admits picp > -10
    CHECK(selectBestConfig({deltas(5.0, -9.0), deltas(50.0, -11.0)}) == 0);
    // among qualifiers the largest cwr gain wins
    CHECK(selectBestConfig({deltas(5.0, 1.0), deltas(8.0, 2.0), deltas(3.0, 0.5)}) == 1);
    // cwr gains are required at every rung
    CHECK_THROWS_AS(selectBestConfig({deltas(-1.0, 5.0)}), ConfigError);
    // exhaustion
    CHECK_THROWS_AS(selectBestConfig({deltas(50.0, -11.0), deltas(20.0, -12.0)}), ConfigError);
    CHECK_THROWS_AS(selectBestConfig({}), ConfigError);
}
