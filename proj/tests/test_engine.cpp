#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "semf/engine.hpp"
#include "semf/errors.hpp"
#include "semf/rng.hpp"
#include "semf/simulation.hpp"

using namespace semf;

namespace {

LearnerConfig ridgeLearners(double lambda = 1e-6) {
    LearnerConfig config;
    config.family = LearnerFamily::Ridge;
    config.ridge.lambda = lambda;
    return config;
}

// Single-source model with an identity ridge encoder and an unfitted decoder,
// ready for sampleLatents / mStep exercises.
SemfModel makeLinearModel(const Matrix& x, int m_k, double sigma_k) {
    SemfModel model;
    model.config.m_k = m_k;
    model.config.sigma_k = sigma_k;
    model.config.R = 3;
    model.learners = ridgeLearners(0.0);
    model.source_partition = {{0}};
    auto encoder = makeRegressor(model.learners, 1);
    Matrix targets(x.rows(), m_k);
    for (int j = 0; j < m_k; ++j) targets.col(j) = x.col(0);
    encoder->fit(x, targets, Vector::Ones(x.rows()));
    model.encoders.push_back(std::move(encoder));
    model.decoder = makeRegressor(model.learners, 2);
    return model;
}

Dataset trainingDataset(std::uint64_t seed) {
    SimSpec spec;
    spec.n = 90;
    spec.k = 2;
    spec.seed = seed;
    Dataset ds = generate(spec);
    ds.split = makeSplit(ds.numRows(), {}, 0, false);
    return ds;
}

}  // namespace

TEST_CASE("gaussian log density oracles") {
    CHECK(gaussianLogDensity(0.0, 0.0, 1.0) ==
          doctest::Approx(-0.9189385332046727).epsilon(1e-12));
    CHECK(gaussianLogDensity(1.0, 0.0, 1.0) ==
          doctest::Approx(-1.4189385332046727).epsilon(1e-12));
    // scaling: sigma enters as -log(sigma) and in the quadratic term
    CHECK(gaussianLogDensity(1.0, 0.0, 2.0) ==
          doctest::Approx(-0.9189385332046727 - std::log(2.0) - 0.125).epsilon(1e-12));
    CHECK_THROWS_AS(gaussianLogDensity(0.0, 0.0, 0.0), NumericError);
}

TEST_CASE("importance weights reproduce the frozen softmax") {
    Vector ld(2);
    ld << 0.0, -1.0;
    const Vector w = computeWeights(ld);
    CHECK(w(0) == doctest::Approx(0.7310585786300049).epsilon(1e-12));
    CHECK(w(1) == doctest::Approx(0.2689414213699951).epsilon(1e-12));
    CHECK(w.sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("importance weights are a shift-invariant simplex") {
    auto gen = rng::makeStream(4, "weights", 0);
    std::uniform_real_distribution<double> dist(-8.0, 2.0);
    Vector ld(17);
    for (int i = 0; i < 17; ++i) ld(i) = dist(gen);
    const Vector w = computeWeights(ld);
    CHECK(w.minCoeff() >= 0.0);
    CHECK(w.sum() == doctest::Approx(1.0).epsilon(1e-12));

    const Vector shifted = computeWeights(Vector(ld.array() + 1234.5));
    CHECK((w - shifted).cwiseAbs().maxCoeff() < 1e-12);

    // direct evaluation of the normalized likelihoods at moderate magnitudes
    Vector direct = ld.array().exp();
    direct /= direct.sum();
    CHECK((w - direct).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("importance weights survive extreme log densities") {
    Vector ld(3);
    ld << -1e6, -1e6 - 1.0, -1e6 - 2.0;
    const Vector w = computeWeights(ld);
    CHECK(w.allFinite());
    CHECK(w.sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(w(0) > w(1));

    Vector single(1);
    single << -500.0;
    CHECK(computeWeights(single)(0) == 1.0);

    const double neg_inf = -std::numeric_limits<double>::infinity();
    Vector partial(2);
    partial << 0.0, neg_inf;
    const Vector wp = computeWeights(partial);
    CHECK(wp(0) == 1.0);
    CHECK(wp(1) == 0.0);

    Vector all_inf = Vector::Constant(3, neg_inf);
    CHECK_THROWS_AS(computeWeights(all_inf), NumericError);
    Vector nan(2);
    nan << 0.0, std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(computeWeights(nan), DataError);
}

TEST_CASE("latent samples follow the i*R+r layout around encoder means") {
    Matrix x(3, 1);
    x << -1.0, 0.0, 2.0;
    const SemfModel model = makeLinearModel(x, 1, 1e-9);
    auto gen = rng::makeStream(5, "latents", 0);
    const Matrix z = sampleLatents(model, {x}, 4, gen);
    REQUIRE(z.rows() == 12);
    REQUIRE(z.cols() == 1);
    // sigma_k 1e-9 is floored to kSigmaMin, so draws hug the encoder means
    const Matrix means = model.encoders[0]->predict(x);
    for (int i = 0; i < 3; ++i)
        for (int r = 0; r < 4; ++r)
            CHECK(std::abs(z(i * 4 + r, 0) - means(i, 0)) < 10.0 * kSigmaMin);
}

TEST_CASE("latent samples have the configured spread") {
    Matrix x(2, 1);
    x << 0.0, 3.0;
    const SemfModel model = makeLinearModel(x, 1, 0.5);
    auto gen = rng::makeStream(6, "latents", 0);
    const int R = 4000;
    const Matrix z = sampleLatents(model, {x}, R, gen);
    for (int i = 0; i < 2; ++i) {
        const auto block = z.col(0).segment(i * R, R);
        const double mean = block.mean();
        const double sd = std::sqrt((block.array() - mean).square().sum() / (R - 1));
        CHECK(mean == doctest::Approx(x(i, 0)).epsilon(0.05));
        CHECK(sd == doctest::Approx(0.5).epsilon(0.05));
    }

    auto replay = rng::makeStream(6, "latents", 0);
    const Matrix z2 = sampleLatents(model, {x}, R, replay);
    CHECK((z - z2).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("multi-source latents land in their column blocks") {
    Matrix x(4, 2);
    x << 1, 2, 3, 4, 5, 6, 7, 8;
    SemfModel model;
    model.config.m_k = 1;
    model.config.sigma_k = 1e-9;
    model.learners = ridgeLearners(0.0);
    model.source_partition = {{0}, {1}};
    for (int k = 0; k < 2; ++k) {
        auto encoder = makeRegressor(model.learners, static_cast<std::uint64_t>(k));
        const Matrix xk = x.col(k);
        Matrix target = xk.array() + 10.0 * k;  // distinguish the sources
        encoder->fit(xk, target, Vector::Ones(4));
        model.encoders.push_back(std::move(encoder));
    }
    model.decoder = makeRegressor(model.learners, 9);
    auto gen = rng::makeStream(7, "latents", 0);
    const Matrix z = sampleLatents(model, {x.col(0), x.col(1)}, 2, gen);
    REQUIRE(z.cols() == 2);
    CHECK(z(0, 0) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(z(0, 1) == doctest::Approx(12.0).epsilon(1e-6));
    CHECK(z(7, 0) == doctest::Approx(7.0).epsilon(1e-6));
    CHECK(z(7, 1) == doctest::Approx(18.0).epsilon(1e-6));
}

TEST_CASE("decoder log density matches the gaussian around the decoder mean") {
    Matrix x(5, 1);
    x << 1, 2, 3, 4, 5;
    SemfModel model = makeLinearModel(x, 1, 0.1);
    const Vector y = 3.0 * x.col(0);
    model.decoder->fit(x, y, Vector::Ones(5));
    model.sigma = 0.7;
    Vector z(1);
    z << 2.0;
    const double pred = model.decoder->predict(z.transpose())(0, 0);
    CHECK(decoderLogDensity(model, 5.5, z) ==
          doctest::Approx(gaussianLogDensity(5.5, pred, 0.7)).epsilon(1e-12));
    Vector wide(2);
    wide << 1.0, 2.0;
    CHECK_THROWS_AS(decoderLogDensity(model, 0.0, wide), DataError);
}

TEST_CASE("m-step sigma matches the brute-force double sum") {
    const int N = 6, R = 3;
    auto gen = rng::makeStream(8, "mstep", 0);
    std::normal_distribution<double> dist;
    Matrix x(N, 1);
    Vector y(N);
    for (int i = 0; i < N; ++i) {
        x(i, 0) = dist(gen);
        y(i) = 2.0 * x(i, 0) + 0.3 * dist(gen);
    }
    SemfModel model = makeLinearModel(x, 2, 0.2);
    model.config.R = R;

    Matrix z_buffer(N * R, 2);
    Matrix x_buffer(N * R, 1);
    Vector y_buffer(N * R), w_buffer(N * R);
    for (int i = 0; i < N; ++i) {
        Vector raw(R);
        for (int r = 0; r < R; ++r) raw(r) = dist(gen);
        const Vector w = computeWeights(raw);
        for (int r = 0; r < R; ++r) {
            const int row = i * R + r;
            z_buffer(row, 0) = x(i, 0) + 0.1 * dist(gen);
            z_buffer(row, 1) = x(i, 0) + 0.1 * dist(gen);
            x_buffer(row, 0) = x(i, 0);
            y_buffer(row) = y(i);
            w_buffer(row) = w(r);
        }
    }
    mStep(model, {x_buffer}, y_buffer, z_buffer, w_buffer, N);

    const Vector preds = model.decoder->predict(z_buffer).col(0);
    double brute = 0.0;
    for (int i = 0; i < N; ++i)
        for (int r = 0; r < R; ++r) {
            const int row = i * R + r;
            const double resid = y_buffer(row) - preds(row);
            brute += w_buffer(row) * resid * resid;
        }
    const double expected = std::max(std::sqrt(brute / N), kSigmaMin);
    CHECK(model.sigma == doctest::Approx(expected).epsilon(1e-12));
    CHECK(model.encoders[0]->fitted());
}

TEST_CASE("m-step floors sigma on an exactly decodable buffer") {
    Matrix x(4, 1);
    x << 1, 2, 3, 4;
    SemfModel model = makeLinearModel(x, 1, 0.1);
    const Matrix z = x;
    const Vector y = 5.0 * x.col(0);
    mStep(model, {x}, y, z, Vector::Ones(4), 4);
    CHECK(model.sigma == kSigmaMin);
}

TEST_CASE("config validation catches every bad field") {
    SemfConfig config;
    CHECK_NOTHROW(config.validate());
    auto broken = [&](auto mutate) {
        SemfConfig c;
        mutate(c);
        CHECK_THROWS_AS(c.validate(), ConfigError);
    };
    broken([](SemfConfig& c) { c.R = 0; });
    broken([](SemfConfig& c) { c.R_infer = 0; });
    broken([](SemfConfig& c) { c.m_k = 0; });
    broken([](SemfConfig& c) { c.sigma_k = 0.0; });
    broken([](SemfConfig& c) { c.patience = 0; });
    broken([](SemfConfig& c) { c.max_steps = 0; });
    broken([](SemfConfig& c) { c.batches = 0; });
    SemfConfig residual;
    residual.sigma_mode = SigmaMode::ResidualModels;
    residual.sigma_k = 0.0;  // unused in this mode
    CHECK_NOTHROW(residual.validate());
}

TEST_CASE("training returns a finite history with the best snapshot") {
    const Dataset ds = trainingDataset(1);
    SemfConfig config;
    config.R = 4;
    config.m_k = 2;
    config.sigma_k = 0.1;
    config.max_steps = 6;
    config.patience = 2;
    config.seed = 5;
    const SemfModel model = trainSemf(config, ridgeLearners(), ds);

    const auto& rmse = model.history.validation_rmse;
    REQUIRE(rmse.size() >= 1);
    CHECK(rmse.size() <= static_cast<std::size_t>(config.max_steps) + 1);
    for (double v : rmse) CHECK(std::isfinite(v));
    const auto best = static_cast<std::size_t>(model.history.best_step);
    REQUIRE(best < rmse.size());
    CHECK(rmse[best] == *std::min_element(rmse.begin(), rmse.end()));
    CHECK(rmse.size() - 1 - best <= static_cast<std::size_t>(config.patience));
    CHECK(model.sigma >= kSigmaMin);
    CHECK(model.decoder->fitted());
    CHECK(model.encoders.size() == 2);
    CHECK(model.history.uniform_weight_fallbacks >= 0);
}

TEST_CASE("training is deterministic in the seed") {
    const Dataset ds = trainingDataset(2);
    SemfConfig config;
    config.R = 3;
    config.m_k = 1;
    config.max_steps = 4;
    config.patience = 2;
    config.seed = 11;
    const SemfModel a = trainSemf(config, ridgeLearners(), ds);
    const SemfModel b = trainSemf(config, ridgeLearners(), ds);
    CHECK(a.sigma == b.sigma);
    CHECK(a.history.validation_rmse == b.history.validation_rmse);
    CHECK(a.history.best_step == b.history.best_step);

    const std::vector<Matrix> x_valid = splitSources(ds, ds.split.valid_idx);
    const Matrix ma = a.encoders[0]->predict(x_valid[0]);
    const Matrix mb = b.encoders[0]->predict(x_valid[0]);
    CHECK((ma - mb).cwiseAbs().maxCoeff() == 0.0);

    config.seed = 12;
    const SemfModel c = trainSemf(config, ridgeLearners(), ds);
    CHECK(a.history.validation_rmse != c.history.validation_rmse);
}

TEST_CASE("residual-scale mode trains per-source scale models") {
    const Dataset ds = trainingDataset(3);
    SemfConfig config;
    config.R = 3;
    config.m_k = 2;
    config.sigma_mode = SigmaMode::ResidualModels;
    config.max_steps = 3;
    config.patience = 2;
    config.seed = 7;
    const SemfModel model = trainSemf(config, ridgeLearners(), ds);
    REQUIRE(model.scale_models.size() == 2);
    const Matrix x0 = ds.sourceAll(0);
    const Matrix scales = model.latentScales(0, x0);
    CHECK(scales.rows() == x0.rows());
    CHECK(scales.cols() == 2);
    CHECK(scales.minCoeff() >= kSigmaMin);
}

TEST_CASE("fixed-mode latent scales are the configured constant") {
    Matrix x(3, 1);
    x << 1, 2, 3;
    const SemfModel model = makeLinearModel(x, 2, 0.25);
    const Matrix scales = model.latentScales(0, x);
    CHECK(scales.rows() == 3);
    CHECK(scales.cols() == 2);
    CHECK(scales.minCoeff() == 0.25);
    CHECK(scales.maxCoeff() == 0.25);
}

TEST_CASE("training requires usable splits and a valid partition") {
    Dataset ds = trainingDataset(4);
    ds.split.valid_idx.clear();
    SemfConfig config;
    CHECK_THROWS_AS(trainSemf(config, ridgeLearners(), ds), DataError);

    Dataset overlap = trainingDataset(4);
    overlap.source_partition = {{0}, {0, 1}};
    CHECK_THROWS_AS(trainSemf(config, ridgeLearners(), overlap), ConfigError);
}

TEST_CASE("batched training still improves and stays deterministic") {
    const Dataset ds = trainingDataset(5);
    SemfConfig config;
    config.R = 3;
    config.m_k = 1;
    config.max_steps = 3;
    config.patience = 2;
    config.batches = 3;
    config.seed = 13;
    const SemfModel a = trainSemf(config, ridgeLearners(), ds);
    const SemfModel b = trainSemf(config, ridgeLearners(), ds);
    CHECK(a.history.validation_rmse == b.history.validation_rmse);
    CHECK(std::isfinite(a.sigma));
}

TEST_CASE("model copies are deep") {
    const Dataset ds = trainingDataset(6);
    SemfConfig config;
    config.R = 2;
    config.m_k = 1;
    config.max_steps = 2;
    config.patience = 1;
    const SemfModel model = trainSemf(config, ridgeLearners(), ds);
    SemfModel copy = model;
    REQUIRE(copy.decoder != nullptr);
    CHECK(copy.decoder.get() != model.decoder.get());
    CHECK(copy.encoders[0].get() != model.encoders[0].get());
    const Matrix x0 = ds.sourceAll(0);
    CHECK((copy.encoders[0]->predict(x0) - model.encoders[0]->predict(x0)).cwiseAbs().maxCoeff() ==
          0.0);
}
