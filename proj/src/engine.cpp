#include "semf/engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "semf/errors.hpp"
#include "semf/rng.hpp"

namespace semf {

namespace {

constexpr double kHalfLogTwoPi = 0.9189385332046727;  // log(2*pi)/2

std::vector<std::unique_ptr<WeightedRegressor>> cloneAll(
    const std::vector<std::unique_ptr<WeightedRegressor>>& models) {
    std::vector<std::unique_ptr<WeightedRegressor>> out;
    out.reserve(models.size());
    for (const auto& model : models) out.push_back(model ? model->clone() : nullptr);
    return out;
}

Matrix replicateRows(const Matrix& source, int repeats) {
    Matrix out(source.rows() * repeats, source.cols());
    for (Eigen::Index i = 0; i < source.rows(); ++i)
        for (int r = 0; r < repeats; ++r) out.row(i * repeats + r) = source.row(i);
    return out;
}

Vector replicateEntries(const Vector& source, int repeats) {
    Vector out(source.size() * repeats);
    for (Eigen::Index i = 0; i < source.size(); ++i)
        for (int r = 0; r < repeats; ++r) out[i * repeats + r] = source[i];
    return out;
}

}  // namespace

void SemfConfig::validate() const {
    if (R < 1) throw ConfigError("SemfConfig: R must be at least 1");
    if (R_infer < 1) throw ConfigError("SemfConfig: R_infer must be at least 1");
    if (m_k < 1) throw ConfigError("SemfConfig: m_k must be at least 1");
    if (sigma_mode == SigmaMode::Fixed && !(sigma_k > 0.0))
        throw ConfigError("SemfConfig: fixed sigma_k must be positive");
    if (patience < 1) throw ConfigError("SemfConfig: patience must be at least 1");
    if (max_steps < 1) throw ConfigError("SemfConfig: max_steps must be at least 1");
    if (batches < 1) throw ConfigError("SemfConfig: batches must be at least 1");
}

SemfModel& SemfModel::operator=(const SemfModel& other) {
    if (this == &other) return *this;
    config = other.config;
    learners = other.learners;
    source_partition = other.source_partition;
    encoders = cloneAll(other.encoders);
    scale_models = cloneAll(other.scale_models);
    decoder = other.decoder ? other.decoder->clone() : nullptr;
    sigma = other.sigma;
    history = other.history;
    return *this;
}

Matrix SemfModel::latentScales(int source, const Matrix& source_inputs) const {
    if (config.sigma_mode == SigmaMode::Fixed)
        return Matrix::Constant(source_inputs.rows(), config.m_k,
                                std::max(config.sigma_k, kSigmaMin));
    const Matrix raw = scale_models[static_cast<std::size_t>(source)]->predict(source_inputs);
    return raw.cwiseAbs().cwiseMax(kSigmaMin);
}

double gaussianLogDensity(double y, double mean, double sigma) {
    if (!(sigma > 0.0)) throw NumericError("gaussianLogDensity: sigma must be positive");
    const double resid = y - mean;
    return -kHalfLogTwoPi - std::log(sigma) - resid * resid / (2.0 * sigma * sigma);
}

double decoderLogDensity(const SemfModel& model, double y, const Vector& z) {
    if (!z.allFinite()) throw DataError("decoderLogDensity: non-finite latent");
    if (z.size() != model.latentWidth()) throw DataError("decoderLogDensity: latent width mismatch");
    const Matrix pred = model.decoder->predict(z.transpose());
    return gaussianLogDensity(y, pred(0, 0), model.sigma);
}

Vector computeWeights(const Vector& log_densities) {
    const Eigen::Index n = log_densities.size();
    if (n < 1) throw DataError("computeWeights: empty input");
    double top = -std::numeric_limits<double>::infinity();
    for (Eigen::Index r = 0; r < n; ++r) {
        if (std::isnan(log_densities[r]) || log_densities[r] == std::numeric_limits<double>::infinity())
            throw DataError("computeWeights: log densities must be finite or -inf");
        top = std::max(top, log_densities[r]);
    }
    if (top == -std::numeric_limits<double>::infinity())
        throw NumericError("computeWeights: all log densities are -inf");
    // std::exp maps -inf to an exact zero; Eigen's packet exp does not
    Vector weights(n);
    double sum = 0.0;
    for (Eigen::Index r = 0; r < n; ++r) {
        weights[r] = std::exp(log_densities[r] - top);
        sum += weights[r];
    }
    if (!std::isfinite(sum) || sum <= 0.0)
        throw NumericError("computeWeights: degenerate normalizer");
    weights /= sum;
    return weights;
}

Matrix sampleLatents(const SemfModel& model, const std::vector<Matrix>& x_sources, int R,
                     std::mt19937_64& gen) {
    if (R < 1) throw ConfigError("sampleLatents: R must be at least 1");
    if (static_cast<int>(x_sources.size()) != model.numSources())
        throw DataError("sampleLatents: source count mismatch");
    const Eigen::Index n = x_sources.empty() ? 0 : x_sources.front().rows();
    const int m = model.config.m_k;
    Matrix z(n * R, model.latentWidth());
    std::normal_distribution<double> standard_normal(0.0, 1.0);
    for (int k = 0; k < model.numSources(); ++k) {
        if (x_sources[static_cast<std::size_t>(k)].rows() != n)
            throw DataError("sampleLatents: source row counts differ");
        const Matrix means = model.encoders[static_cast<std::size_t>(k)]->predict(
            x_sources[static_cast<std::size_t>(k)]);
        if (!means.allFinite()) throw NumericError("sampleLatents: non-finite encoder output");
        const Matrix scales = model.latentScales(k, x_sources[static_cast<std::size_t>(k)]);
        const int offset = k * m;
        for (Eigen::Index i = 0; i < n; ++i)
            for (int r = 0; r < R; ++r)
                for (int j = 0; j < m; ++j)
                    z(i * R + r, offset + j) = means(i, j) + scales(i, j) * standard_normal(gen);
    }
    return z;
}

void mStep(SemfModel& model, const std::vector<Matrix>& x_source_buffers, const Vector& y_buffer,
           const Matrix& z_buffer, const Vector& w_buffer, int n_examples) {
    if (n_examples < 1) throw DataError("mStep: need at least one example");
    if (y_buffer.size() != z_buffer.rows() || w_buffer.size() != z_buffer.rows())
        throw DataError("mStep: buffer row counts differ");

    model.decoder->fit(z_buffer, y_buffer, w_buffer);

    const int m = model.config.m_k;
    for (int k = 0; k < model.numSources(); ++k) {
        const Matrix targets = z_buffer.middleCols(k * m, m);
        model.encoders[static_cast<std::size_t>(k)]->fit(
            x_source_buffers[static_cast<std::size_t>(k)], targets, w_buffer);
    }

    const Vector preds = model.decoder->predict(z_buffer).col(0);
    const Vector resid = y_buffer - preds;
    const double variance = (w_buffer.array() * resid.array().square()).sum() /
                            static_cast<double>(n_examples);
    model.sigma = std::max(std::sqrt(variance), kSigmaMin);

    if (model.config.sigma_mode == SigmaMode::ResidualModels) {
        std::vector<Matrix> latent_targets;
        latent_targets.reserve(static_cast<std::size_t>(model.numSources()));
        for (int k = 0; k < model.numSources(); ++k)
            latent_targets.push_back(z_buffer.middleCols(k * m, m));
        model.scale_models =
            fitResidualScaleModels(model.encoders, x_source_buffers, latent_targets, w_buffer,
                                   model.learners, rng::deriveSeed(model.config.seed, "scale", 0));
    }
}

std::vector<Matrix> splitSources(const Dataset& dataset, const std::vector<int>& rows) {
    std::vector<Matrix> sources;
    const int K = dataset.numSources();
    sources.reserve(static_cast<std::size_t>(K));
    for (int k = 0; k < K; ++k) sources.push_back(dataset.sourceRows(k, rows));
    return sources;
}

namespace {

// Mean decoder prediction over R fresh latent draws, one value per row.
Vector mcMeanPrediction(const SemfModel& model, const std::vector<Matrix>& x_sources, int R,
                        std::mt19937_64& gen) {
    const Matrix z = sampleLatents(model, x_sources, R, gen);
    const Vector preds = model.decoder->predict(z).col(0);
    const Eigen::Index n = z.rows() / R;
    Vector means(n);
    for (Eigen::Index i = 0; i < n; ++i) means[i] = preds.segment(i * R, R).mean();
    return means;
}

}  // namespace

SemfModel trainSemf(const SemfConfig& config, const LearnerConfig& learners, const Dataset& dataset) {
    config.validate();
    validatePartition(dataset.source_partition, static_cast<int>(dataset.features.cols()));
    if (dataset.split.train_idx.empty() || dataset.split.valid_idx.empty())
        throw DataError("trainSemf: dataset must carry non-empty train and validation segments");

    const auto& train_rows = dataset.split.train_idx;
    const auto& valid_rows = dataset.split.valid_idx;
    const int n_train = static_cast<int>(train_rows.size());
    const std::vector<Matrix> x_train = splitSources(dataset, train_rows);
    const std::vector<Matrix> x_valid = splitSources(dataset, valid_rows);
    const Vector y_train = dataset.outcomeRows(train_rows);
    const Vector y_valid = dataset.outcomeRows(valid_rows);
    const int K = dataset.numSources();
    const int m = config.m_k;

    SemfModel model;
    model.config = config;
    model.learners = learners;
    model.source_partition = dataset.source_partition;

    // Initialization: encoder targets are m_k jittered copies of the outcome,
    // giving the decoder informative latents before the first E-step.
    {
        auto init_gen = rng::makeStream(config.seed, "init", 0);
        std::normal_distribution<double> jitter(
            0.0, config.sigma_mode == SigmaMode::Fixed ? config.sigma_k : 0.1);
        const Vector unit = Vector::Ones(n_train);
        Matrix z0(n_train, K * m);
        for (Eigen::Index c = 0; c < z0.cols(); ++c)
            for (int i = 0; i < n_train; ++i) z0(i, c) = y_train[i] + jitter(init_gen);
        for (int k = 0; k < K; ++k) {
            auto encoder = makeRegressor(learners, rng::deriveSeed(config.seed, "encoder", k));
            encoder->fit(x_train[static_cast<std::size_t>(k)], z0.middleCols(k * m, m), unit);
            model.encoders.push_back(std::move(encoder));
        }
        if (config.sigma_mode == SigmaMode::ResidualModels) {
            std::vector<Matrix> latent_targets;
            for (int k = 0; k < K; ++k) latent_targets.push_back(z0.middleCols(k * m, m));
            model.scale_models =
                fitResidualScaleModels(model.encoders, x_train, latent_targets, unit, learners,
                                       rng::deriveSeed(config.seed, "scale", 0));
        }
        model.decoder = makeRegressor(learners, rng::deriveSeed(config.seed, "decoder", 0));
        model.decoder->fit(z0, y_train, unit);
        const Vector resid = y_train - model.decoder->predict(z0).col(0);
        model.sigma = std::max(std::sqrt(resid.squaredNorm() / n_train), kSigmaMin);
    }

    // Deterministic batch layout, fixed across steps.
    std::vector<std::vector<int>> batch_rows;
    {
        std::vector<int> order(train_rows.size());
        std::iota(order.begin(), order.end(), 0);
        if (config.batches > 1) {
            auto batch_gen = rng::makeStream(config.seed, "batches", 0);
            std::shuffle(order.begin(), order.end(), batch_gen);
        }
        const int L = std::min<int>(config.batches, n_train);
        batch_rows.resize(static_cast<std::size_t>(L));
        for (std::size_t pos = 0; pos < order.size(); ++pos)
            batch_rows[pos % static_cast<std::size_t>(L)].push_back(order[pos]);
    }

    auto validationRmse = [&](const SemfModel& candidate, int step) {
        auto gen = rng::makeStream(config.seed, "monitor", static_cast<std::uint64_t>(step));
        const Vector pred = mcMeanPrediction(candidate, x_valid, config.R, gen);
        const double rmse = std::sqrt((pred - y_valid).squaredNorm() / pred.size());
        if (!std::isfinite(rmse)) throw NumericError("trainSemf: non-finite validation score");
        return rmse;
    };

    SemfModel best = model;
    double best_rmse = validationRmse(model, 0);
    model.history.validation_rmse.push_back(best_rmse);
    model.history.best_step = 0;
    int stale = 0;

    for (int step = 1; step <= config.max_steps; ++step) {
        for (std::size_t b = 0; b < batch_rows.size(); ++b) {
            const auto& local = batch_rows[b];
            const int n_batch = static_cast<int>(local.size());
            std::vector<Matrix> x_batch(static_cast<std::size_t>(K));
            Vector y_batch(n_batch);
            for (int k = 0; k < K; ++k) {
                auto& xk = x_batch[static_cast<std::size_t>(k)];
                xk.resize(n_batch, x_train[static_cast<std::size_t>(k)].cols());
                for (int i = 0; i < n_batch; ++i)
                    xk.row(i) = x_train[static_cast<std::size_t>(k)].row(local[static_cast<std::size_t>(i)]);
            }
            for (int i = 0; i < n_batch; ++i) y_batch[i] = y_train[local[static_cast<std::size_t>(i)]];

            auto sample_gen = rng::makeStream(
                config.seed, "sample",
                static_cast<std::uint64_t>(step - 1) * batch_rows.size() + b);
            const Matrix z = sampleLatents(model, x_batch, config.R, sample_gen);
            const Vector decoder_means = model.decoder->predict(z).col(0);

            Vector weights(z.rows());
            for (int i = 0; i < n_batch; ++i) {
                Vector log_density(config.R);
                for (int r = 0; r < config.R; ++r)
                    log_density[r] =
                        gaussianLogDensity(y_batch[i], decoder_means[i * config.R + r], model.sigma);
                try {
                    weights.segment(i * config.R, config.R) = computeWeights(log_density);
                } catch (const NumericError&) {
                    weights.segment(i * config.R, config.R)
                        .setConstant(1.0 / static_cast<double>(config.R));
                    ++model.history.uniform_weight_fallbacks;
                }
            }

            std::vector<Matrix> x_buffers(static_cast<std::size_t>(K));
            for (int k = 0; k < K; ++k)
                x_buffers[static_cast<std::size_t>(k)] =
                    replicateRows(x_batch[static_cast<std::size_t>(k)], config.R);
            const Vector y_buffer = replicateEntries(y_batch, config.R);
            mStep(model, x_buffers, y_buffer, z, weights, n_batch);
        }

        const double rmse = validationRmse(model, step);
        model.history.validation_rmse.push_back(rmse);
        if (rmse + 1e-12 < best_rmse) {
            best_rmse = rmse;
            model.history.best_step = step;
            best = model;
            stale = 0;
        } else if (++stale >= config.patience) {
            break;
        }
    }

    best.history = std::move(model.history);  // full history, best-step snapshot
    return best;
}

}  // namespace semf
