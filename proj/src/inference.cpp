#include "semf/inference.hpp"

#include <cmath>
#include <cstddef>

#include "semf/errors.hpp"
#include "semf/rng.hpp"

namespace semf {

namespace {

// First-stage decoder means f(z_r) for one source row.
Vector stageMeans(const SemfModel& model, const std::vector<Matrix>& x_sources, int row,
                  int R_infer, std::mt19937_64& gen) {
    std::vector<Matrix> one_row;
    one_row.reserve(x_sources.size());
    for (const auto& source : x_sources) one_row.push_back(source.row(row));
    const Matrix z = sampleLatents(model, one_row, R_infer, gen);
    Vector means = model.decoder->predict(z).col(0);
    if (!means.allFinite()) throw NumericError("inference: non-finite decoder output");
    return means;
}

}  // namespace

double predictPoint(const SemfModel& model, const std::vector<Matrix>& x_sources, int row,
                    int R_infer, std::mt19937_64& gen) {
    if (R_infer < 1) throw ConfigError("predictPoint: R_infer must be at least 1");
    return stageMeans(model, x_sources, row, R_infer, gen).mean();
}

IntervalBatch predictIntervals(const SemfModel& model, const std::vector<Matrix>& x_sources,
                               int R_infer, double alpha, std::uint64_t seed, bool keep_samples) {
    if (R_infer < 1) throw ConfigError("predictIntervals: R_infer must be at least 1");
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("predictIntervals: alpha must lie in (0, 1)");
    if (x_sources.empty()) throw DataError("predictIntervals: no sources");
    const Eigen::Index n = x_sources.front().rows();

    IntervalBatch batch;
    batch.alpha = alpha;
    batch.R_infer = R_infer;
    batch.point.resize(n);
    batch.lower.resize(n);
    batch.upper.resize(n);
    if (keep_samples) batch.samples.reserve(static_cast<std::size_t>(n));

    std::vector<double> pooled(static_cast<std::size_t>(R_infer) * static_cast<std::size_t>(R_infer));
    for (Eigen::Index i = 0; i < n; ++i) {
        auto gen = rng::makeStream(seed, "infer", static_cast<std::uint64_t>(i));
        std::normal_distribution<double> standard_normal(0.0, 1.0);
        const Vector means = stageMeans(model, x_sources, static_cast<int>(i), R_infer, gen);
        batch.point[i] = means.mean();
        for (int r = 0; r < R_infer; ++r)
            for (int s = 0; s < R_infer; ++s)
                pooled[static_cast<std::size_t>(r) * static_cast<std::size_t>(R_infer) +
                       static_cast<std::size_t>(s)] = means[r] + model.sigma * standard_normal(gen);
        batch.lower[i] = empiricalQuantile(pooled, alpha / 2.0);
        batch.upper[i] = empiricalQuantile(pooled, 1.0 - alpha / 2.0);
        if (keep_samples) {
            Matrix rows(R_infer, R_infer);
            for (int r = 0; r < R_infer; ++r)
                for (int s = 0; s < R_infer; ++s)
                    rows(r, s) = pooled[static_cast<std::size_t>(r) * static_cast<std::size_t>(R_infer) +
                                        static_cast<std::size_t>(s)];
            batch.samples.push_back(std::move(rows));
        }
    }
    return batch;
}

}  // namespace semf
