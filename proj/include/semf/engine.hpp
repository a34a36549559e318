#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <vector>

#include "semf/dataset.hpp"
#include "semf/learners.hpp"
#include "semf/types.hpp"

namespace semf {

/// Floor applied to every latent and decoder noise scale.
inline constexpr double kSigmaMin = 1e-6;

enum class SigmaMode { Fixed, ResidualModels };

struct SemfConfig {
    int R = 10;        // MC samples per example during training
    int R_infer = 50;  // MC samples per stage at inference
    int m_k = 10;      // latent width per source
    SigmaMode sigma_mode = SigmaMode::Fixed;
    double sigma_k = 0.1;  // fixed-mode latent scale, shared across sources
    int patience = 10;     // non-improving validation steps tolerated
    int max_steps = 100;
    int batches = 1;  // outer batches per step; 1 = full batch
    std::uint64_t seed = 0;

    void validate() const;
};

struct TrainingHistory {
    std::vector<double> validation_rmse;  // index 0 is the post-initialization score
    int best_step = 0;
    int uniform_weight_fallbacks = 0;  // batches whose weights degenerated to uniform
};

/// Fitted SEMF state: one encoder per source mapping x_k to its latent mean,
/// a decoder mapping concatenated latents to the outcome, and the noise
/// scales tying them together. All in standardized units.
struct SemfModel {
    SemfConfig config;
    LearnerConfig learners;
    std::vector<std::vector<int>> source_partition;
    std::vector<std::unique_ptr<WeightedRegressor>> encoders;
    std::vector<std::unique_ptr<WeightedRegressor>> scale_models;  // residual mode only
    std::unique_ptr<WeightedRegressor> decoder;
    double sigma = 1.0;
    TrainingHistory history;

    SemfModel() = default;
    SemfModel(const SemfModel& other) { *this = other; }
    SemfModel& operator=(const SemfModel& other);
    SemfModel(SemfModel&&) noexcept = default;
    SemfModel& operator=(SemfModel&&) noexcept = default;

    int numSources() const { return static_cast<int>(source_partition.size()); }
    int latentWidth() const { return numSources() * config.m_k; }

    /// Per-row latent scale for source k: the fixed sigma_k, or the residual
    /// model's absolute prediction floored at kSigmaMin.
    Matrix latentScales(int source, const Matrix& source_inputs) const;
};

double gaussianLogDensity(double y, double mean, double sigma);

/// Eq.-style decoder log density of y under the latent row z.
double decoderLogDensity(const SemfModel& model, double y, const Vector& z);

/// Simplex weights from one example's log densities via log-sum-exp. Throws
/// NumericError when every entry is -inf; the trainer catches that and falls
/// back to uniform weights.
Vector computeWeights(const Vector& log_densities);

/// Latent draws for each row of the source matrices, stacked as an
/// (n*R) x latentWidth matrix whose row i*R+r holds draw r for example i.
Matrix sampleLatents(const SemfModel& model, const std::vector<Matrix>& x_sources, int R,
                     std::mt19937_64& gen);

/// One maximization pass over replicated buffers: refit the decoder on
/// (z -> y), each encoder on (x_k -> z_k), update sigma from the weighted
/// decoder residuals divided by the example count, and refit residual scale
/// models when that mode is active.
void mStep(SemfModel& model, const std::vector<Matrix>& x_source_buffers, const Vector& y_buffer,
           const Matrix& z_buffer, const Vector& w_buffer, int n_examples);

/// Runs the EM loop on the dataset's train segment, monitoring point-RMSE on
/// the validation segment and returning the best snapshot.
SemfModel trainSemf(const SemfConfig& config, const LearnerConfig& learners, const Dataset& dataset);

/// Per-source matrices for the given rows, in partition order.
std::vector<Matrix> splitSources(const Dataset& dataset, const std::vector<int>& rows);

}  // namespace semf
