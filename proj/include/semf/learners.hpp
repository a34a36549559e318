#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "semf/types.hpp"

namespace semf {

enum class LearnerFamily { Ridge, BoostedTrees, RandomizedTrees, Mlp };

LearnerFamily parseLearnerFamily(const std::string& name);
std::string learnerFamilyName(LearnerFamily family);
/// Boosted trees and MLPs monitor a held-out segment; ridge and randomized trees do not.
bool familyUsesEarlyStopping(LearnerFamily family);

/// Point model trainable under per-row sample weights. Targets may be a single
/// column (decoder) or an m-column matrix (encoder latent means). Weights enter
/// scale-free: fitting with weights c*w reproduces the fit with weights w.
class WeightedRegressor {
public:
    virtual ~WeightedRegressor() = default;

    virtual void fit(const Matrix& inputs, const Matrix& targets, const Vector& weights) = 0;
    virtual Matrix predict(const Matrix& inputs) const = 0;

    /// Optional held-out set watched during fitting (families with early stopping).
    virtual void setMonitor(const Matrix& inputs, const Matrix& targets) = 0;
    virtual void clearMonitor() = 0;

    virtual bool fitted() const = 0;
    virtual int numOutputs() const = 0;
    /// Deep copy, fitted state included.
    virtual std::unique_ptr<WeightedRegressor> clone() const = 0;
};

struct RidgeConfig {
    double lambda = 1e-6;  // >= 0; applied uniformly, intercept included
};

/// Closed-form weighted ridge on the intercept-augmented design. Weights are
/// normalized to mean 1, then coef solves (Xa' W Xa + lambda I) B = Xa' W T.
class RidgeRegressor final : public WeightedRegressor {
public:
    explicit RidgeRegressor(RidgeConfig config = {}) : config_(config) {}

    void fit(const Matrix& inputs, const Matrix& targets, const Vector& weights) override;
    Matrix predict(const Matrix& inputs) const override;
    void setMonitor(const Matrix&, const Matrix&) override {}
    void clearMonitor() override {}
    bool fitted() const override { return fitted_; }
    int numOutputs() const override { return static_cast<int>(coef_.cols()); }
    std::unique_ptr<WeightedRegressor> clone() const override;

    const Matrix& coefficients() const { return coef_; }  // (d+1) x m, last row intercept
    void setCoefficients(Matrix coef);                    // restore from a serialized model

private:
    RidgeConfig config_;
    Matrix coef_;
    bool fitted_ = false;
};

enum class TreeMode { Boosted, Randomized };

struct TreeEnsembleConfig {
    int n_trees = 100;
    int max_depth = -1;  // -1 resolves to the mode default: 6 boosted, 10 randomized
    TreeMode mode = TreeMode::Boosted;
    double learning_rate = 0.3;
    int early_stopping_rounds = 10;  // boosted mode, when a monitor is set
    int min_samples_leaf = 1;
    std::uint64_t seed = 0;

    int resolvedDepth() const { return max_depth > 0 ? max_depth : (mode == TreeMode::Boosted ? 6 : 10); }
};

struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    int leaf = -1;  // index into leaf_values when a leaf
};

struct RegressionTree {
    std::vector<TreeNode> nodes;
    std::vector<std::vector<double>> leaf_values;  // per leaf, one value per output

    int leafIndex(const Matrix& inputs, int row) const;
    const std::vector<double>& leafValue(const Matrix& inputs, int row) const {
        return leaf_values[static_cast<std::size_t>(leafIndex(inputs, row))];
    }
};

/// Weighted tree ensemble. Boosted mode fits trees sequentially to residuals
/// with exact greedy splits (gain = weighted variance reduction summed over
/// outputs); randomized mode draws one uniform threshold per feature from the
/// node's range and keeps the best, trees averaged.
class TreeEnsembleRegressor final : public WeightedRegressor {
public:
    explicit TreeEnsembleRegressor(TreeEnsembleConfig config = {}) : config_(config) {}

    void fit(const Matrix& inputs, const Matrix& targets, const Vector& weights) override;
    Matrix predict(const Matrix& inputs) const override;
    void setMonitor(const Matrix& inputs, const Matrix& targets) override;
    void clearMonitor() override;
    bool fitted() const override { return fitted_; }
    int numOutputs() const override { return n_outputs_; }
    std::unique_ptr<WeightedRegressor> clone() const override;

    const TreeEnsembleConfig& config() const { return config_; }
    const std::vector<RegressionTree>& trees() const { return trees_; }
    const std::vector<double>& baseValues() const { return base_; }
    int treesUsed() const { return static_cast<int>(trees_.size()); }
    int numInputs() const { return n_inputs_; }
    void setModel(std::vector<RegressionTree> trees, std::vector<double> base, int n_inputs,
                  int n_outputs);

private:
    TreeEnsembleConfig config_;
    std::vector<RegressionTree> trees_;
    std::vector<double> base_;  // boosted mode: weighted target means
    int n_inputs_ = 0;
    int n_outputs_ = 0;
    bool fitted_ = false;
    bool has_monitor_ = false;
    Matrix monitor_inputs_;
    Matrix monitor_targets_;
};

struct MlpConfig {
    int hidden_layers = 2;
    int hidden_width = 100;
    int epochs = 1000;
    double learning_rate = 1e-3;
    int patience = 100;  // epochs without monitor improvement before stopping
    std::uint64_t seed = 0;
};

/// Fully connected rectifier network trained full-batch with Adam on weighted
/// mean squared error. With a monitor set, early stopping restores the
/// best-epoch parameters. Single-threaded and deterministic given the seed.
class MlpRegressor final : public WeightedRegressor {
public:
    explicit MlpRegressor(MlpConfig config = {}) : config_(config) {}

    void fit(const Matrix& inputs, const Matrix& targets, const Vector& weights) override;
    Matrix predict(const Matrix& inputs) const override;
    void setMonitor(const Matrix& inputs, const Matrix& targets) override;
    void clearMonitor() override;
    bool fitted() const override { return fitted_; }
    int numOutputs() const override { return n_outputs_; }
    std::unique_ptr<WeightedRegressor> clone() const override;

    const MlpConfig& config() const { return config_; }
    const std::vector<Matrix>& layerWeights() const { return weights_; }
    const std::vector<Vector>& layerBiases() const { return biases_; }
    void setParameters(std::vector<Matrix> weights, std::vector<Vector> biases);

private:
    MlpConfig config_;
    std::vector<Matrix> weights_;  // per layer, fan_out x fan_in
    std::vector<Vector> biases_;
    int n_outputs_ = 0;
    bool fitted_ = false;
    bool has_monitor_ = false;
    Matrix monitor_inputs_;
    Matrix monitor_targets_;
};

/// Per-family hyper-parameters plus the family tag; the harness owns one of
/// these and hands it to every construction site so SEMF and baseline models
/// share identical settings.
struct LearnerConfig {
    LearnerFamily family = LearnerFamily::BoostedTrees;
    RidgeConfig ridge;
    TreeEnsembleConfig trees;
    MlpConfig mlp;
};

std::unique_ptr<WeightedRegressor> makeRegressor(const LearnerConfig& config, std::uint64_t seed);

/// Interval predictor trained under pinball loss at two levels. Crossing fix:
/// a row whose lower exceeds its upper has the two swapped.
class QuantileRegressor {
public:
    class Impl;

    QuantileRegressor();
    QuantileRegressor(const QuantileRegressor& other);
    QuantileRegressor& operator=(const QuantileRegressor& other);
    QuantileRegressor(QuantileRegressor&&) noexcept;
    QuantileRegressor& operator=(QuantileRegressor&&) noexcept;
    ~QuantileRegressor();

    std::pair<Vector, Vector> predict(const Matrix& inputs) const;
    double tauLow() const { return tau_low_; }
    double tauHigh() const { return tau_high_; }
    bool fitted() const { return impl_ != nullptr; }

private:
    friend QuantileRegressor fitQuantile(const LearnerConfig&, const Matrix&, const Vector&, double,
                                         double, std::uint64_t, const Matrix*, const Vector*);
    std::unique_ptr<Impl> impl_;
    double tau_low_ = 0.0;
    double tau_high_ = 1.0;
};

/// Fits the family's quantile variant at (tau_low, tau_high). Monitor rows are
/// used by families with early stopping when provided.
QuantileRegressor fitQuantile(const LearnerConfig& config, const Matrix& inputs, const Vector& outcome,
                              double tau_low, double tau_high, std::uint64_t seed,
                              const Matrix* monitor_inputs = nullptr,
                              const Vector* monitor_outcome = nullptr);

/// Per-source regressors predicting the absolute encoder residual per latent
/// coordinate; consumers floor the predictions at their sigma floor.
std::vector<std::unique_ptr<WeightedRegressor>> fitResidualScaleModels(
    const std::vector<std::unique_ptr<WeightedRegressor>>& encoders,
    const std::vector<Matrix>& encoder_inputs, const std::vector<Matrix>& latent_targets,
    const Vector& weights, const LearnerConfig& config, std::uint64_t seed);

}  // namespace semf
