#include "semf/learners.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

#include "semf/errors.hpp"
#include "semf/quantiles.hpp"
#include "semf/rng.hpp"

namespace semf {

namespace {

constexpr double kWeightEps = 1e-12;
constexpr double kInf = std::numeric_limits<double>::infinity();

void validateFitInputs(const Matrix& inputs, const Matrix& targets, const Vector& weights) {
    if (inputs.rows() == 0) throw DataError("fit: no rows");
    if (targets.rows() != inputs.rows() || weights.size() != inputs.rows())
        throw DataError("fit: row count mismatch between inputs, targets, and weights");
    if (targets.cols() == 0) throw DataError("fit: targets need at least one column");
    if (!inputs.allFinite() || !targets.allFinite())
        throw DataError("fit: non-finite values in inputs or targets");
    if (!weights.allFinite()) throw DataError("fit: non-finite weights");
    if ((weights.array() < 0.0).any()) throw DataError("fit: negative weights");
    if (weights.sum() <= 0.0) throw DataError("fit: weights sum to zero");
}

Vector normalizedWeights(const Vector& weights) {
    return weights * (static_cast<double>(weights.size()) / weights.sum());
}

std::vector<double> weightedColumnMeans(const Matrix& targets, const Vector& weights) {
    const double total = weights.sum();
    std::vector<double> means(static_cast<std::size_t>(targets.cols()), 0.0);
    for (Eigen::Index j = 0; j < targets.cols(); ++j)
        means[static_cast<std::size_t>(j)] = targets.col(j).dot(weights) / total;
    return means;
}

std::vector<std::vector<int>> presortColumns(const Matrix& inputs) {
    const int n = static_cast<int>(inputs.rows());
    std::vector<std::vector<int>> sorted(static_cast<std::size_t>(inputs.cols()));
    for (Eigen::Index j = 0; j < inputs.cols(); ++j) {
        auto& order = sorted[static_cast<std::size_t>(j)];
        order.resize(static_cast<std::size_t>(n));
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(),
                  [&](int a, int b) { return inputs(a, j) < inputs(b, j); });
    }
    return sorted;
}

struct SplitChoice {
    double score = -kInf;
    int feature = -1;
    double threshold = 0.0;
};

// Sum over outputs of (weighted sum)^2 / weight; maximizing this over a split
// minimizes the weighted squared error, since the sum of weighted squares is
// fixed within a node.
double nodeScore(const double* sums, int m, double weight) {
    double score = 0.0;
    for (int q = 0; q < m; ++q) score += sums[q] * sums[q];
    return score / weight;
}

// Grows one tree level-wise. `sorted` drives the exact greedy scan in boosted
// mode; randomized mode draws one uniform threshold per feature per node from
// `rng` instead. Reports each row's leaf through `leaf_of_row` when asked.
RegressionTree buildTree(const Matrix& inputs, const Matrix& targets, const Vector& weights,
                         const std::vector<std::vector<int>>& sorted, const TreeEnsembleConfig& cfg,
                         std::mt19937_64* rng, std::vector<int>* leaf_of_row) {
    const int n = static_cast<int>(inputs.rows());
    const int d = static_cast<int>(inputs.cols());
    const int m = static_cast<int>(targets.cols());
    const int depth = cfg.resolvedDepth();
    const int min_leaf = std::max(1, cfg.min_samples_leaf);

    RegressionTree tree;
    tree.nodes.push_back(TreeNode{});
    std::vector<int> row_node(static_cast<std::size_t>(n), 0);

    struct NodeStats {
        double weight = 0.0;
        int count = 0;
        std::vector<double> sums;
    };
    std::vector<NodeStats> stats(1);
    stats[0].sums.assign(static_cast<std::size_t>(m), 0.0);
    for (int i = 0; i < n; ++i) {
        stats[0].weight += weights[i];
        stats[0].count += 1;
        for (int q = 0; q < m; ++q) stats[0].sums[static_cast<std::size_t>(q)] += weights[i] * targets(i, q);
    }

    std::vector<int> active{0};
    for (int level = 0; level < depth && !active.empty(); ++level) {
        std::vector<int> slot(tree.nodes.size(), -1);
        int n_active = 0;
        for (int node : active) {
            if (stats[static_cast<std::size_t>(node)].count >= 2 * min_leaf &&
                stats[static_cast<std::size_t>(node)].weight > kWeightEps)
                slot[static_cast<std::size_t>(node)] = n_active++;
        }
        if (n_active == 0) break;
        std::vector<int> scan_nodes(static_cast<std::size_t>(n_active));
        for (int node : active)
            if (slot[static_cast<std::size_t>(node)] >= 0)
                scan_nodes[static_cast<std::size_t>(slot[static_cast<std::size_t>(node)])] = node;

        std::vector<SplitChoice> best(static_cast<std::size_t>(n_active));

        if (cfg.mode == TreeMode::Boosted) {
            std::vector<double> left_w(static_cast<std::size_t>(n_active));
            std::vector<int> left_c(static_cast<std::size_t>(n_active));
            std::vector<double> prev_val(static_cast<std::size_t>(n_active));
            std::vector<char> has_prev(static_cast<std::size_t>(n_active));
            std::vector<double> left_s(static_cast<std::size_t>(n_active) * static_cast<std::size_t>(m));
            for (int j = 0; j < d; ++j) {
                std::fill(left_w.begin(), left_w.end(), 0.0);
                std::fill(left_c.begin(), left_c.end(), 0);
                std::fill(has_prev.begin(), has_prev.end(), 0);
                std::fill(left_s.begin(), left_s.end(), 0.0);
                for (int idx : sorted[static_cast<std::size_t>(j)]) {
                    const int s = slot[static_cast<std::size_t>(row_node[static_cast<std::size_t>(idx)])];
                    if (s < 0) continue;
                    const double x = inputs(idx, j);
                    const auto& tot = stats[static_cast<std::size_t>(scan_nodes[static_cast<std::size_t>(s)])];
                    double* ls = &left_s[static_cast<std::size_t>(s) * static_cast<std::size_t>(m)];
                    if (has_prev[static_cast<std::size_t>(s)] && x > prev_val[static_cast<std::size_t>(s)]) {
                        const double wl = left_w[static_cast<std::size_t>(s)];
                        const double wr = tot.weight - wl;
                        const int cl = left_c[static_cast<std::size_t>(s)];
                        const int cr = tot.count - cl;
                        if (cl >= min_leaf && cr >= min_leaf && wl > kWeightEps && wr > kWeightEps) {
                            double score = 0.0;
                            for (int q = 0; q < m; ++q) {
                                const double sl = ls[q];
                                const double sr = tot.sums[static_cast<std::size_t>(q)] - sl;
                                score += sl * sl / wl + sr * sr / wr;
                            }
                            if (score > best[static_cast<std::size_t>(s)].score) {
                                best[static_cast<std::size_t>(s)] = {
                                    score, j, prev_val[static_cast<std::size_t>(s)] +
                                                  0.5 * (x - prev_val[static_cast<std::size_t>(s)])};
                            }
                        }
                    }
                    left_w[static_cast<std::size_t>(s)] += weights[idx];
                    left_c[static_cast<std::size_t>(s)] += 1;
                    for (int q = 0; q < m; ++q) ls[q] += weights[idx] * targets(idx, q);
                    prev_val[static_cast<std::size_t>(s)] = x;
                    has_prev[static_cast<std::size_t>(s)] = 1;
                }
            }
        } else {
            // Feature ranges per scanned node, then one threshold draw each.
            std::vector<double> lo(static_cast<std::size_t>(n_active) * static_cast<std::size_t>(d), kInf);
            std::vector<double> hi(static_cast<std::size_t>(n_active) * static_cast<std::size_t>(d), -kInf);
            for (int i = 0; i < n; ++i) {
                const int s = slot[static_cast<std::size_t>(row_node[static_cast<std::size_t>(i)])];
                if (s < 0) continue;
                for (int j = 0; j < d; ++j) {
                    const double x = inputs(i, j);
                    auto& l = lo[static_cast<std::size_t>(s) * static_cast<std::size_t>(d) + static_cast<std::size_t>(j)];
                    auto& h = hi[static_cast<std::size_t>(s) * static_cast<std::size_t>(d) + static_cast<std::size_t>(j)];
                    l = std::min(l, x);
                    h = std::max(h, x);
                }
            }
            std::vector<double> thr(static_cast<std::size_t>(n_active) * static_cast<std::size_t>(d),
                                    std::numeric_limits<double>::quiet_NaN());
            for (int s = 0; s < n_active; ++s) {
                for (int j = 0; j < d; ++j) {
                    const auto at = static_cast<std::size_t>(s) * static_cast<std::size_t>(d) + static_cast<std::size_t>(j);
                    if (hi[at] > lo[at]) {
                        std::uniform_real_distribution<double> unif(lo[at], hi[at]);
                        thr[at] = unif(*rng);
                    }
                }
            }
            const std::size_t block = static_cast<std::size_t>(d) * static_cast<std::size_t>(m);
            std::vector<double> left_s(static_cast<std::size_t>(n_active) * block, 0.0);
            std::vector<double> left_w(static_cast<std::size_t>(n_active) * static_cast<std::size_t>(d), 0.0);
            std::vector<int> left_c(static_cast<std::size_t>(n_active) * static_cast<std::size_t>(d), 0);
            for (int i = 0; i < n; ++i) {
                const int s = slot[static_cast<std::size_t>(row_node[static_cast<std::size_t>(i)])];
                if (s < 0) continue;
                for (int j = 0; j < d; ++j) {
                    const auto at = static_cast<std::size_t>(s) * static_cast<std::size_t>(d) + static_cast<std::size_t>(j);
                    if (std::isnan(thr[at]) || !(inputs(i, j) <= thr[at])) continue;
                    left_w[at] += weights[i];
                    left_c[at] += 1;
                    double* ls = &left_s[static_cast<std::size_t>(s) * block +
                                         static_cast<std::size_t>(j) * static_cast<std::size_t>(m)];
                    for (int q = 0; q < m; ++q) ls[q] += weights[i] * targets(i, q);
                }
            }
            for (int s = 0; s < n_active; ++s) {
                const auto& tot = stats[static_cast<std::size_t>(scan_nodes[static_cast<std::size_t>(s)])];
                for (int j = 0; j < d; ++j) {
                    const auto at = static_cast<std::size_t>(s) * static_cast<std::size_t>(d) + static_cast<std::size_t>(j);
                    if (std::isnan(thr[at])) continue;
                    const double wl = left_w[at];
                    const double wr = tot.weight - wl;
                    const int cl = left_c[at];
                    const int cr = tot.count - cl;
                    if (cl < min_leaf || cr < min_leaf || wl <= kWeightEps || wr <= kWeightEps) continue;
                    const double* ls = &left_s[static_cast<std::size_t>(s) * block +
                                               static_cast<std::size_t>(j) * static_cast<std::size_t>(m)];
                    double score = 0.0;
                    for (int q = 0; q < m; ++q) {
                        const double sl = ls[q];
                        const double sr = tot.sums[static_cast<std::size_t>(q)] - sl;
                        score += sl * sl / wl + sr * sr / wr;
                    }
                    if (score > best[static_cast<std::size_t>(s)].score)
                        best[static_cast<std::size_t>(s)] = {score, j, thr[at]};
                }
            }
        }

        // Accept a split only when it strictly beats keeping the node whole.
        std::vector<char> split_here(tree.nodes.size(), 0);
        std::vector<int> next;
        for (int s = 0; s < n_active; ++s) {
            const int node = scan_nodes[static_cast<std::size_t>(s)];
            const auto& tot = stats[static_cast<std::size_t>(node)];
            const auto& choice = best[static_cast<std::size_t>(s)];
            if (choice.feature < 0) continue;
            const double parent = nodeScore(tot.sums.data(), m, tot.weight);
            if (!(choice.score > parent + 1e-12 * (1.0 + std::abs(parent)))) continue;
            const int left_id = static_cast<int>(tree.nodes.size());
            tree.nodes.push_back(TreeNode{});
            tree.nodes.push_back(TreeNode{});
            tree.nodes[static_cast<std::size_t>(node)].feature = choice.feature;
            tree.nodes[static_cast<std::size_t>(node)].threshold = choice.threshold;
            tree.nodes[static_cast<std::size_t>(node)].left = left_id;
            tree.nodes[static_cast<std::size_t>(node)].right = left_id + 1;
            stats.emplace_back();
            stats.emplace_back();
            stats[static_cast<std::size_t>(left_id)].sums.assign(static_cast<std::size_t>(m), 0.0);
            stats[static_cast<std::size_t>(left_id) + 1].sums.assign(static_cast<std::size_t>(m), 0.0);
            split_here.resize(tree.nodes.size(), 0);
            split_here[static_cast<std::size_t>(node)] = 1;
            next.push_back(left_id);
            next.push_back(left_id + 1);
        }
        if (next.empty()) break;
        for (int i = 0; i < n; ++i) {
            const int node = row_node[static_cast<std::size_t>(i)];
            if (!split_here[static_cast<std::size_t>(node)]) continue;
            const auto& nd = tree.nodes[static_cast<std::size_t>(node)];
            const int child = inputs(i, nd.feature) <= nd.threshold ? nd.left : nd.right;
            row_node[static_cast<std::size_t>(i)] = child;
            auto& cs = stats[static_cast<std::size_t>(child)];
            cs.weight += weights[i];
            cs.count += 1;
            for (int q = 0; q < m; ++q) cs.sums[static_cast<std::size_t>(q)] += weights[i] * targets(i, q);
        }
        active = std::move(next);
    }

    for (std::size_t node = 0; node < tree.nodes.size(); ++node) {
        if (tree.nodes[node].feature >= 0) continue;
        tree.nodes[node].leaf = static_cast<int>(tree.leaf_values.size());
        const auto& st = stats[node];
        std::vector<double> value(static_cast<std::size_t>(m), 0.0);
        if (st.weight > kWeightEps) {
            for (int q = 0; q < m; ++q) value[static_cast<std::size_t>(q)] = st.sums[static_cast<std::size_t>(q)] / st.weight;
        }
        tree.leaf_values.push_back(std::move(value));
    }

    if (leaf_of_row) {
        leaf_of_row->resize(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i)
            (*leaf_of_row)[static_cast<std::size_t>(i)] =
                tree.nodes[static_cast<std::size_t>(row_node[static_cast<std::size_t>(i)])].leaf;
    }
    return tree;
}

}  // namespace

LearnerFamily parseLearnerFamily(const std::string& name) {
    if (name == "ridge") return LearnerFamily::Ridge;
    if (name == "boosted_trees" || name == "boosted") return LearnerFamily::BoostedTrees;
    if (name == "randomized_trees" || name == "randomized") return LearnerFamily::RandomizedTrees;
    if (name == "mlp") return LearnerFamily::Mlp;
    throw ConfigError("unknown learner family '" + name +
                      "' (expected ridge, boosted_trees, randomized_trees, or mlp)");
}

std::string learnerFamilyName(LearnerFamily family) {
    switch (family) {
        case LearnerFamily::Ridge: return "ridge";
        case LearnerFamily::BoostedTrees: return "boosted_trees";
        case LearnerFamily::RandomizedTrees: return "randomized_trees";
        case LearnerFamily::Mlp: return "mlp";
    }
    throw ConfigError("unknown learner family tag");
}

bool familyUsesEarlyStopping(LearnerFamily family) {
    return family == LearnerFamily::BoostedTrees || family == LearnerFamily::Mlp;
}

int RegressionTree::leafIndex(const Matrix& inputs, int row) const {
    int cur = 0;
    while (nodes[static_cast<std::size_t>(cur)].feature >= 0) {
        const auto& nd = nodes[static_cast<std::size_t>(cur)];
        cur = inputs(row, nd.feature) <= nd.threshold ? nd.left : nd.right;
    }
    return nodes[static_cast<std::size_t>(cur)].leaf;
}

void RidgeRegressor::fit(const Matrix& inputs, const Matrix& targets, const Vector& weights) {
    validateFitInputs(inputs, targets, weights);
    if (config_.lambda < 0.0) throw ConfigError("ridge penalty must be nonnegative");
    const Eigen::Index n = inputs.rows();
    const Eigen::Index p = inputs.cols() + 1;
    Matrix design(n, p);
    design.leftCols(inputs.cols()) = inputs;
    design.col(p - 1).setOnes();
    const Vector w = normalizedWeights(weights);
    Matrix gram = design.transpose() * w.asDiagonal() * design;
    gram.diagonal().array() += config_.lambda;
    const Matrix rhs = design.transpose() * (w.asDiagonal() * targets);
    Eigen::LDLT<Matrix> solver(gram);
    if (solver.info() != Eigen::Success) throw NumericError("ridge solve failed");
    coef_ = solver.solve(rhs);
    if (!coef_.allFinite()) throw NumericError("ridge produced non-finite coefficients");
    fitted_ = true;
}

Matrix RidgeRegressor::predict(const Matrix& inputs) const {
    if (!fitted_) throw std::logic_error("RidgeRegressor::predict before fit");
    if (inputs.cols() + 1 != coef_.rows()) throw DataError("ridge predict: feature count mismatch");
    return inputs * coef_.topRows(inputs.cols()) + Vector::Ones(inputs.rows()) * coef_.row(coef_.rows() - 1);
}

std::unique_ptr<WeightedRegressor> RidgeRegressor::clone() const {
    return std::make_unique<RidgeRegressor>(*this);
}

void RidgeRegressor::setCoefficients(Matrix coef) {
    if (coef.rows() < 1 || coef.cols() < 1) throw DataError("ridge coefficients must be non-empty");
    coef_ = std::move(coef);
    fitted_ = true;
}

void TreeEnsembleRegressor::fit(const Matrix& inputs, const Matrix& targets, const Vector& weights) {
    validateFitInputs(inputs, targets, weights);
    if (config_.n_trees < 1) throw ConfigError("tree ensemble needs at least one tree");
    const int n = static_cast<int>(inputs.rows());
    const int m = static_cast<int>(targets.cols());
    const Vector w = normalizedWeights(weights);
    n_inputs_ = static_cast<int>(inputs.cols());
    n_outputs_ = m;
    trees_.clear();
    base_.clear();

    if (config_.mode == TreeMode::Boosted) {
        const auto sorted = presortColumns(inputs);
        base_ = weightedColumnMeans(targets, w);
        Matrix fit_pred(n, m);
        for (int q = 0; q < m; ++q) fit_pred.col(q).setConstant(base_[static_cast<std::size_t>(q)]);

        const bool monitored = has_monitor_;
        Matrix mon_pred;
        if (monitored) {
            if (monitor_targets_.cols() != m || monitor_inputs_.cols() != inputs.cols())
                throw DataError("tree monitor shape does not match the training data");
            mon_pred.resize(monitor_inputs_.rows(), m);
            for (int q = 0; q < m; ++q) mon_pred.col(q).setConstant(base_[static_cast<std::size_t>(q)]);
        }
        double best_loss = kInf;
        int best_n = 0;
        int stale = 0;
        std::vector<int> leaf_of_row;
        for (int t = 0; t < config_.n_trees; ++t) {
            const Matrix residual = targets - fit_pred;
            RegressionTree tree = buildTree(inputs, residual, w, sorted, config_, nullptr, &leaf_of_row);
            for (int i = 0; i < n; ++i) {
                const auto& value = tree.leaf_values[static_cast<std::size_t>(leaf_of_row[static_cast<std::size_t>(i)])];
                for (int q = 0; q < m; ++q) fit_pred(i, q) += config_.learning_rate * value[static_cast<std::size_t>(q)];
            }
            trees_.push_back(std::move(tree));
            if (!monitored) continue;
            const auto& grown = trees_.back();
            for (Eigen::Index i = 0; i < monitor_inputs_.rows(); ++i) {
                const auto& value = grown.leafValue(monitor_inputs_, static_cast<int>(i));
                for (int q = 0; q < m; ++q) mon_pred(i, q) += config_.learning_rate * value[static_cast<std::size_t>(q)];
            }
            const double loss = (mon_pred - monitor_targets_).squaredNorm();
            if (loss + 1e-12 < best_loss) {
                best_loss = loss;
                best_n = t + 1;
                stale = 0;
            } else if (++stale >= config_.early_stopping_rounds) {
                break;
            }
        }
        if (monitored && best_n > 0) trees_.resize(static_cast<std::size_t>(best_n));
    } else {
        for (int t = 0; t < config_.n_trees; ++t) {
            auto tree_rng = rng::makeStream(config_.seed, "tree", static_cast<std::uint64_t>(t));
            trees_.push_back(buildTree(inputs, targets, w, {}, config_, &tree_rng, nullptr));
        }
    }
    fitted_ = true;
}

Matrix TreeEnsembleRegressor::predict(const Matrix& inputs) const {
    if (!fitted_) throw std::logic_error("TreeEnsembleRegressor::predict before fit");
    if (inputs.cols() != n_inputs_) throw DataError("tree predict: feature count mismatch");
    const int n = static_cast<int>(inputs.rows());
    Matrix out = Matrix::Zero(n, n_outputs_);
    if (config_.mode == TreeMode::Boosted) {
        for (int q = 0; q < n_outputs_; ++q) out.col(q).setConstant(base_[static_cast<std::size_t>(q)]);
        for (const auto& tree : trees_) {
            for (int i = 0; i < n; ++i) {
                const auto& value = tree.leafValue(inputs, i);
                for (int q = 0; q < n_outputs_; ++q)
                    out(i, q) += config_.learning_rate * value[static_cast<std::size_t>(q)];
            }
        }
    } else {
        for (const auto& tree : trees_) {
            for (int i = 0; i < n; ++i) {
                const auto& value = tree.leafValue(inputs, i);
                for (int q = 0; q < n_outputs_; ++q) out(i, q) += value[static_cast<std::size_t>(q)];
            }
        }
        out /= static_cast<double>(trees_.size());
    }
    return out;
}

void TreeEnsembleRegressor::setMonitor(const Matrix& inputs, const Matrix& targets) {
    if (inputs.rows() != targets.rows() || inputs.rows() == 0)
        throw DataError("tree monitor: empty or mismatched rows");
    monitor_inputs_ = inputs;
    monitor_targets_ = targets;
    has_monitor_ = true;
}

void TreeEnsembleRegressor::clearMonitor() {
    has_monitor_ = false;
    monitor_inputs_.resize(0, 0);
    monitor_targets_.resize(0, 0);
}

std::unique_ptr<WeightedRegressor> TreeEnsembleRegressor::clone() const {
    return std::make_unique<TreeEnsembleRegressor>(*this);
}

void TreeEnsembleRegressor::setModel(std::vector<RegressionTree> trees, std::vector<double> base,
                                     int n_inputs, int n_outputs) {
    if (trees.empty() || n_outputs < 1 || n_inputs < 0) throw DataError("tree model restore: empty model");
    trees_ = std::move(trees);
    base_ = std::move(base);
    n_inputs_ = n_inputs;
    n_outputs_ = n_outputs;
    fitted_ = true;
}

namespace {

struct MlpParams {
    std::vector<Matrix> weights;  // per layer, fan_out x fan_in
    std::vector<Vector> biases;
};

MlpParams initMlpParams(const std::vector<int>& dims, std::uint64_t seed) {
    auto gen = rng::makeStream(seed, "mlp_init", 0);
    std::normal_distribution<double> normal(0.0, 1.0);
    MlpParams params;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        const int fan_in = dims[l];
        const int fan_out = dims[l + 1];
        Matrix w(fan_out, fan_in);
        const double scale = std::sqrt(2.0 / static_cast<double>(std::max(1, fan_in)));
        for (int c = 0; c < fan_in; ++c)
            for (int r = 0; r < fan_out; ++r) w(r, c) = scale * normal(gen);
        params.weights.push_back(std::move(w));
        params.biases.push_back(Vector::Zero(fan_out));
    }
    return params;
}

Matrix mlpForward(const MlpParams& params, const Matrix& inputs, std::vector<Matrix>* activations) {
    Matrix a = inputs;
    if (activations) {
        activations->clear();
        activations->push_back(a);
    }
    const std::size_t layers = params.weights.size();
    for (std::size_t l = 0; l < layers; ++l) {
        Matrix z = a * params.weights[l].transpose();
        z.rowwise() += params.biases[l].transpose();
        if (l + 1 < layers) z = z.cwiseMax(0.0);
        a = std::move(z);
        if (activations) activations->push_back(a);
    }
    return a;
}

// Full-batch Adam. lossGrad fills dLoss/dOutput and returns the loss; with a
// monitor, the best-epoch parameters are restored at the end.
MlpParams trainMlp(MlpParams params, const Matrix& inputs, const MlpConfig& cfg,
                   const std::function<double(const Matrix&, Matrix&)>& lossGrad,
                   const Matrix* monitor_inputs, const std::function<double(const Matrix&)>& monitorLoss) {
    const double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
    const std::size_t layers = params.weights.size();
    std::vector<Matrix> mw(layers), vw(layers);
    std::vector<Vector> mb(layers), vb(layers);
    for (std::size_t l = 0; l < layers; ++l) {
        mw[l] = Matrix::Zero(params.weights[l].rows(), params.weights[l].cols());
        vw[l] = mw[l];
        mb[l] = Vector::Zero(params.biases[l].size());
        vb[l] = mb[l];
    }

    MlpParams best = params;
    double best_loss = kInf;
    int stale = 0;
    std::vector<Matrix> acts;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const Matrix out = mlpForward(params, inputs, &acts);
        Matrix delta(out.rows(), out.cols());
        const double loss = lossGrad(out, delta);
        if (!std::isfinite(loss)) throw NumericError("mlp training diverged");

        for (std::size_t l = layers; l-- > 0;) {
            const Matrix grad_w = delta.transpose() * acts[l];
            const Vector grad_b = delta.colwise().sum().transpose();
            if (l > 0) {
                delta = (delta * params.weights[l]).cwiseProduct(
                    (acts[l].array() > 0.0).cast<double>().matrix());
            }
            const double t = static_cast<double>(epoch);
            mw[l] = beta1 * mw[l] + (1.0 - beta1) * grad_w;
            vw[l] = beta2 * vw[l] + (1.0 - beta2) * grad_w.cwiseProduct(grad_w);
            mb[l] = beta1 * mb[l] + (1.0 - beta1) * grad_b;
            vb[l] = beta2 * vb[l] + (1.0 - beta2) * grad_b.cwiseProduct(grad_b);
            const double c1 = 1.0 - std::pow(beta1, t);
            const double c2 = 1.0 - std::pow(beta2, t);
            params.weights[l] -= (cfg.learning_rate * (mw[l] / c1).array() /
                                  ((vw[l] / c2).array().sqrt() + adam_eps))
                                     .matrix();
            params.biases[l] -= (cfg.learning_rate * (mb[l] / c1).array() /
                                 ((vb[l] / c2).array().sqrt() + adam_eps))
                                    .matrix();
        }

        if (monitor_inputs) {
            const double mon = monitorLoss(mlpForward(params, *monitor_inputs, nullptr));
            if (mon + 1e-12 < best_loss) {
                best_loss = mon;
                best = params;
                stale = 0;
            } else if (++stale >= cfg.patience) {
                break;
            }
        }
    }
    return monitor_inputs ? best : params;
}

}  // namespace

void MlpRegressor::fit(const Matrix& inputs, const Matrix& targets, const Vector& weights) {
    validateFitInputs(inputs, targets, weights);
    if (config_.hidden_layers < 1 || config_.hidden_width < 1 || config_.epochs < 1)
        throw ConfigError("mlp needs at least one hidden layer, one unit, and one epoch");
    const Vector w = normalizedWeights(weights);
    n_outputs_ = static_cast<int>(targets.cols());

    std::vector<int> dims{static_cast<int>(inputs.cols())};
    for (int l = 0; l < config_.hidden_layers; ++l) dims.push_back(config_.hidden_width);
    dims.push_back(n_outputs_);

    const double denom = static_cast<double>(inputs.rows()) * static_cast<double>(targets.cols());
    auto lossGrad = [&](const Matrix& out, Matrix& delta) {
        const Matrix diff = out - targets;
        delta = (2.0 / denom) * (w.asDiagonal() * diff);
        return (w.asDiagonal() * diff.cwiseProduct(diff)).sum() / denom;
    };
    const Matrix* mon = has_monitor_ ? &monitor_inputs_ : nullptr;
    auto monLoss = [&](const Matrix& out) {
        return (out - monitor_targets_).squaredNorm() / static_cast<double>(out.size());
    };
    if (has_monitor_ &&
        (monitor_targets_.cols() != targets.cols() || monitor_inputs_.cols() != inputs.cols()))
        throw DataError("mlp monitor shape does not match the training data");

    MlpParams params = trainMlp(initMlpParams(dims, config_.seed), inputs, config_, lossGrad, mon, monLoss);
    weights_ = std::move(params.weights);
    biases_ = std::move(params.biases);
    fitted_ = true;
}

Matrix MlpRegressor::predict(const Matrix& inputs) const {
    if (!fitted_) throw std::logic_error("MlpRegressor::predict before fit");
    if (inputs.cols() != weights_.front().cols()) throw DataError("mlp predict: feature count mismatch");
    MlpParams params{weights_, biases_};
    return mlpForward(params, inputs, nullptr);
}

void MlpRegressor::setMonitor(const Matrix& inputs, const Matrix& targets) {
    if (inputs.rows() != targets.rows() || inputs.rows() == 0)
        throw DataError("mlp monitor: empty or mismatched rows");
    monitor_inputs_ = inputs;
    monitor_targets_ = targets;
    has_monitor_ = true;
}

void MlpRegressor::clearMonitor() {
    has_monitor_ = false;
    monitor_inputs_.resize(0, 0);
    monitor_targets_.resize(0, 0);
}

std::unique_ptr<WeightedRegressor> MlpRegressor::clone() const {
    return std::make_unique<MlpRegressor>(*this);
}

void MlpRegressor::setParameters(std::vector<Matrix> weights, std::vector<Vector> biases) {
    if (weights.empty() || weights.size() != biases.size())
        throw DataError("mlp restore: inconsistent parameter stack");
    for (std::size_t l = 0; l < weights.size(); ++l) {
        if (weights[l].rows() != biases[l].size()) throw DataError("mlp restore: layer shape mismatch");
        if (l > 0 && weights[l].cols() != weights[l - 1].rows())
            throw DataError("mlp restore: layer chain mismatch");
    }
    n_outputs_ = static_cast<int>(weights.back().rows());
    weights_ = std::move(weights);
    biases_ = std::move(biases);
    fitted_ = true;
}

std::unique_ptr<WeightedRegressor> makeRegressor(const LearnerConfig& config, std::uint64_t seed) {
    switch (config.family) {
        case LearnerFamily::Ridge:
            return std::make_unique<RidgeRegressor>(config.ridge);
        case LearnerFamily::BoostedTrees: {
            TreeEnsembleConfig c = config.trees;
            c.mode = TreeMode::Boosted;
            c.seed = seed;
            return std::make_unique<TreeEnsembleRegressor>(c);
        }
        case LearnerFamily::RandomizedTrees: {
            TreeEnsembleConfig c = config.trees;
            c.mode = TreeMode::Randomized;
            c.seed = seed;
            return std::make_unique<TreeEnsembleRegressor>(c);
        }
        case LearnerFamily::Mlp: {
            MlpConfig c = config.mlp;
            c.seed = seed;
            return std::make_unique<MlpRegressor>(c);
        }
    }
    throw ConfigError("unknown learner family tag");
}

class QuantileRegressor::Impl {
public:
    virtual ~Impl() = default;
    virtual std::pair<Vector, Vector> predictRaw(const Matrix& inputs) const = 0;
    virtual std::unique_ptr<Impl> clone() const = 0;
};

namespace {

double pinballObjective(const Vector& residuals, double tau) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < residuals.size(); ++i) {
        const double r = residuals[i];
        total += r >= 0.0 ? tau * r : (tau - 1.0) * r;
    }
    return total;
}

// Iteratively reweighted least squares on the smoothed pinball loss.
Vector fitPinballIrls(const Matrix& design, const Vector& outcome, double tau, double lambda) {
    const double smooth = 1e-6;
    Matrix gram = design.transpose() * design;
    gram.diagonal().array() += std::max(lambda, 1e-10);
    Vector beta = Eigen::LDLT<Matrix>(gram).solve(design.transpose() * outcome);
    double prev = kInf;
    for (int it = 0; it < 500; ++it) {
        const Vector residual = outcome - design * beta;
        Vector irls_w(residual.size());
        for (Eigen::Index i = 0; i < residual.size(); ++i) {
            const double a = residual[i] >= 0.0 ? tau : 1.0 - tau;
            irls_w[i] = a / std::sqrt(residual[i] * residual[i] + smooth * smooth);
        }
        Matrix g = design.transpose() * irls_w.asDiagonal() * design;
        g.diagonal().array() += std::max(lambda, 1e-10);
        beta = Eigen::LDLT<Matrix>(g).solve(design.transpose() * (irls_w.asDiagonal() * outcome));
        if (!beta.allFinite()) throw NumericError("quantile ridge solve produced non-finite coefficients");
        const double obj = pinballObjective(outcome - design * beta, tau);
        if (std::abs(prev - obj) <= 1e-12 * std::max(1.0, std::abs(obj))) break;
        prev = obj;
    }
    return beta;
}

Matrix augmented(const Matrix& inputs) {
    Matrix design(inputs.rows(), inputs.cols() + 1);
    design.leftCols(inputs.cols()) = inputs;
    design.col(inputs.cols()).setOnes();
    return design;
}

class RidgeQuantileImpl final : public QuantileRegressor::Impl {
public:
    Vector beta_low, beta_high;

    std::pair<Vector, Vector> predictRaw(const Matrix& inputs) const override {
        const Matrix design = augmented(inputs);
        if (design.cols() != beta_low.size()) throw DataError("quantile ridge predict: feature count mismatch");
        return {design * beta_low, design * beta_high};
    }
    std::unique_ptr<QuantileRegressor::Impl> clone() const override {
        return std::make_unique<RidgeQuantileImpl>(*this);
    }
};

class BoostedQuantileImpl final : public QuantileRegressor::Impl {
public:
    TreeEnsembleRegressor point;
    RegressionTree residual_tree;  // leaves hold {lower, upper} residual quantiles

    std::pair<Vector, Vector> predictRaw(const Matrix& inputs) const override {
        const Vector base = point.predict(inputs).col(0);
        Vector lower(inputs.rows()), upper(inputs.rows());
        for (Eigen::Index i = 0; i < inputs.rows(); ++i) {
            const auto& value = residual_tree.leafValue(inputs, static_cast<int>(i));
            lower[i] = base[i] + value[0];
            upper[i] = base[i] + value[1];
        }
        return {lower, upper};
    }
    std::unique_ptr<QuantileRegressor::Impl> clone() const override {
        return std::make_unique<BoostedQuantileImpl>(*this);
    }
};

class RandomizedQuantileImpl final : public QuantileRegressor::Impl {
public:
    std::vector<RegressionTree> trees;  // leaves hold {lower, upper} outcome quantiles

    std::pair<Vector, Vector> predictRaw(const Matrix& inputs) const override {
        Vector lower = Vector::Zero(inputs.rows());
        Vector upper = Vector::Zero(inputs.rows());
        for (const auto& tree : trees) {
            for (Eigen::Index i = 0; i < inputs.rows(); ++i) {
                const auto& value = tree.leafValue(inputs, static_cast<int>(i));
                lower[i] += value[0];
                upper[i] += value[1];
            }
        }
        lower /= static_cast<double>(trees.size());
        upper /= static_cast<double>(trees.size());
        return {lower, upper};
    }
    std::unique_ptr<QuantileRegressor::Impl> clone() const override {
        return std::make_unique<RandomizedQuantileImpl>(*this);
    }
};

class MlpQuantileImpl final : public QuantileRegressor::Impl {
public:
    MlpRegressor net;  // two-unit head: column 0 lower, column 1 upper

    std::pair<Vector, Vector> predictRaw(const Matrix& inputs) const override {
        const Matrix out = net.predict(inputs);
        return {out.col(0), out.col(1)};
    }
    std::unique_ptr<QuantileRegressor::Impl> clone() const override {
        return std::make_unique<MlpQuantileImpl>(*this);
    }
};

// Replaces each leaf value with empirical quantiles of the rows it holds.
void fillLeafQuantiles(RegressionTree& tree, const std::vector<int>& leaf_of_row, const Vector& values,
                       double tau_low, double tau_high) {
    std::vector<std::vector<double>> members(tree.leaf_values.size());
    for (Eigen::Index i = 0; i < values.size(); ++i)
        members[static_cast<std::size_t>(leaf_of_row[static_cast<std::size_t>(i)])].push_back(values[i]);
    for (std::size_t leaf = 0; leaf < members.size(); ++leaf) {
        if (members[leaf].empty()) {
            tree.leaf_values[leaf] = {0.0, 0.0};
            continue;
        }
        tree.leaf_values[leaf] = {empiricalQuantile(members[leaf], tau_low),
                                  empiricalQuantile(members[leaf], tau_high)};
    }
}

}  // namespace

QuantileRegressor::QuantileRegressor() = default;

QuantileRegressor::QuantileRegressor(const QuantileRegressor& other)
    : impl_(other.impl_ ? other.impl_->clone() : nullptr),
      tau_low_(other.tau_low_),
      tau_high_(other.tau_high_) {}

QuantileRegressor& QuantileRegressor::operator=(const QuantileRegressor& other) {
    if (this != &other) {
        impl_ = other.impl_ ? other.impl_->clone() : nullptr;
        tau_low_ = other.tau_low_;
        tau_high_ = other.tau_high_;
    }
    return *this;
}

QuantileRegressor::QuantileRegressor(QuantileRegressor&&) noexcept = default;

QuantileRegressor& QuantileRegressor::operator=(QuantileRegressor&&) noexcept = default;

QuantileRegressor::~QuantileRegressor() = default;

std::pair<Vector, Vector> QuantileRegressor::predict(const Matrix& inputs) const {
    if (!impl_) throw std::logic_error("QuantileRegressor::predict before fit");
    auto [lower, upper] = impl_->predictRaw(inputs);
    for (Eigen::Index i = 0; i < lower.size(); ++i)
        if (lower[i] > upper[i]) std::swap(lower[i], upper[i]);
    return {std::move(lower), std::move(upper)};
}

QuantileRegressor fitQuantile(const LearnerConfig& config, const Matrix& inputs, const Vector& outcome,
                              double tau_low, double tau_high, std::uint64_t seed,
                              const Matrix* monitor_inputs, const Vector* monitor_outcome) {
    if (!(tau_low > 0.0 && tau_low < 1.0 && tau_high > 0.0 && tau_high < 1.0 && tau_low < tau_high))
        throw ConfigError("quantile levels must satisfy 0 < tau_low < tau_high < 1");
    if (inputs.rows() == 0 || inputs.rows() != outcome.size())
        throw DataError("fitQuantile: empty data or row count mismatch");
    if (!inputs.allFinite() || !outcome.allFinite()) throw DataError("fitQuantile: non-finite values");
    if ((monitor_inputs == nullptr) != (monitor_outcome == nullptr))
        throw DataError("fitQuantile: monitor inputs and outcome must come together");

    QuantileRegressor model;
    model.tau_low_ = tau_low;
    model.tau_high_ = tau_high;
    const Vector unit = Vector::Ones(inputs.rows());

    switch (config.family) {
        case LearnerFamily::Ridge: {
            auto impl = std::make_unique<RidgeQuantileImpl>();
            const Matrix design = augmented(inputs);
            impl->beta_low = fitPinballIrls(design, outcome, tau_low, config.ridge.lambda);
            impl->beta_high = fitPinballIrls(design, outcome, tau_high, config.ridge.lambda);
            model.impl_ = std::move(impl);
            break;
        }
        case LearnerFamily::BoostedTrees: {
            auto impl = std::make_unique<BoostedQuantileImpl>();
            TreeEnsembleConfig c = config.trees;
            c.mode = TreeMode::Boosted;
            c.seed = rng::deriveSeed(seed, "quantile_point", 0);
            impl->point = TreeEnsembleRegressor(c);
            if (monitor_inputs) impl->point.setMonitor(*monitor_inputs, *monitor_outcome);
            impl->point.fit(inputs, outcome, unit);
            const Vector residual = outcome - impl->point.predict(inputs).col(0);
            std::vector<int> leaf_of_row;
            impl->residual_tree =
                buildTree(inputs, residual, unit, presortColumns(inputs), c, nullptr, &leaf_of_row);
            fillLeafQuantiles(impl->residual_tree, leaf_of_row, residual, tau_low, tau_high);
            model.impl_ = std::move(impl);
            break;
        }
        case LearnerFamily::RandomizedTrees: {
            auto impl = std::make_unique<RandomizedQuantileImpl>();
            TreeEnsembleConfig c = config.trees;
            c.mode = TreeMode::Randomized;
            c.seed = rng::deriveSeed(seed, "quantile_trees", 0);
            for (int t = 0; t < c.n_trees; ++t) {
                auto tree_rng = rng::makeStream(c.seed, "tree", static_cast<std::uint64_t>(t));
                std::vector<int> leaf_of_row;
                RegressionTree tree = buildTree(inputs, outcome, unit, {}, c, &tree_rng, &leaf_of_row);
                fillLeafQuantiles(tree, leaf_of_row, outcome, tau_low, tau_high);
                impl->trees.push_back(std::move(tree));
            }
            model.impl_ = std::move(impl);
            break;
        }
        case LearnerFamily::Mlp: {
            auto impl = std::make_unique<MlpQuantileImpl>();
            MlpConfig c = config.mlp;
            c.seed = rng::deriveSeed(seed, "quantile_mlp", 0);

            std::vector<int> dims{static_cast<int>(inputs.cols())};
            for (int l = 0; l < c.hidden_layers; ++l) dims.push_back(c.hidden_width);
            dims.push_back(2);
            const double taus[2] = {tau_low, tau_high};
            const double n = static_cast<double>(inputs.rows());
            auto lossGrad = [&](const Matrix& out, Matrix& delta) {
                double loss = 0.0;
                for (Eigen::Index i = 0; i < out.rows(); ++i) {
                    for (int j = 0; j < 2; ++j) {
                        const double r = outcome[i] - out(i, j);
                        loss += (r >= 0.0 ? taus[j] * r : (taus[j] - 1.0) * r) / n;
                        delta(i, j) = ((outcome[i] < out(i, j) ? 1.0 : 0.0) - taus[j]) / n;
                    }
                }
                return loss;
            };
            auto monLoss = [&](const Matrix& out) {
                double loss = 0.0;
                for (Eigen::Index i = 0; i < out.rows(); ++i)
                    for (int j = 0; j < 2; ++j) {
                        const double r = (*monitor_outcome)[i] - out(i, j);
                        loss += r >= 0.0 ? taus[j] * r : (taus[j] - 1.0) * r;
                    }
                return loss / static_cast<double>(out.rows());
            };
            MlpParams params =
                trainMlp(initMlpParams(dims, c.seed), inputs, c, lossGrad, monitor_inputs, monLoss);
            impl->net.setParameters(std::move(params.weights), std::move(params.biases));
            model.impl_ = std::move(impl);
            break;
        }
    }
    return model;
}

std::vector<std::unique_ptr<WeightedRegressor>> fitResidualScaleModels(
    const std::vector<std::unique_ptr<WeightedRegressor>>& encoders,
    const std::vector<Matrix>& encoder_inputs, const std::vector<Matrix>& latent_targets,
    const Vector& weights, const LearnerConfig& config, std::uint64_t seed) {
    if (encoders.size() != encoder_inputs.size() || encoders.size() != latent_targets.size())
        throw DataError("fitResidualScaleModels: per-source argument counts differ");
    std::vector<std::unique_ptr<WeightedRegressor>> models;
    models.reserve(encoders.size());
    for (std::size_t k = 0; k < encoders.size(); ++k) {
        const Matrix residual =
            (latent_targets[k] - encoders[k]->predict(encoder_inputs[k])).cwiseAbs();
        auto model = makeRegressor(config, rng::deriveSeed(seed, "residual_scale", k));
        model->fit(encoder_inputs[k], residual, weights);
        models.push_back(std::move(model));
    }
    return models;
}

}  // namespace semf
