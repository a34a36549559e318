#include "semf/model_io.hpp"

#include <json.hpp>

#include <fstream>
#include <memory>

#include "semf/errors.hpp"

namespace semf {

namespace {

using nlohmann::json;

constexpr const char* kFormatTag = "semf-model";
constexpr int kFormatVersion = 1;

json matrixToJson(const Matrix& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

Matrix matrixFromJson(const json& j) {
    if (!j.is_array() || j.empty()) throw DataError("model artifact: malformed matrix");
    const Eigen::Index rows = static_cast<Eigen::Index>(j.size());
    const Eigen::Index cols = static_cast<Eigen::Index>(j.front().size());
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        const auto& row = j[static_cast<std::size_t>(i)];
        if (static_cast<Eigen::Index>(row.size()) != cols)
            throw DataError("model artifact: ragged matrix");
        for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = row[static_cast<std::size_t>(c)].get<double>();
    }
    return m;
}

json vectorToJson(const Vector& v) {
    json out = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
    return out;
}

Vector vectorFromJson(const json& j) {
    Vector v(static_cast<Eigen::Index>(j.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = j[static_cast<std::size_t>(i)].get<double>();
    return v;
}

json treeConfigToJson(const TreeEnsembleConfig& c) {
    return {{"n_trees", c.n_trees},
            {"max_depth", c.max_depth},
            {"mode", c.mode == TreeMode::Boosted ? "boosted" : "randomized"},
            {"learning_rate", c.learning_rate},
            {"early_stopping_rounds", c.early_stopping_rounds},
            {"min_samples_leaf", c.min_samples_leaf},
            {"seed", c.seed}};
}

TreeEnsembleConfig treeConfigFromJson(const json& j) {
    TreeEnsembleConfig c;
    c.n_trees = j.at("n_trees").get<int>();
    c.max_depth = j.at("max_depth").get<int>();
    c.mode = j.at("mode").get<std::string>() == "boosted" ? TreeMode::Boosted : TreeMode::Randomized;
    c.learning_rate = j.at("learning_rate").get<double>();
    c.early_stopping_rounds = j.at("early_stopping_rounds").get<int>();
    c.min_samples_leaf = j.at("min_samples_leaf").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

json learnerToJson(const WeightedRegressor& model) {
    if (const auto* ridge = dynamic_cast<const RidgeRegressor*>(&model)) {
        return {{"kind", "ridge"}, {"coef", matrixToJson(ridge->coefficients())}};
    }
    if (const auto* trees = dynamic_cast<const TreeEnsembleRegressor*>(&model)) {
        json forest = json::array();
        for (const auto& tree : trees->trees()) {
            json nodes = json::array();
            for (const auto& node : tree.nodes)
                nodes.push_back({node.feature, node.threshold, node.left, node.right, node.leaf});
            json leaves = json::array();
            for (const auto& value : tree.leaf_values) leaves.push_back(value);
            forest.push_back({{"nodes", std::move(nodes)}, {"leaves", std::move(leaves)}});
        }
        return {{"kind", "trees"},
                {"config", treeConfigToJson(trees->config())},
                {"n_inputs", trees->numInputs()},
                {"n_outputs", trees->numOutputs()},
                {"base", trees->baseValues()},
                {"forest", std::move(forest)}};
    }
    if (const auto* mlp = dynamic_cast<const MlpRegressor*>(&model)) {
        json weights = json::array();
        for (const auto& w : mlp->layerWeights()) weights.push_back(matrixToJson(w));
        json biases = json::array();
        for (const auto& b : mlp->layerBiases()) biases.push_back(vectorToJson(b));
        return {{"kind", "mlp"}, {"weights", std::move(weights)}, {"biases", std::move(biases)}};
    }
    throw DataError("model artifact: unsupported learner type");
}

std::unique_ptr<WeightedRegressor> learnerFromJson(const json& j) {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "ridge") {
        auto model = std::make_unique<RidgeRegressor>();
        model->setCoefficients(matrixFromJson(j.at("coef")));
        return model;
    }
    if (kind == "trees") {
        auto model = std::make_unique<TreeEnsembleRegressor>(treeConfigFromJson(j.at("config")));
        std::vector<RegressionTree> forest;
        for (const auto& jt : j.at("forest")) {
            RegressionTree tree;
            for (const auto& jn : jt.at("nodes")) {
                TreeNode node;
                node.feature = jn.at(0).get<int>();
                node.threshold = jn.at(1).get<double>();
                node.left = jn.at(2).get<int>();
                node.right = jn.at(3).get<int>();
                node.leaf = jn.at(4).get<int>();
                tree.nodes.push_back(node);
            }
            for (const auto& jl : jt.at("leaves")) tree.leaf_values.push_back(jl.get<std::vector<double>>());
            forest.push_back(std::move(tree));
        }
        model->setModel(std::move(forest), j.at("base").get<std::vector<double>>(),
                        j.at("n_inputs").get<int>(), j.at("n_outputs").get<int>());
        return model;
    }
    if (kind == "mlp") {
        auto model = std::make_unique<MlpRegressor>();
        std::vector<Matrix> weights;
        for (const auto& jw : j.at("weights")) weights.push_back(matrixFromJson(jw));
        std::vector<Vector> biases;
        for (const auto& jb : j.at("biases")) biases.push_back(vectorFromJson(jb));
        model->setParameters(std::move(weights), std::move(biases));
        return model;
    }
    throw DataError("model artifact: unknown learner kind '" + kind + "'");
}

json semfConfigToJson(const SemfConfig& c) {
    return {{"R", c.R},
            {"R_infer", c.R_infer},
            {"m_k", c.m_k},
            {"sigma_mode", c.sigma_mode == SigmaMode::Fixed ? "fixed" : "residual_models"},
            {"sigma_k", c.sigma_k},
            {"patience", c.patience},
            {"max_steps", c.max_steps},
            {"batches", c.batches},
            {"seed", c.seed}};
}

SemfConfig semfConfigFromJson(const json& j) {
    SemfConfig c;
    c.R = j.at("R").get<int>();
    c.R_infer = j.at("R_infer").get<int>();
    c.m_k = j.at("m_k").get<int>();
    c.sigma_mode = j.at("sigma_mode").get<std::string>() == "fixed" ? SigmaMode::Fixed
                                                                    : SigmaMode::ResidualModels;
    c.sigma_k = j.at("sigma_k").get<double>();
    c.patience = j.at("patience").get<int>();
    c.max_steps = j.at("max_steps").get<int>();
    c.batches = j.at("batches").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

json learnerConfigToJson(const LearnerConfig& c) {
    return {{"family", learnerFamilyName(c.family)},
            {"ridge_lambda", c.ridge.lambda},
            {"trees", treeConfigToJson(c.trees)},
            {"mlp",
             {{"hidden_layers", c.mlp.hidden_layers},
              {"hidden_width", c.mlp.hidden_width},
              {"epochs", c.mlp.epochs},
              {"learning_rate", c.mlp.learning_rate},
              {"patience", c.mlp.patience},
              {"seed", c.mlp.seed}}}};
}

LearnerConfig learnerConfigFromJson(const json& j) {
    LearnerConfig c;
    c.family = parseLearnerFamily(j.at("family").get<std::string>());
    c.ridge.lambda = j.at("ridge_lambda").get<double>();
    c.trees = treeConfigFromJson(j.at("trees"));
    const auto& jm = j.at("mlp");
    c.mlp.hidden_layers = jm.at("hidden_layers").get<int>();
    c.mlp.hidden_width = jm.at("hidden_width").get<int>();
    c.mlp.epochs = jm.at("epochs").get<int>();
    c.mlp.learning_rate = jm.at("learning_rate").get<double>();
    c.mlp.patience = jm.at("patience").get<int>();
    c.mlp.seed = jm.at("seed").get<std::uint64_t>();
    return c;
}

}  // namespace

void saveModel(const std::string& path, const ModelArtifact& artifact) {
    const SemfModel& model = artifact.model;
    if (!model.decoder || model.encoders.empty())
        throw DataError("saveModel: model is not trained");

    json j;
    j["format"] = kFormatTag;
    j["version"] = kFormatVersion;
    j["config"] = semfConfigToJson(model.config);
    j["learners"] = learnerConfigToJson(model.learners);
    j["source_partition"] = model.source_partition;
    j["sigma"] = model.sigma;
    j["history"] = {{"validation_rmse", model.history.validation_rmse},
                    {"best_step", model.history.best_step},
                    {"uniform_weight_fallbacks", model.history.uniform_weight_fallbacks}};

    json encoders = json::array();
    for (const auto& encoder : model.encoders) encoders.push_back(learnerToJson(*encoder));
    j["encoders"] = std::move(encoders);
    json scales = json::array();
    for (const auto& scale : model.scale_models) scales.push_back(learnerToJson(*scale));
    j["scale_models"] = std::move(scales);
    j["decoder"] = learnerToJson(*model.decoder);

    j["scaler"] = {{"feature_mean", vectorToJson(artifact.scaler.feature_mean)},
                   {"feature_sd", vectorToJson(artifact.scaler.feature_sd)},
                   {"outcome_mean", artifact.scaler.outcome_mean},
                   {"outcome_sd", artifact.scaler.outcome_sd}};
    j["feature_names"] = artifact.feature_names;
    j["outcome_name"] = artifact.outcome_name;

    std::ofstream out(path);
    if (!out) throw DataError("saveModel: cannot open '" + path + "' for writing");
    out << j.dump(1) << "\n";
    if (!out) throw DataError("saveModel: write to '" + path + "' failed");
}

ModelArtifact loadModel(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("loadModel: cannot open '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw DataError("loadModel: '" + path + "' is not valid JSON: " + e.what());
    }
    try {
        if (j.at("format").get<std::string>() != kFormatTag)
            throw DataError("loadModel: '" + path + "' is not a model artifact");
        if (j.at("version").get<int>() != kFormatVersion)
            throw DataError("loadModel: unsupported artifact version");

        ModelArtifact artifact;
        SemfModel& model = artifact.model;
        model.config = semfConfigFromJson(j.at("config"));
        model.learners = learnerConfigFromJson(j.at("learners"));
        model.source_partition = j.at("source_partition").get<std::vector<std::vector<int>>>();
        model.sigma = j.at("sigma").get<double>();
        const auto& jh = j.at("history");
        model.history.validation_rmse = jh.at("validation_rmse").get<std::vector<double>>();
        model.history.best_step = jh.at("best_step").get<int>();
        model.history.uniform_weight_fallbacks = jh.at("uniform_weight_fallbacks").get<int>();

        for (const auto& je : j.at("encoders")) model.encoders.push_back(learnerFromJson(je));
        for (const auto& js : j.at("scale_models")) model.scale_models.push_back(learnerFromJson(js));
        model.decoder = learnerFromJson(j.at("decoder"));

        const auto& js = j.at("scaler");
        artifact.scaler.feature_mean = vectorFromJson(js.at("feature_mean"));
        artifact.scaler.feature_sd = vectorFromJson(js.at("feature_sd"));
        artifact.scaler.outcome_mean = js.at("outcome_mean").get<double>();
        artifact.scaler.outcome_sd = js.at("outcome_sd").get<double>();
        artifact.feature_names = j.at("feature_names").get<std::vector<std::string>>();
        artifact.outcome_name = j.at("outcome_name").get<std::string>();
        return artifact;
    } catch (const json::exception& e) {
        throw DataError("loadModel: artifact '" + path + "' is missing fields: " + e.what());
    }
}

}  // namespace semf
