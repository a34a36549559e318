#pragma once

#include <string>
#include <vector>

#include "semf/dataset.hpp"
#include "semf/engine.hpp"

namespace semf {

/// Everything needed to reload a trained model and score new rows: the model
/// itself plus the scaler and column names of the data it was trained on.
struct ModelArtifact {
    SemfModel model;
    Scaler scaler;
    std::vector<std::string> feature_names;
    std::string outcome_name;
};

/// Versioned JSON artifact. Loading validates the format tag and version and
/// rebuilds every fitted learner exactly.
void saveModel(const std::string& path, const ModelArtifact& artifact);
ModelArtifact loadModel(const std::string& path);

}  // namespace semf
