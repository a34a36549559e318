#include "semf/simulation.hpp"

#include <cmath>

#include "semf/errors.hpp"
#include "semf/rng.hpp"

namespace semf {

SignalKind parseSignal(const std::string& name) {
    if (name == "cosine") return SignalKind::Cosine;
    if (name == "quadratic_periodic" || name == "quadratic") return SignalKind::QuadraticPeriodic;
    throw ConfigError("unknown signal '" + name + "' (expected cosine or quadratic_periodic)");
}

std::string signalName(SignalKind signal) {
    return signal == SignalKind::Cosine ? "cosine" : "quadratic_periodic";
}

NoiseKind parseNoise(const std::string& name) {
    if (name == "normal") return NoiseKind::Normal;
    if (name == "uniform") return NoiseKind::Uniform;
    if (name == "lognormal") return NoiseKind::LognormalCentered;
    if (name == "gumbel") return NoiseKind::Gumbel;
    if (name == "none") return NoiseKind::None;
    throw ConfigError("unknown noise '" + name +
                      "' (expected normal, uniform, lognormal, gumbel, or none)");
}

std::string noiseName(NoiseKind noise) {
    switch (noise) {
        case NoiseKind::Normal: return "normal";
        case NoiseKind::Uniform: return "uniform";
        case NoiseKind::LognormalCentered: return "lognormal";
        case NoiseKind::Gumbel: return "gumbel";
        case NoiseKind::None: return "none";
    }
    throw ConfigError("unknown noise tag");
}

double signalValue(SignalKind signal, const Vector& x) {
    if (!x.allFinite()) throw DataError("signalValue: non-finite input");
    double total = 0.0;
    if (signal == SignalKind::Cosine) {
        for (Eigen::Index j = 0; j < x.size(); ++j) total += std::cos(x[j]);
    } else {
        for (Eigen::Index j = 0; j < x.size(); ++j) total += x[j] * x[j] + 0.5 * std::sin(3.0 * x[j]);
    }
    return total;
}

double sampleNoise(NoiseKind noise, std::mt19937_64& gen) {
    switch (noise) {
        case NoiseKind::Normal: {
            std::normal_distribution<double> law(0.0, 0.5);
            return law(gen);
        }
        case NoiseKind::Uniform: {
            std::uniform_real_distribution<double> law(-0.5, 0.5);
            return law(gen);
        }
        case NoiseKind::LognormalCentered: {
            std::lognormal_distribution<double> law(0.0, 0.5);
            return law(gen) - std::exp(0.125);
        }
        case NoiseKind::Gumbel: {
            std::extreme_value_distribution<double> law(0.0, 0.5);
            return law(gen);
        }
        case NoiseKind::None: return 0.0;
    }
    throw ConfigError("unknown noise tag");
}

Dataset generateWithNoise(const SimSpec& spec, Vector* noise_out) {
    if (spec.n < 1 || spec.k < 1) throw ConfigError("simulation needs n >= 1 and k >= 1");
    auto gen = rng::makeStream(spec.seed, "simulate", 0);

    Matrix features(spec.n, spec.k);
    std::normal_distribution<double> standard_normal(0.0, 1.0);
    for (int i = 0; i < spec.n; ++i)
        for (int j = 0; j < spec.k; ++j) features(i, j) = standard_normal(gen);

    Vector noise(spec.n);
    for (int i = 0; i < spec.n; ++i) noise[i] = sampleNoise(spec.noise, gen);

    Vector outcome(spec.n);
    for (int i = 0; i < spec.n; ++i)
        outcome[i] = signalValue(spec.signal, features.row(i).transpose()) + noise[i];

    Dataset dataset;
    dataset.features = std::move(features);
    dataset.outcome = std::move(outcome);
    dataset.feature_names.reserve(static_cast<std::size_t>(spec.k));
    for (int j = 0; j < spec.k; ++j) dataset.feature_names.push_back("x" + std::to_string(j + 1));
    dataset.outcome_name = "y";
    dataset.source_partition = singleColumnPartition(spec.k);
    if (noise_out) *noise_out = std::move(noise);
    return dataset;
}

Dataset generate(const SimSpec& spec) { return generateWithNoise(spec, nullptr); }

std::string datasetLabel(const SimSpec& spec) {
    return signalName(spec.signal) + "_" + noiseName(spec.noise);
}

}  // namespace semf
