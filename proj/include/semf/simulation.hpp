#pragma once

#include <cstdint>
#include <random>
#include <string>

#include "semf/dataset.hpp"
#include "semf/types.hpp"

namespace semf {

enum class SignalKind { Cosine, QuadraticPeriodic };
enum class NoiseKind { Normal, Uniform, LognormalCentered, Gumbel, None };

SignalKind parseSignal(const std::string& name);
std::string signalName(SignalKind signal);
NoiseKind parseNoise(const std::string& name);
std::string noiseName(NoiseKind noise);

struct SimSpec {
    int n = 1000;
    int k = 2;
    SignalKind signal = SignalKind::Cosine;
    NoiseKind noise = NoiseKind::Normal;
    std::uint64_t seed = 0;
};

double signalValue(SignalKind signal, const Vector& x);

/// One draw from the named noise law: N(0, 0.5), U(-0.5, 0.5), a mean-centered
/// LogNormal(0, 0.5), Gumbel(0, 0.5) (left uncentered), or exactly zero.
double sampleNoise(NoiseKind noise, std::mt19937_64& gen);

/// Standard-normal predictors, outcome = signal + noise, one source per
/// predictor. Deterministic in the seed.
Dataset generate(const SimSpec& spec);

/// Same draw as generate; additionally hands back the noise vector so tests
/// can recover the clean signal. Never used by learners.
Dataset generateWithNoise(const SimSpec& spec, Vector* noise_out);

/// Short label like "cosine_normal" for result rows.
std::string datasetLabel(const SimSpec& spec);

}  // namespace semf
