#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "semf/dataset.hpp"
#include "semf/engine.hpp"
#include "semf/learners.hpp"
#include "semf/metrics.hpp"
#include "semf/simulation.hpp"

namespace semf {

struct DataSource {
    bool from_csv = false;
    std::string csv_path;
    std::string outcome_column = "y";
    SimSpec sim;

    std::string label() const;  // dataset column value in result rows
};

struct RunConfig {
    DataSource data;
    LearnerConfig learners;
    SemfConfig semf;
    SplitFractions fractions;
    double alpha = 0.05;
    std::vector<std::uint64_t> seeds{0, 10, 20, 30, 40};
    std::string out_dir = "results";

    void validate() const;
};

/// Flat key=value config file; '#' starts a comment. Unknown keys are errors.
RunConfig parseConfigFile(const std::string& path);
void applyConfigKey(RunConfig& config, const std::string& key, const std::string& value);

/// Canonical key=value rendering (fixed key order); configHash is a 64-bit
/// digest of it, so equal configs hash equally across processes.
std::string serializeConfig(const RunConfig& config);
std::string configHash(const RunConfig& config);

/// Loads the CSV or draws the synthetic dataset; no split attached yet.
Dataset materializeData(const RunConfig& config);

struct PairedReports {
    MetricReport semf;  // deltas attached
    MetricReport baseline;
};

/// One seed of the paired protocol: split, standardize, train SEMF and the
/// baseline, conformalize both on the validation segment, evaluate on test in
/// original outcome units.
PairedReports runSeed(const RunConfig& config, const Dataset& base, std::uint64_t seed);

struct SeedOutcome {
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;
    MetricReport semf;
    MetricReport baseline;
};

struct RunRecord {
    std::string config_hash;
    std::string dataset;
    std::string family;
    std::vector<SeedOutcome> outcomes;
    bool partial = false;  // at least one seed failed

    std::vector<const SeedOutcome*> completed() const;
};

/// Runs every configured seed; a failing seed is recorded and skipped.
RunRecord runExperiment(const RunConfig& config);

/// Fixed column contract:
/// config_hash,dataset,family,seed,side,picp,mpiw,nmpiw,cwr,crps,pinball,
/// d_cwr,d_nmpiw,d_crps,d_pinball,d_picp
/// Two rows per completed seed (side semf, then baseline; delta cells are
/// blank on baseline rows). Written atomically via a temp file.
void writeResultsCsv(const std::string& path, const RunRecord& record);

/// Long-format per-metric aggregates over completed seeds:
/// config_hash,dataset,family,side,metric,mean,std,min,max
void writeAggregatesCsv(const std::string& path, const RunRecord& record);

struct SweepOutcome {
    RunConfig chosen;
    DeltaReport deltas;  // validation deltas of the chosen candidate
    int evaluated = 0;
    int failed = 0;
};

/// Random search over the engine grid (R, m_k, sigma setting, R_infer,
/// patience), scored by non-conformalized validation deltas against a shared
/// baseline and gated by selectBestConfig.
SweepOutcome sweep(const RunConfig& base, int budget, std::uint64_t seed);

}  // namespace semf
