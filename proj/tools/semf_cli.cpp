#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <string>

#include "CLI11.hpp"
#include "semf/baselines.hpp"
#include "semf/engine.hpp"
#include "semf/errors.hpp"
#include "semf/harness.hpp"
#include "semf/inference.hpp"
#include "semf/model_io.hpp"
#include "semf/rng.hpp"
#include "semf/simulation.hpp"

namespace {

std::string fmt(double value) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", value);
    return buf;
}

semf::RunConfig loadConfig(const std::string& path) {
    if (path.empty()) {
        semf::RunConfig config;
        config.validate();
        return config;
    }
    return semf::parseConfigFile(path);
}

void writeDatasetCsv(const std::string& path, const semf::Dataset& ds) {
    std::ofstream out(path);
    if (!out) throw semf::DataError("cannot open '" + path + "' for writing");
    for (const auto& name : ds.feature_names) out << name << ',';
    out << ds.outcome_name << '\n';
    for (int i = 0; i < ds.numRows(); ++i) {
        for (int j = 0; j < ds.numFeatures(); ++j) out << fmt(ds.features(i, j)) << ',';
        out << fmt(ds.outcome(i)) << '\n';
    }
    if (!out) throw semf::DataError("write to '" + path + "' failed");
}

int runSimulate(const std::string& config_path, bool seed_given, std::uint64_t seed,
                const std::string& out_path) {
    semf::RunConfig config = loadConfig(config_path);
    if (seed_given) config.data.sim.seed = seed;
    const semf::Dataset ds = semf::generate(config.data.sim);
    writeDatasetCsv(out_path, ds);
    std::cout << "wrote " << ds.numRows() << " rows (" << semf::datasetLabel(config.data.sim)
              << ") to " << out_path << "\n";
    return 0;
}

int runTrain(const std::string& config_path, bool seed_given, std::uint64_t seed,
             const std::string& out_path) {
    semf::RunConfig config = loadConfig(config_path);
    const std::uint64_t run_seed = seed_given ? seed : config.seeds.front();

    semf::Dataset ds = semf::materializeData(config);
    ds.split = semf::makeSplit(ds.numRows(), config.fractions, run_seed,
                               semf::familyUsesEarlyStopping(config.learners.family));
    auto [scaled, scaler] = semf::standardize(ds);

    semf::SemfConfig semf_config = config.semf;
    semf_config.seed = run_seed;
    semf::SemfModel model = semf::trainSemf(semf_config, config.learners, scaled);

    const auto& history = model.history.validation_rmse;
    std::cout << "trained " << semf::learnerFamilyName(config.learners.family) << " model on "
              << ds.numRows() << " rows; " << history.size() - 1 << " steps, best step "
              << model.history.best_step << ", validation rmse "
              << fmt(history[static_cast<std::size_t>(model.history.best_step)]) << "\n";

    semf::saveModel(out_path, {std::move(model), scaler, ds.feature_names, ds.outcome_name});
    std::cout << "saved model to " << out_path << "\n";
    return 0;
}

int runEvaluate(const std::string& model_path, const std::string& data_path,
                const std::string& out_path, std::uint64_t seed, double alpha) {
    const semf::ModelArtifact artifact = semf::loadModel(model_path);
    const semf::Dataset raw = semf::loadCsv(data_path, artifact.outcome_name);
    if (raw.feature_names != artifact.feature_names)
        throw semf::DataError("data columns do not match the model's training columns");

    semf::Dataset scaled = raw;
    scaled.features = artifact.scaler.transformFeatures(raw.features);
    scaled.source_partition = artifact.model.source_partition;
    std::vector<int> all_rows(static_cast<std::size_t>(scaled.numRows()));
    std::iota(all_rows.begin(), all_rows.end(), 0);

    const semf::IntervalBatch iv =
        semf::predictIntervals(artifact.model, semf::splitSources(scaled, all_rows),
                               artifact.model.config.R_infer, alpha, seed);
    const semf::Vector point = artifact.scaler.inverseOutcome(iv.point);
    const semf::Vector lower = artifact.scaler.inverseOutcome(iv.lower);
    const semf::Vector upper = artifact.scaler.inverseOutcome(iv.upper);

    std::ofstream out(out_path);
    if (!out) throw semf::DataError("cannot open '" + out_path + "' for writing");
    out << "row_id,point,lower,upper\n";
    for (int i = 0; i < point.size(); ++i)
        out << i << ',' << fmt(point(i)) << ',' << fmt(lower(i)) << ',' << fmt(upper(i)) << '\n';
    if (!out) throw semf::DataError("write to '" + out_path + "' failed");
    std::cout << "wrote " << point.size() << " intervals to " << out_path << "\n";
    return 0;
}

int runBenchmark(const std::string& config_path, bool seed_given, std::uint64_t seed,
                 bool alpha_given, double alpha, const std::string& out_dir) {
    semf::RunConfig config = loadConfig(config_path);
    if (seed_given) config.seeds = {seed};
    if (alpha_given) config.alpha = alpha;
    if (!out_dir.empty()) config.out_dir = out_dir;
    config.validate();

    const semf::RunRecord record = semf::runExperiment(config);
    for (const auto& outcome : record.outcomes) {
        if (outcome.ok) {
            std::cout << "seed " << outcome.seed << ": picp " << fmt(outcome.semf.picp)
                      << ", nmpiw " << fmt(outcome.semf.nmpiw) << ", d_cwr "
                      << fmt(outcome.semf.deltas->d_cwr) << "%\n";
        } else {
            std::cout << "seed " << outcome.seed << ": failed (" << outcome.error << ")\n";
        }
    }
    if (record.completed().empty())
        throw semf::NumericError("benchmark: every seed failed; first error: " +
                                 record.outcomes.front().error);

    std::filesystem::create_directories(config.out_dir);
    const std::string results = config.out_dir + "/results.csv";
    const std::string aggregates = config.out_dir + "/aggregates.csv";
    semf::writeResultsCsv(results, record);
    semf::writeAggregatesCsv(aggregates, record);
    std::cout << "wrote " << results << " and " << aggregates << "\n";
    if (record.partial) std::cout << "warning: some seeds failed; results are partial\n";
    return 0;
}

int runSweep(const std::string& config_path, int budget, std::uint64_t seed,
             const std::string& out_path) {
    const semf::RunConfig config = loadConfig(config_path);
    const semf::SweepOutcome outcome = semf::sweep(config, budget, seed);

    const auto& chosen = outcome.chosen.semf;
    std::cout << "evaluated " << outcome.evaluated << " candidates (" << outcome.failed
              << " failed)\n";
    std::cout << "chosen: R=" << chosen.R << " m_k=" << chosen.m_k << " sigma="
              << (chosen.sigma_mode == semf::SigmaMode::Fixed ? fmt(chosen.sigma_k)
                                                              : std::string("residual_models"))
              << " R_infer=" << chosen.R_infer << " patience=" << chosen.patience << "\n";
    std::cout << "validation deltas: d_cwr " << fmt(outcome.deltas.d_cwr) << "%, d_picp "
              << fmt(outcome.deltas.d_picp) << "%, d_nmpiw " << fmt(outcome.deltas.d_nmpiw)
              << "%\n";
    if (!out_path.empty()) {
        std::ofstream out(out_path);
        if (!out) throw semf::DataError("cannot open '" + out_path + "' for writing");
        out << semf::serializeConfig(outcome.chosen);
        if (!out) throw semf::DataError("write to '" + out_path + "' failed");
        std::cout << "wrote chosen config to " << out_path << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Prediction intervals from any point regressor: simulate, train, calibrate, benchmark"};
    app.require_subcommand(1);

    std::string config_path, out_path, model_path, data_path;
    std::uint64_t seed = 0;
    double alpha = 0.05;
    int budget = 500;

    auto* simulate = app.add_subcommand("simulate", "Draw a synthetic dataset and write it as CSV");
    simulate->add_option("--config", config_path, "Run config file");
    simulate->add_option("--seed", seed, "Override the generator seed");
    simulate->add_option("--out", out_path, "Output CSV path")->required();

    auto* train = app.add_subcommand("train", "Train a model and save the artifact");
    train->add_option("--config", config_path, "Run config file");
    train->add_option("--seed", seed, "Run seed (default: first configured seed)");
    train->add_option("--out", out_path, "Output model path")->required();

    auto* evaluate = app.add_subcommand("evaluate", "Score a CSV with a saved model");
    evaluate->add_option("--model", model_path, "Saved model artifact")->required();
    evaluate->add_option("--data", data_path, "CSV to score")->required();
    evaluate->add_option("--out", out_path, "Output CSV path")->required();
    evaluate->add_option("--seed", seed, "Sampling seed");
    evaluate->add_option("--alpha", alpha, "Miscoverage level");

    auto* benchmark = app.add_subcommand("benchmark", "Run the paired protocol over all seeds");
    benchmark->add_option("--config", config_path, "Run config file");
    benchmark->add_option("--seed", seed, "Run a single seed instead of the configured list");
    benchmark->add_option("--alpha", alpha, "Miscoverage level");
    benchmark->add_option("--out", out_path, "Output directory (default: configured out_dir)");

    auto* sweep = app.add_subcommand("sweep", "Random search over the engine grid");
    sweep->add_option("--config", config_path, "Run config file");
    sweep->add_option("--budget", budget, "Candidate budget")->check(CLI::PositiveNumber);
    sweep->add_option("--seed", seed, "Shuffle seed");
    sweep->add_option("--out", out_path, "Write the chosen config here");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (simulate->parsed())
            return runSimulate(config_path, simulate->count("--seed") > 0, seed, out_path);
        if (train->parsed())
            return runTrain(config_path, train->count("--seed") > 0, seed, out_path);
        if (evaluate->parsed())
            return runEvaluate(model_path, data_path, out_path, seed, alpha);
        if (benchmark->parsed())
            return runBenchmark(config_path, benchmark->count("--seed") > 0, seed,
                                benchmark->count("--alpha") > 0, alpha, out_path);
        if (sweep->parsed()) return runSweep(config_path, budget, seed, out_path);
        return 1;
    } catch (const semf::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const semf::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const semf::NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
