#include "semf/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "semf/baselines.hpp"
#include "semf/conformal.hpp"
#include "semf/errors.hpp"
#include "semf/inference.hpp"
#include "semf/rng.hpp"

namespace semf {

namespace {

std::string fmt(double value) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", value);
    return buf;
}

std::string trim(const std::string& text) {
    const auto begin = text.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return "";
    const auto end = text.find_last_not_of(" \t\r\n");
    return text.substr(begin, end - begin + 1);
}

long long parseInt(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const long long parsed = std::stoll(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return parsed;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': '" + value + "' is not an integer");
    }
}

double parseDouble(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const double parsed = std::stod(value, &used);
        if (used != value.size() || !std::isfinite(parsed)) throw std::invalid_argument(value);
        return parsed;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': '" + value + "' is not a number");
    }
}

std::vector<std::uint64_t> parseSeeds(const std::string& value) {
    std::vector<std::uint64_t> seeds;
    std::stringstream stream(value);
    std::string item;
    while (std::getline(stream, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        seeds.push_back(static_cast<std::uint64_t>(parseInt("seeds", item)));
    }
    if (seeds.empty()) throw ConfigError("config key 'seeds': no seeds given");
    return seeds;
}

void writeAtomically(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw DataError("cannot open '" + tmp + "' for writing");
        out << content;
        if (!out) throw DataError("write to '" + tmp + "' failed");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw DataError("cannot move results into '" + path + "': " + ec.message());
}

}  // namespace

std::string DataSource::label() const {
    if (from_csv) {
        const auto stem = std::filesystem::path(csv_path).stem().string();
        return stem.empty() ? "csv" : stem;
    }
    return datasetLabel(sim);
}

void RunConfig::validate() const {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
    if (seeds.empty()) throw ConfigError("seeds must be non-empty");
    if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size())
        throw ConfigError("seeds must be distinct");
    if (data.from_csv && data.csv_path.empty()) throw ConfigError("csv data source needs csv_path");
    if (!data.from_csv && !data.csv_path.empty())
        throw ConfigError("csv_path is set but the data source is simulate (add data = csv)");
    if (out_dir.empty()) throw ConfigError("out_dir must be non-empty");
    semf.validate();
}

void applyConfigKey(RunConfig& config, const std::string& key, const std::string& value) {
    // data source
    if (key == "data") {
        if (value == "simulate")
            config.data.from_csv = false;
        else if (value == "csv")
            config.data.from_csv = true;
        else
            throw ConfigError("config key 'data': expected simulate or csv, got '" + value + "'");
    } else if (key == "csv_path") {
        config.data.csv_path = value;
    } else if (key == "outcome_column") {
        config.data.outcome_column = value;
    } else if (key == "signal") {
        config.data.sim.signal = parseSignal(value);
    } else if (key == "noise") {
        config.data.sim.noise = parseNoise(value);
    } else if (key == "n") {
        config.data.sim.n = static_cast<int>(parseInt(key, value));
    } else if (key == "k") {
        config.data.sim.k = static_cast<int>(parseInt(key, value));
    } else if (key == "data_seed") {
        config.data.sim.seed = static_cast<std::uint64_t>(parseInt(key, value));
    }
    // run protocol
    else if (key == "family") {
        config.learners.family = parseLearnerFamily(value);
    } else if (key == "alpha") {
        config.alpha = parseDouble(key, value);
    } else if (key == "seeds") {
        config.seeds = parseSeeds(value);
    } else if (key == "out_dir") {
        config.out_dir = value;
    }
    // engine
    else if (key == "R") {
        config.semf.R = static_cast<int>(parseInt(key, value));
    } else if (key == "R_infer") {
        config.semf.R_infer = static_cast<int>(parseInt(key, value));
    } else if (key == "m_k") {
        config.semf.m_k = static_cast<int>(parseInt(key, value));
    } else if (key == "sigma_mode") {
        if (value == "fixed")
            config.semf.sigma_mode = SigmaMode::Fixed;
        else if (value == "residual_models")
            config.semf.sigma_mode = SigmaMode::ResidualModels;
        else
            throw ConfigError("config key 'sigma_mode': expected fixed or residual_models");
    } else if (key == "sigma_k") {
        config.semf.sigma_k = parseDouble(key, value);
    } else if (key == "patience") {
        config.semf.patience = static_cast<int>(parseInt(key, value));
    } else if (key == "max_steps") {
        config.semf.max_steps = static_cast<int>(parseInt(key, value));
    } else if (key == "batches") {
        config.semf.batches = static_cast<int>(parseInt(key, value));
    }
    // learners
    else if (key == "ridge_lambda") {
        config.learners.ridge.lambda = parseDouble(key, value);
    } else if (key == "n_trees") {
        config.learners.trees.n_trees = static_cast<int>(parseInt(key, value));
    } else if (key == "max_depth") {
        config.learners.trees.max_depth = static_cast<int>(parseInt(key, value));
    } else if (key == "learning_rate") {
        config.learners.trees.learning_rate = parseDouble(key, value);
    } else if (key == "early_stopping_rounds") {
        config.learners.trees.early_stopping_rounds = static_cast<int>(parseInt(key, value));
    } else if (key == "min_samples_leaf") {
        config.learners.trees.min_samples_leaf = static_cast<int>(parseInt(key, value));
    } else if (key == "mlp_hidden_layers") {
        config.learners.mlp.hidden_layers = static_cast<int>(parseInt(key, value));
    } else if (key == "mlp_width") {
        config.learners.mlp.hidden_width = static_cast<int>(parseInt(key, value));
    } else if (key == "mlp_epochs") {
        config.learners.mlp.epochs = static_cast<int>(parseInt(key, value));
    } else if (key == "mlp_learning_rate") {
        config.learners.mlp.learning_rate = parseDouble(key, value);
    } else if (key == "mlp_patience") {
        config.learners.mlp.patience = static_cast<int>(parseInt(key, value));
    }
    // split
    else if (key == "train_fraction") {
        config.fractions.train = parseDouble(key, value);
    } else if (key == "valid_fraction") {
        config.fractions.valid = parseDouble(key, value);
    } else if (key == "test_fraction") {
        config.fractions.test = parseDouble(key, value);
    } else if (key == "early_stop_fraction") {
        config.fractions.early_stop = parseDouble(key, value);
    } else {
        throw ConfigError("unknown config key '" + key + "'");
    }
}

RunConfig parseConfigFile(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    RunConfig config;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
        applyConfigKey(config, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    config.validate();
    return config;
}

std::string serializeConfig(const RunConfig& c) {
    std::ostringstream out;
    out << "data=" << (c.data.from_csv ? "csv" : "simulate") << "\n";
    if (c.data.from_csv) {
        out << "csv_path=" << c.data.csv_path << "\n";
        out << "outcome_column=" << c.data.outcome_column << "\n";
    } else {
        out << "signal=" << signalName(c.data.sim.signal) << "\n";
        out << "noise=" << noiseName(c.data.sim.noise) << "\n";
        out << "n=" << c.data.sim.n << "\n";
        out << "k=" << c.data.sim.k << "\n";
        out << "data_seed=" << c.data.sim.seed << "\n";
    }
    out << "family=" << learnerFamilyName(c.learners.family) << "\n";
    out << "alpha=" << fmt(c.alpha) << "\n";
    out << "seeds=";
    for (std::size_t i = 0; i < c.seeds.size(); ++i) out << (i ? "," : "") << c.seeds[i];
    out << "\n";
    out << "R=" << c.semf.R << "\n";
    out << "R_infer=" << c.semf.R_infer << "\n";
    out << "m_k=" << c.semf.m_k << "\n";
    out << "sigma_mode=" << (c.semf.sigma_mode == SigmaMode::Fixed ? "fixed" : "residual_models")
        << "\n";
    out << "sigma_k=" << fmt(c.semf.sigma_k) << "\n";
    out << "patience=" << c.semf.patience << "\n";
    out << "max_steps=" << c.semf.max_steps << "\n";
    out << "batches=" << c.semf.batches << "\n";
    out << "ridge_lambda=" << fmt(c.learners.ridge.lambda) << "\n";
    out << "n_trees=" << c.learners.trees.n_trees << "\n";
    out << "max_depth=" << c.learners.trees.max_depth << "\n";
    out << "learning_rate=" << fmt(c.learners.trees.learning_rate) << "\n";
    out << "early_stopping_rounds=" << c.learners.trees.early_stopping_rounds << "\n";
    out << "min_samples_leaf=" << c.learners.trees.min_samples_leaf << "\n";
    out << "mlp_hidden_layers=" << c.learners.mlp.hidden_layers << "\n";
    out << "mlp_width=" << c.learners.mlp.hidden_width << "\n";
    out << "mlp_epochs=" << c.learners.mlp.epochs << "\n";
    out << "mlp_learning_rate=" << fmt(c.learners.mlp.learning_rate) << "\n";
    out << "mlp_patience=" << c.learners.mlp.patience << "\n";
    out << "train_fraction=" << fmt(c.fractions.train) << "\n";
    out << "valid_fraction=" << fmt(c.fractions.valid) << "\n";
    out << "test_fraction=" << fmt(c.fractions.test) << "\n";
    out << "early_stop_fraction=" << fmt(c.fractions.early_stop) << "\n";
    return out.str();
}

std::string configHash(const RunConfig& config) {
    const std::uint64_t digest = rng::deriveSeed(0, serializeConfig(config), 0);
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(digest));
    return buf;
}

Dataset materializeData(const RunConfig& config) {
    if (config.data.from_csv) return loadCsv(config.data.csv_path, config.data.outcome_column);
    return generate(config.data.sim);
}

PairedReports runSeed(const RunConfig& config, const Dataset& base, std::uint64_t seed) {
    Dataset working = base;
    working.split = makeSplit(working.numRows(), config.fractions, seed,
                              familyUsesEarlyStopping(config.learners.family));
    auto [scaled, scaler] = standardize(working);

    SemfConfig semf_config = config.semf;
    semf_config.seed = seed;
    const SemfModel model = trainSemf(semf_config, config.learners, scaled);

    const auto& split = scaled.split;
    const auto valid_sources = splitSources(scaled, split.valid_idx);
    const IntervalBatch valid_iv =
        predictIntervals(model, valid_sources, semf_config.R_infer, config.alpha,
                         rng::deriveSeed(seed, "infer_valid", 0));
    const Vector scores =
        conformityScores(valid_iv.lower, valid_iv.upper, scaled.outcomeRows(split.valid_idx));
    const ConformalCalibrator calibrator = calibrate(scores, config.alpha);

    const auto test_sources = splitSources(scaled, split.test_idx);
    const IntervalBatch test_iv =
        predictIntervals(model, test_sources, semf_config.R_infer, config.alpha,
                         rng::deriveSeed(seed, "infer_test", 0));
    auto [semf_lower, semf_upper] = applyCalibration(calibrator, test_iv.lower, test_iv.upper);

    const Vector y_test = base.outcomeRows(split.test_idx);
    const double y_min = base.outcome.minCoeff();
    const double y_max = base.outcome.maxCoeff();

    PairedReports reports;
    reports.semf = evaluateIntervals(y_test, scaler.inverseOutcome(semf_lower),
                                     scaler.inverseOutcome(semf_upper), y_min, y_max, config.alpha);

    const BaselineResult baseline = runBaseline(config.learners, scaled, config.alpha, seed);
    reports.baseline = evaluateIntervals(
        y_test, scaler.inverseOutcome(baseline.test_intervals.lower),
        scaler.inverseOutcome(baseline.test_intervals.upper), y_min, y_max, config.alpha);

    reports.semf.deltas = improvementDeltas(reports.semf, reports.baseline);
    return reports;
}

std::vector<const SeedOutcome*> RunRecord::completed() const {
    std::vector<const SeedOutcome*> done;
    for (const auto& outcome : outcomes)
        if (outcome.ok) done.push_back(&outcome);
    return done;
}

RunRecord runExperiment(const RunConfig& config) {
    config.validate();
    RunRecord record;
    record.config_hash = configHash(config);
    record.dataset = config.data.label();
    record.family = learnerFamilyName(config.learners.family);

    const Dataset base = materializeData(config);
    for (const std::uint64_t seed : config.seeds) {
        SeedOutcome outcome;
        outcome.seed = seed;
        try {
            const PairedReports reports = runSeed(config, base, seed);
            outcome.semf = reports.semf;
            outcome.baseline = reports.baseline;
            outcome.ok = true;
        } catch (const std::exception& e) {
            outcome.error = e.what();
            record.partial = true;
        }
        record.outcomes.push_back(std::move(outcome));
    }
    return record;
}

namespace {

void appendMetricCells(std::ostringstream& out, const MetricReport& report) {
    out << fmt(report.picp) << ',' << fmt(report.mpiw) << ',' << fmt(report.nmpiw) << ','
        << fmt(report.cwr) << ',' << fmt(report.crps_mean) << ',' << fmt(report.pinball_mean);
}

}  // namespace

void writeResultsCsv(const std::string& path, const RunRecord& record) {
    std::ostringstream out;
    out << "config_hash,dataset,family,seed,side,picp,mpiw,nmpiw,cwr,crps,pinball,"
           "d_cwr,d_nmpiw,d_crps,d_pinball,d_picp\n";
    for (const auto& outcome : record.outcomes) {
        if (!outcome.ok) continue;
        const std::string prefix =
            record.config_hash + "," + record.dataset + "," + record.family + "," +
            std::to_string(outcome.seed) + ",";
        out << prefix << "semf,";
        appendMetricCells(out, outcome.semf);
        const DeltaReport& d = outcome.semf.deltas.value();
        out << ',' << fmt(d.d_cwr) << ',' << fmt(d.d_nmpiw) << ',' << fmt(d.d_crps) << ','
            << fmt(d.d_pinball) << ',' << fmt(d.d_picp) << "\n";
        out << prefix << "baseline,";
        appendMetricCells(out, outcome.baseline);
        out << ",,,,,\n";
    }
    writeAtomically(path, out.str());
}

void writeAggregatesCsv(const std::string& path, const RunRecord& record) {
    const auto done = record.completed();
    std::ostringstream out;
    out << "config_hash,dataset,family,side,metric,mean,std,min,max\n";

    auto emit = [&](const std::string& side, const std::string& metric,
                    const std::vector<double>& values) {
        if (values.empty()) return;
        const double n = static_cast<double>(values.size());
        const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
        double ss = 0.0;
        for (double v : values) ss += (v - mean) * (v - mean);
        const double sd = values.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
        const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
        out << record.config_hash << ',' << record.dataset << ',' << record.family << ',' << side
            << ',' << metric << ',' << fmt(mean) << ',' << fmt(sd) << ',' << fmt(*lo) << ','
            << fmt(*hi) << "\n";
    };

    auto collect = [&](const std::string& side, const std::string& metric, auto&& getter) {
        std::vector<double> values;
        values.reserve(done.size());
        for (const SeedOutcome* outcome : done)
            values.push_back(getter(side == "semf" ? outcome->semf : outcome->baseline));
        emit(side, metric, values);
    };

    for (const std::string side : {"semf", "baseline"}) {
        collect(side, "picp", [](const MetricReport& r) { return r.picp; });
        collect(side, "mpiw", [](const MetricReport& r) { return r.mpiw; });
        collect(side, "nmpiw", [](const MetricReport& r) { return r.nmpiw; });
        collect(side, "cwr", [](const MetricReport& r) { return r.cwr; });
        collect(side, "crps", [](const MetricReport& r) { return r.crps_mean; });
        collect(side, "pinball", [](const MetricReport& r) { return r.pinball_mean; });
    }
    collect("semf", "d_cwr", [](const MetricReport& r) { return r.deltas->d_cwr; });
    collect("semf", "d_nmpiw", [](const MetricReport& r) { return r.deltas->d_nmpiw; });
    collect("semf", "d_crps", [](const MetricReport& r) { return r.deltas->d_crps; });
    collect("semf", "d_pinball", [](const MetricReport& r) { return r.deltas->d_pinball; });
    collect("semf", "d_picp", [](const MetricReport& r) { return r.deltas->d_picp; });

    writeAtomically(path, out.str());
}

SweepOutcome sweep(const RunConfig& base, int budget, std::uint64_t seed) {
    base.validate();
    if (budget < 1) throw ConfigError("sweep: budget must be at least 1");

    struct Candidate {
        int R, m_k, sigma_idx, R_infer, patience;
    };
    const int r_grid[] = {5, 10, 25, 50, 100};
    const int m_grid[] = {1, 5, 10, 20, 30};
    const double sigma_grid[] = {0.001, 0.01, 0.1, 1.0};  // index 4 = residual models
    const int r_infer_grid[] = {30, 50, 70};
    const int patience_grid[] = {5, 10};

    std::vector<Candidate> grid;
    for (int r : r_grid)
        for (int m : m_grid)
            for (int s = 0; s < 5; ++s)
                for (int ri : r_infer_grid)
                    for (int p : patience_grid) grid.push_back({r, m, s, ri, p});
    auto shuffle_gen = rng::makeStream(seed, "sweep", 0);
    std::shuffle(grid.begin(), grid.end(), shuffle_gen);
    if (static_cast<int>(grid.size()) > budget) grid.resize(static_cast<std::size_t>(budget));

    // Shared per-sweep state: one dataset, one split, one baseline.
    const std::uint64_t run_seed = base.seeds.front();
    Dataset working = materializeData(base);
    working.split = makeSplit(working.numRows(), base.fractions, run_seed,
                              familyUsesEarlyStopping(base.learners.family));
    auto [scaled, scaler] = standardize(working);
    (void)scaler;
    const auto& split = scaled.split;
    const Vector y_valid = scaled.outcomeRows(split.valid_idx);
    const double y_min = scaled.outcome.minCoeff();
    const double y_max = scaled.outcome.maxCoeff();

    MetricReport baseline_report;
    {
        const Matrix x_train = scaled.featureRows(split.train_idx);
        const Vector y_train = scaled.outcomeRows(split.train_idx);
        QuantileRegressor baseline;
        if (familyUsesEarlyStopping(base.learners.family) && !split.early_stop_idx.empty()) {
            const Matrix x_monitor = scaled.featureRows(split.early_stop_idx);
            const Vector y_monitor = scaled.outcomeRows(split.early_stop_idx);
            baseline = fitQuantile(base.learners, x_train, y_train, base.alpha / 2.0,
                                   1.0 - base.alpha / 2.0, rng::deriveSeed(run_seed, "baseline", 0),
                                   &x_monitor, &y_monitor);
        } else {
            baseline = fitQuantile(base.learners, x_train, y_train, base.alpha / 2.0,
                                   1.0 - base.alpha / 2.0, rng::deriveSeed(run_seed, "baseline", 0));
        }
        const auto [lower, upper] = baseline.predict(scaled.featureRows(split.valid_idx));
        baseline_report = evaluateIntervals(y_valid, lower, upper, y_min, y_max, base.alpha);
    }

    const auto valid_sources = splitSources(scaled, split.valid_idx);
    std::vector<DeltaReport> deltas;
    std::vector<std::size_t> owners;
    SweepOutcome result;
    for (std::size_t c = 0; c < grid.size(); ++c) {
        const Candidate& cand = grid[c];
        SemfConfig cfg = base.semf;
        cfg.R = cand.R;
        cfg.m_k = cand.m_k;
        if (cand.sigma_idx < 4) {
            cfg.sigma_mode = SigmaMode::Fixed;
            cfg.sigma_k = sigma_grid[cand.sigma_idx];
        } else {
            cfg.sigma_mode = SigmaMode::ResidualModels;
        }
        cfg.R_infer = cand.R_infer;
        cfg.patience = cand.patience;
        cfg.seed = run_seed;
        try {
            const SemfModel model = trainSemf(cfg, base.learners, scaled);
            const IntervalBatch iv =
                predictIntervals(model, valid_sources, cfg.R_infer, base.alpha,
                                 rng::deriveSeed(run_seed, "infer_valid", 0));
            const MetricReport report =
                evaluateIntervals(y_valid, iv.lower, iv.upper, y_min, y_max, base.alpha);
            deltas.push_back(improvementDeltas(report, baseline_report));
            owners.push_back(c);
            ++result.evaluated;
        } catch (const std::exception&) {
            ++result.failed;
        }
    }
    if (deltas.empty()) throw ConfigError("sweep: every candidate failed");

    const std::size_t winner = selectBestConfig(deltas);
    const Candidate& cand = grid[owners[winner]];
    result.chosen = base;
    result.chosen.semf.R = cand.R;
    result.chosen.semf.m_k = cand.m_k;
    if (cand.sigma_idx < 4) {
        result.chosen.semf.sigma_mode = SigmaMode::Fixed;
        result.chosen.semf.sigma_k = sigma_grid[cand.sigma_idx];
    } else {
        result.chosen.semf.sigma_mode = SigmaMode::ResidualModels;
    }
    result.chosen.semf.R_infer = cand.R_infer;
    result.chosen.semf.patience = cand.patience;
    result.deltas = deltas[winner];
    return result;
}

}  // namespace semf
