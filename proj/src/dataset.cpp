#include "semf/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "semf/errors.hpp"
#include "semf/rng.hpp"

namespace semf {

namespace {

std::string trim(const std::string& s) {
    auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return "";
    auto end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

std::vector<std::string> splitLine(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
    if (!line.empty() && line.back() == ',') cells.push_back("");
    return cells;
}

double parseCell(const std::string& cell, int row, const std::string& column) {
    if (cell.empty()) {
        throw DataError("empty cell at data row " + std::to_string(row) + ", column '" + column + "'");
    }
    try {
        std::size_t consumed = 0;
        double v = std::stod(cell, &consumed);
        if (consumed != cell.size() || !std::isfinite(v)) throw std::invalid_argument(cell);
        return v;
    } catch (const std::exception&) {
        throw DataError("non-numeric cell '" + cell + "' at data row " + std::to_string(row) +
                        ", column '" + column + "'");
    }
}

}  // namespace

Split makeSplit(int n, const SplitFractions& fractions, std::uint64_t seed, bool carve_early_stop) {
    auto inUnit = [](double f) { return f > 0.0 && f < 1.0; };
    if (!inUnit(fractions.train) || !inUnit(fractions.valid) || !inUnit(fractions.test)) {
        throw ConfigError("split fractions must lie in (0,1)");
    }
    const double sum = fractions.train + fractions.valid + fractions.test;
    if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("split fractions must sum to 1");
    if (carve_early_stop && !inUnit(fractions.early_stop)) {
        throw ConfigError("early-stop fraction must lie in (0,1)");
    }

    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    auto stream = rng::makeStream(seed, "split");
    std::shuffle(order.begin(), order.end(), stream);

    const int n_train = static_cast<int>(std::floor(n * fractions.train));
    const int n_valid = static_cast<int>(std::floor(n * fractions.valid));
    const int n_test = n - n_train - n_valid;
    if (n_train < 1 || n_valid < 1 || n_test < 1) {
        throw DataError("dataset too small: a split segment would be empty (n=" + std::to_string(n) + ")");
    }

    Split split;
    split.fractions = fractions;
    split.train_idx.assign(order.begin(), order.begin() + n_train);
    split.valid_idx.assign(order.begin() + n_train, order.begin() + n_train + n_valid);
    split.test_idx.assign(order.begin() + n_train + n_valid, order.end());

    if (carve_early_stop) {
        const int n_early = static_cast<int>(std::llround(fractions.early_stop * n_train));
        if (n_early >= n_train) throw DataError("early-stop carve would empty the training segment");
        if (n_early > 0) {
            split.early_stop_idx.assign(split.train_idx.end() - n_early, split.train_idx.end());
            split.train_idx.resize(static_cast<std::size_t>(n_train - n_early));
        }
    }
    return split;
}

Matrix Dataset::sourceRows(int source, const std::vector<int>& rows) const {
    const auto& cols = source_partition.at(static_cast<std::size_t>(source));
    Matrix out(rows.size(), cols.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < cols.size(); ++j) out(i, j) = features(rows[i], cols[j]);
    }
    return out;
}

Matrix Dataset::sourceAll(int source) const {
    const auto& cols = source_partition.at(static_cast<std::size_t>(source));
    Matrix out(features.rows(), cols.size());
    for (std::size_t j = 0; j < cols.size(); ++j) out.col(j) = features.col(cols[j]);
    return out;
}

Vector Dataset::outcomeRows(const std::vector<int>& rows) const {
    Vector out(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) out(i) = outcome(rows[i]);
    return out;
}

Matrix Dataset::featureRows(const std::vector<int>& rows) const {
    Matrix out(rows.size(), features.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(i) = features.row(rows[i]);
    return out;
}

std::vector<std::vector<int>> singleColumnPartition(int n_columns) {
    std::vector<std::vector<int>> partition(static_cast<std::size_t>(n_columns));
    for (int j = 0; j < n_columns; ++j) partition[static_cast<std::size_t>(j)] = {j};
    return partition;
}

void validatePartition(const std::vector<std::vector<int>>& partition, int n_columns) {
    std::vector<int> seen(static_cast<std::size_t>(n_columns), 0);
    for (const auto& group : partition) {
        if (group.empty()) throw ConfigError("source group must not be empty");
        for (int col : group) {
            if (col < 0 || col >= n_columns) throw ConfigError("source column index out of range");
            if (seen[static_cast<std::size_t>(col)]++) {
                throw ConfigError("column " + std::to_string(col) + " appears in more than one source");
            }
        }
    }
    for (int col = 0; col < n_columns; ++col) {
        if (!seen[static_cast<std::size_t>(col)]) {
            throw ConfigError("column " + std::to_string(col) + " missing from the source partition");
        }
    }
}

Dataset loadCsv(const std::string& path, const std::string& outcome_column) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open file: " + path);

    std::string line;
    if (!std::getline(in, line)) throw DataError("empty file: " + path);
    const auto header = splitLine(line);
    if (header.empty()) throw DataError("missing header row in " + path);

    std::unordered_set<std::string> names;
    for (const auto& name : header) {
        if (name.empty()) throw DataError("blank column name in header of " + path);
        if (!names.insert(name).second) throw DataError("duplicate column name '" + name + "'");
    }

    int outcome_col = -1;
    for (std::size_t j = 0; j < header.size(); ++j) {
        if (header[j] == outcome_column) outcome_col = static_cast<int>(j);
    }
    if (outcome_col < 0) throw DataError("outcome column '" + outcome_column + "' not found");
    if (header.size() < 2) throw DataError("need at least one feature column besides the outcome");

    std::vector<std::vector<double>> rows;
    int row_number = 0;
    while (std::getline(in, line)) {
        ++row_number;
        if (trim(line).empty()) continue;
        const auto cells = splitLine(line);
        if (cells.size() != header.size()) {
            throw DataError("row " + std::to_string(row_number) + " has " + std::to_string(cells.size()) +
                            " cells, expected " + std::to_string(header.size()));
        }
        std::vector<double> row(cells.size());
        for (std::size_t j = 0; j < cells.size(); ++j) {
            row[j] = parseCell(cells[j], row_number, header[j]);
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw DataError("no data rows in " + path);

    // Full-row duplicate removal, first occurrence kept.
    std::vector<std::vector<double>> unique_rows;
    unique_rows.reserve(rows.size());
    std::map<std::vector<double>, bool> seen_rows;
    for (auto& row : rows) {
        if (seen_rows.emplace(row, true).second) unique_rows.push_back(std::move(row));
    }

    const int n = static_cast<int>(unique_rows.size());
    const int d = static_cast<int>(header.size()) - 1;

    Dataset ds;
    ds.outcome_name = outcome_column;
    for (std::size_t j = 0; j < header.size(); ++j) {
        if (static_cast<int>(j) != outcome_col) ds.feature_names.push_back(header[j]);
    }
    ds.features.resize(n, d);
    ds.outcome.resize(n);
    for (int i = 0; i < n; ++i) {
        int fj = 0;
        for (std::size_t j = 0; j < header.size(); ++j) {
            const double v = unique_rows[static_cast<std::size_t>(i)][j];
            if (static_cast<int>(j) == outcome_col) {
                ds.outcome(i) = v;
            } else {
                ds.features(i, fj++) = v;
            }
        }
    }

    const double y_min = ds.outcome.minCoeff();
    const double y_max = ds.outcome.maxCoeff();
    if (y_max - y_min <= 0.0) throw DataError("outcome column '" + outcome_column + "' is constant");

    ds.source_partition = singleColumnPartition(d);
    return ds;
}

namespace {

// Mean and sample sd (denominator N-1) over the listed rows of one column.
std::pair<double, double> trainMoments(const Vector& column, const std::vector<int>& rows) {
    double mean = 0.0;
    for (int r : rows) mean += column(r);
    mean /= static_cast<double>(rows.size());
    double ss = 0.0;
    for (int r : rows) {
        const double d = column(r) - mean;
        ss += d * d;
    }
    const double denom = static_cast<double>(rows.size()) - 1.0;
    const double sd = denom > 0.0 ? std::sqrt(ss / denom) : 0.0;
    return {mean, sd};
}

}  // namespace

Matrix Scaler::transformFeatures(const Matrix& raw) const {
    Matrix out = raw;
    for (int j = 0; j < out.cols(); ++j) {
        out.col(j) = (out.col(j).array() - feature_mean(j)) / feature_sd(j);
    }
    return out;
}

Matrix Scaler::inverseFeatures(const Matrix& scaled) const {
    Matrix out = scaled;
    for (int j = 0; j < out.cols(); ++j) {
        out.col(j) = out.col(j).array() * feature_sd(j) + feature_mean(j);
    }
    return out;
}

Vector Scaler::transformOutcome(const Vector& raw) const {
    return (raw.array() - outcome_mean) / outcome_sd;
}

Vector Scaler::inverseOutcome(const Vector& scaled) const {
    return scaled.array() * outcome_sd + outcome_mean;
}

std::pair<Dataset, Scaler> standardize(const Dataset& ds) {
    if (ds.split.train_idx.empty()) throw DataError("standardize requires a dataset with a split");
    if (ds.numRows() < 10) throw DataError("dataset too small to standardize (need N >= 10)");

    const auto& train = ds.split.train_idx;
    Scaler scaler;
    scaler.feature_mean.resize(ds.numFeatures());
    scaler.feature_sd.resize(ds.numFeatures());
    for (int j = 0; j < ds.numFeatures(); ++j) {
        const Vector column = ds.features.col(j);
        auto [mean, sd] = trainMoments(column, train);
        if (!(sd > 0.0)) {
            throw DataError("feature column '" + ds.feature_names[static_cast<std::size_t>(j)] +
                            "' is constant on the training segment");
        }
        scaler.feature_mean(j) = mean;
        scaler.feature_sd(j) = sd;
    }
    auto [y_mean, y_sd] = trainMoments(ds.outcome, train);
    if (!(y_sd > 0.0)) throw DataError("outcome is constant on the training segment");
    scaler.outcome_mean = y_mean;
    scaler.outcome_sd = y_sd;

    Dataset out = ds;
    out.features = scaler.transformFeatures(ds.features);
    out.outcome = scaler.transformOutcome(ds.outcome);
    return {std::move(out), std::move(scaler)};
}

}  // namespace semf
