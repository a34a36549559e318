#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "semf/types.hpp"

namespace semf {

struct SplitFractions {
    double train = 0.70;
    double valid = 0.15;
    double test = 0.15;
    double early_stop = 0.15;  // share of the training segment, carved on request
};

struct Split {
    std::vector<int> train_idx;
    std::vector<int> valid_idx;
    std::vector<int> test_idx;
    std::vector<int> early_stop_idx;
    SplitFractions fractions;

    bool empty() const { return train_idx.empty() && valid_idx.empty() && test_idx.empty(); }
};

/// Shuffled index assignment, reproducible from the seed. Sizes follow the fixed
/// rounding rule: train = floor(n*f_train), valid = floor(n*f_valid), test = remainder.
/// When carving, round(f_early*|train|) indices move from the end of the shuffled
/// train list to early_stop_idx.
Split makeSplit(int n, const SplitFractions& fractions, std::uint64_t seed, bool carve_early_stop);

struct Dataset {
    Matrix features;  // N x D
    Vector outcome;   // N
    std::vector<std::string> feature_names;
    std::string outcome_name;
    std::vector<std::vector<int>> source_partition;  // K disjoint column groups covering 0..D-1
    Split split;

    int numRows() const { return static_cast<int>(features.rows()); }
    int numFeatures() const { return static_cast<int>(features.cols()); }
    int numSources() const { return static_cast<int>(source_partition.size()); }

    /// Columns of source k restricted to the given rows.
    Matrix sourceRows(int source, const std::vector<int>& rows) const;
    /// Columns of source k for all rows.
    Matrix sourceAll(int source) const;
    Vector outcomeRows(const std::vector<int>& rows) const;
    Matrix featureRows(const std::vector<int>& rows) const;
};

/// One group per column, the default partitioning.
std::vector<std::vector<int>> singleColumnPartition(int n_columns);

/// Throws unless the groups are disjoint and cover exactly {0..n_columns-1}.
void validatePartition(const std::vector<std::vector<int>>& partition, int n_columns);

struct Scaler {
    Vector feature_mean;
    Vector feature_sd;
    double outcome_mean = 0.0;
    double outcome_sd = 1.0;

    Matrix transformFeatures(const Matrix& raw) const;
    Matrix inverseFeatures(const Matrix& scaled) const;
    Vector transformOutcome(const Vector& raw) const;
    Vector inverseOutcome(const Vector& scaled) const;
    double inverseOutcome(double scaled) const { return scaled * outcome_sd + outcome_mean; }
};

/// Strict CSV ingestion: header row, '.' decimal, every cell a finite real.
/// Duplicate rows (full row, outcome included) are dropped, first occurrence kept.
/// One source per feature column.
Dataset loadCsv(const std::string& path, const std::string& outcome_column);

/// Z-score transform fit on split.train_idx only (sample sd, denominator N-1),
/// applied to every row. Rejects columns constant on the training segment.
std::pair<Dataset, Scaler> standardize(const Dataset& ds);

}  // namespace semf
