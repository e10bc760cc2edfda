#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "mixmed/rng.hpp"

namespace mixmed {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class Role { exposure, mediator, outcome, confounder };

/// Analysis table: exposures X (n x p), mediator M, outcome Y, confounders C (n x s).
/// Immutable by convention once built; pipelines take it by const reference.
struct Dataset {
    MatrixXd exposures;
    VectorXd mediator;
    VectorXd outcome;
    MatrixXd confounders;

    std::vector<std::string> exposure_names;
    std::string mediator_name = "M";
    std::string outcome_name = "Y";
    std::vector<std::string> confounder_names;

    /// Source row (0-based data row of the originating file or dataset) for each row.
    std::vector<std::size_t> row_ids;

    Index n() const { return outcome.size(); }
    Index p() const { return exposures.cols(); }
    Index s() const { return confounders.cols(); }

    Role role_of(const std::string& column) const;

    Dataset subset(std::span<const std::size_t> rows) const;

    /// Throws when the type invariants (equal lengths, n >= 2, finite values) do not hold.
    void validate() const;
};

/// Builds a dataset from in-memory matrices with generated names X1.., C1...
Dataset make_dataset(MatrixXd exposures, VectorXd mediator, VectorXd outcome, MatrixXd confounders);

/// Column -> role mapping for CSV ingestion.
struct Schema {
    std::vector<std::string> exposures;
    std::string mediator;
    std::string outcome;
    std::vector<std::string> confounders;
    /// Subset of `confounders` holding category labels; expanded to dummies.
    std::vector<std::string> categorical;
};

struct LoadReport {
    std::size_t rows_read = 0;
    std::size_t rows_dropped = 0;
};

struct LoadedDataset {
    Dataset data;
    LoadReport report;
};

/// Reads a CSV with a header row. Rows with any empty/NA cell in a schema
/// column are dropped and counted. Categorical confounders are dummy coded
/// with the alphabetically first level as reference.
LoadedDataset load_dataset(const std::filesystem::path& path, const Schema& schema);
LoadedDataset read_dataset(std::istream& in, const Schema& schema);

/// Writes exposures, mediator, outcome, confounders (in that order) with
/// round-trip precision. Reloading with `schema_of(data)` reproduces the matrices.
void write_dataset_csv(const Dataset& data, std::ostream& out);
Schema schema_of(const Dataset& data);

/// One CSV record split into fields; quoted fields may contain commas and "" escapes.
std::vector<std::string> split_csv_record(const std::string& line);

struct Standardized {
    MatrixXd values;
    VectorXd means;
    VectorXd sds;
};

/// Column-wise (x - mean) / sd with the n-1 denominator.
Standardized standardize(const MatrixXd& matrix, std::span<const std::string> names = {});

/// Applies stored means/sds to new rows.
MatrixXd apply_standardization(const MatrixXd& matrix, const VectorXd& means, const VectorXd& sds);

struct Split {
    Dataset train;
    Dataset analysis;
    std::vector<std::size_t> train_rows;     // indices into the input dataset, ascending
    std::vector<std::size_t> analysis_rows;
};

/// Random disjoint partition with |train| = floor(n/2).
Split split_train_analysis(const Dataset& data, SeededRng& rng);

/// R type-7 sample quantile (linear interpolation between order statistics).
double quantile(std::span<const double> values, double prob);
double quantile(const VectorXd& values, double prob);

} // namespace mixmed
