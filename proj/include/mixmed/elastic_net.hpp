#pragma once

#include <Eigen/Dense>
#include <span>
#include <vector>

#include "mixmed/rng.hpp"

namespace mixmed {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Centered least-squares sufficient statistics for a model with an
/// unpenalized intercept. All elastic-net work happens on these, so a solve
/// costs O(k^2) per sweep regardless of the number of rows.
struct GramSystem {
    MatrixXd gram;    // sum (z - zbar)(z - zbar)'
    VectorXd cross;   // sum (z - zbar)(y - ybar)
    double yy = 0.0;  // sum (y - ybar)^2
    VectorXd zmean;
    double ymean = 0.0;
    double n = 0.0;

    static GramSystem from_data(const MatrixXd& Z, const VectorXd& y);
    /// From raw (uncentered) sums.
    static GramSystem from_sums(const MatrixXd& zz, const VectorXd& zy, double yy, const VectorXd& z,
                                double y, double n);
};

struct ElasticNetOptions {
    double tolerance = 1e-7;  // max |coefficient change| over a sweep
    int max_sweeps = 100000;
};

struct ElasticNetFit {
    double intercept = 0.0;
    VectorXd beta;
    int sweeps = 0;
    /// Largest subgradient-condition violation of the objective, divided by n.
    double kkt_residual = 0.0;
};

/// Minimizes  sum (y - a - Z b)^2 + l1 sum pf_j |b_j| + l2 sum pf_j b_j^2
/// by cyclic coordinate descent. Features with pf_j = 0 are unpenalized.
ElasticNetFit elastic_net(const MatrixXd& Z, const VectorXd& y, double lambda1, double lambda2,
                          std::span<const double> penalty_factors,
                          const ElasticNetOptions& options = {});

ElasticNetFit elastic_net(const GramSystem& system, double lambda1, double lambda2,
                          std::span<const double> penalty_factors,
                          const ElasticNetOptions& options = {}, const VectorXd* warm_start = nullptr);

/// Objective value evaluated directly on the data.
double elastic_net_objective(const MatrixXd& Z, const VectorXd& y, double intercept,
                             const VectorXd& beta, double lambda1, double lambda2,
                             std::span<const double> penalty_factors);

/// Per-coordinate subgradient violations (objective scale divided by n).
VectorXd kkt_violations(const GramSystem& system, const VectorXd& beta, double lambda1,
                        double lambda2, std::span<const double> penalty_factors);

/// Smallest lambda1 at which every penalized coefficient is zero.
double lambda1_max(const GramSystem& system, std::span<const double> penalty_factors);

/// Geometric sequence from `lambda_max` down to lambda_max * ratio.
std::vector<double> lambda1_path(double lambda_max, Index length = 100, double ratio = 1e-4);

/// exp(seq(log(1e-4), log(1e2), length.out = 100))
std::vector<double> default_lambda2_grid();

struct CvOptions {
    int folds = 5;
    std::vector<double> lambda2_grid = default_lambda2_grid();
    Index path_length = 100;
    double path_ratio = 1e-4;
    int workers = 1;
    ElasticNetOptions solver;
};

struct CvResult {
    double lambda1 = 0.0;
    double lambda2 = 0.0;
    double cv_error = 0.0;
    std::vector<double> lambda1_grid;           // shared path, from the full data
    std::vector<double> lambda2_grid;
    std::vector<double> best_error_per_lambda2;  // min over the lambda1 path
    std::vector<int> fold_of_row;
};

/// K-fold CV over lambda2_grid x lambda1 path; returns the pair with the
/// smallest mean squared prediction error. Folds depend only on `rng`.
CvResult cv_tune(const MatrixXd& Z, const VectorXd& y, std::span<const double> penalty_factors,
                 SeededRng& rng, const CvOptions& options = {});

} // namespace mixmed
