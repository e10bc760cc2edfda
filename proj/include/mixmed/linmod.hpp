#pragma once

#include <Eigen/Dense>
#include <span>
#include <string>
#include <vector>

namespace mixmed {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

struct LinearFit {
    VectorXd coefficients;
    MatrixXd covariance;  // residual_variance * (X'X)^-1
    double residual_variance = 0.0;
    Index dof = 0;
    std::vector<std::string> names;

    double se(Index j) const;
    double t_statistic(Index j) const;
    /// Two-sided p-value against the t distribution with `dof` degrees of freedom.
    double p_value(Index j) const;
};

/// Least squares by column-pivoted QR. The design must carry its own
/// intercept column. A column is declared dependent when its pivot falls
/// below 1e-10 times the largest |R| diagonal.
LinearFit ols_fit(const MatrixXd& design, const VectorXd& response,
                  std::vector<std::string> names = {});

/// [1 | columns...] design builder.
MatrixXd with_intercept(const MatrixXd& columns);

struct ProductInterval {
    double se = 0.0;
    double lo = 0.0;
    double hi = 0.0;
    double p = 1.0;
};

/// First-order delta method for a*b with a, b from independent fits:
/// se = sqrt(b^2 se_a^2 + a^2 se_b^2), symmetric normal interval, two-sided normal p.
ProductInterval delta_product_interval(double a, double se_a, double b, double se_b,
                                       double level = 0.95);

/// Symmetric normal interval and two-sided p-value for an estimate with standard error.
ProductInterval normal_interval(double estimate, double se, double level = 0.95);

double normal_quantile(double prob);
double normal_two_sided_p(double z);

/// Benjamini-Hochberg step-up adjusted q-values (same order as input).
std::vector<double> bh_adjust(std::span<const double> pvalues);

} // namespace mixmed
