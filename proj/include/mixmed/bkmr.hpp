#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "mixmed/rng.hpp"

namespace mixmed {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::MatrixXi;
using Eigen::VectorXd;

enum class SelectionMode { none, componentwise, hierarchical };
enum class ModelRole { mediator, outcome, total_effect };

const char* to_string(SelectionMode mode);
const char* to_string(ModelRole role);
SelectionMode parse_selection_mode(const std::string& text);
ModelRole parse_model_role(const std::string& text);

/// Sampler settings. Defaults: flat prior on beta, Gamma(0.001, 0.001) on
/// 1/sigma^2, Gamma(shape 1, rate 0.1) on lambda = tau/sigma^2, slab
/// Uniform(0, slab_upper) on each included r_k, inclusion probability pi.
struct KernelConfig {
    SelectionMode selection = SelectionMode::componentwise;
    /// Group label per kernel input (hierarchical mode); labels 0..G-1.
    std::vector<int> groups;
    int iterations = 1000;
    int thin = 1;

    double pi = 0.5;
    double slab_upper = 100.0;
    double sigma_shape = 0.001;
    double sigma_rate = 0.001;
    double lambda_shape = 1.0;
    double lambda_rate = 0.1;

    double lambda_step = 0.5;   // sd of the log-scale random walk on lambda
    double r_step = 0.5;        // sd of the log-scale random walk on included r_k
    double r_birth_mean = 1.0;  // Gamma proposal for r_k when an input is switched on
    double r_birth_sd = 1.0;

    double lambda_init = 10.0;
    double r_init = 1.0;

    void validate(Index q) const;
};

struct Acceptance {
    std::size_t proposed = 0;
    std::size_t accepted = 0;
    double rate() const { return proposed ? static_cast<double>(accepted) / static_cast<double>(proposed) : 0.0; }
};

/// Stored draws, one row per kept iteration.
struct McmcChain {
    MatrixXd r;       // iterations x q, r_k = 0 exactly when delta_k = 0
    MatrixXi delta;   // iterations x q
    MatrixXi omega;   // iterations x G (hierarchical mode only)
    MatrixXd beta;    // iterations x c (column 0 is the intercept)
    VectorXd sigma2;
    VectorXd lambda;  // tau = lambda * sigma2
    Acceptance lambda_moves;
    Acceptance select_moves;  // inclusion flips / switches
    Acceptance r_moves;       // random walk on included r_k

    Index length() const { return sigma2.size(); }
};

struct BkmrFit {
    McmcChain chain;
    KernelConfig config;
    ModelRole role = ModelRole::outcome;
    std::uint64_t seed = 0;
    std::uint64_t stream = 0;

    VectorXd y;
    MatrixXd z;  // kernel inputs
    MatrixXd x;  // fixed effects including the leading intercept column
    std::vector<std::string> z_names;
    std::vector<std::string> x_names;  // without the intercept
    std::vector<std::string> warnings;

    Index n() const { return y.size(); }
    Index q() const { return z.cols(); }
};

/// exp(-sum_k r_k (zi_k - zj_k)^2)
double gaussian_kernel(const VectorXd& zi, const VectorXd& zj, const VectorXd& r);

/// K[i,j] = gaussian_kernel(a.row(i), b.row(j), r).
MatrixXd kernel_matrix(const MatrixXd& a, const MatrixXd& b, const VectorXd& r);

/// Samples y = X beta + h(Z) + e, h ~ GP(0, tau K_r), e ~ N(0, sigma^2).
/// An intercept column is prepended to `x` (which may have zero columns).
BkmrFit kmbayes(const VectorXd& y, const MatrixXd& z, const MatrixXd& x, const KernelConfig& config,
                SeededRng& rng, ModelRole role = ModelRole::outcome);

/// Iteration indices (0-based, into the stored chain) after discarding the first half.
std::vector<Index> default_retained(const McmcChain& chain);

struct Pips {
    VectorXd component;    // per-input PIP (product form in hierarchical mode)
    VectorXd group;        // hierarchical: per-group PIP
    VectorXd conditional;  // hierarchical: PIP of each input given its group is in
};

Pips extract_pips(const BkmrFit& fit, const std::vector<Index>& retained);
Pips extract_pips(const BkmrFit& fit);

/// Gaussian-process conditional of h for one stored draw.
class GpConditional {
public:
    GpConditional(const BkmrFit& fit, Index iteration);

    /// Posterior mean of h at the rows of `znew`; variances when `var` is given.
    VectorXd mean(const MatrixXd& znew, VectorXd* var = nullptr) const;
    /// One joint draw of h at the rows of `znew`. Identical rows get identical values.
    VectorXd draw(const MatrixXd& znew, SeededRng& rng) const;

    const VectorXd& beta() const { return beta_; }
    double sigma2() const { return sigma2_; }

private:
    const BkmrFit& fit_;
    VectorXd r_;
    VectorXd beta_;
    double sigma2_;
    double lambda_;
    MatrixXd chol_;   // lower Cholesky factor of I + lambda K
    VectorXd alpha_;  // (I + lambda K)^-1 (y - X beta)
};

struct ResponseCurve {
    VectorXd grid;
    VectorXd mean;
    VectorXd sd;
};

/// Posterior mean and sd of h along one input with the others at their medians,
/// mixing the GP conditionals of up to `max_draws` evenly spaced retained draws.
ResponseCurve predictor_response_univar(const BkmrFit& fit, Index input, const VectorXd& grid,
                                        Index max_draws = 200);

/// Complete-linkage clustering on 1 - corr, cut at k clusters. Labels are
/// 0-based and numbered by first appearance.
std::vector<int> cluster_groups(const MatrixXd& corr, Index k);

} // namespace mixmed
