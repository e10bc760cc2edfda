#pragma once

#include <Eigen/Dense>
#include <optional>
#include <span>
#include <vector>

#include "mixmed/bkmr.hpp"
#include "mixmed/rng.hpp"

namespace mixmed {

/// Counterfactual settings. The outcome model's kernel inputs are the
/// exposures followed by the mediator as the last column.
struct CmaConfig {
    VectorXd a;      // comparative exposure levels
    VectorXd astar;  // reference exposure levels
    std::vector<double> m_quantiles{0.1, 0.25, 0.5, 0.75};
    /// Explicit mediator levels for CDEs; overrides m_quantiles.
    std::optional<std::vector<double>> m_values;
    int draws = 50;  // mediator samples K per iteration
    /// Chain rows to use; empty means the second half.
    std::vector<Index> sel;
    double alpha = 0.05;
    /// Confounder levels (no intercept); defaults to the training means.
    std::optional<VectorXd> covariate_profile;
    int workers = 1;
};

struct PosteriorSummary {
    double mean = 0.0;
    double sd = 0.0;
    double lo = 0.0;
    double hi = 0.0;
};

/// Mean, sd (n-1 denominator) and the equal-tailed interval at level 1 - alpha
/// using type-7 quantiles.
PosteriorSummary posterior_summary(std::span<const double> samples, double alpha);
PosteriorSummary posterior_summary(const VectorXd& samples, double alpha);

struct PosteriorEffects {
    std::vector<Index> sel;
    VectorXd te;
    VectorXd nde;
    VectorXd nie;  // te - nde, per iteration
    std::vector<double> m_values;
    MatrixXd cde;  // iterations x m_values
    double alpha = 0.05;

    PosteriorSummary te_summary() const { return posterior_summary(te, alpha); }
    PosteriorSummary nde_summary() const { return posterior_summary(nde, alpha); }
    PosteriorSummary nie_summary() const { return posterior_summary(nie, alpha); }
    PosteriorSummary cde_summary(Index j) const;
};

PosteriorEffects mediation_bkmr(const BkmrFit& fit_m, const BkmrFit& fit_y, const BkmrFit& fit_te,
                                const CmaConfig& config, const SeededRng& rng);

} // namespace mixmed
