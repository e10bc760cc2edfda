#pragma once

#include <Eigen/Dense>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mixmed/dataset.hpp"

namespace mixmed {

/// Reference (x*) and comparative (x) exposure levels.
struct Contrast {
    VectorXd reference;
    VectorXd comparative;

    static Contrast unit(Index dim);  // 0 -> 1 in every coordinate
    static Contrast scalar(double reference, double comparative);

    Index dim() const { return reference.size(); }
    VectorXd shift() const { return comparative - reference; }
    /// Throws DomainError unless both vectors have length `dim`.
    void require_dim(Index dim) const;
};

struct Effect {
    double estimate = 0.0;
    double se = 0.0;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
    double p = 1.0;
};

struct MediationEffects {
    Effect te;
    Effect nde;
    Effect nie;
    Contrast contrast;
    std::string exposure;
    std::string method;

    // Path coefficients behind the effects.
    double alpha_x = 0.0;   // exposure -> mediator
    double beta_x = 0.0;    // exposure -> outcome, mediator held fixed
    double beta_m = 0.0;    // mediator -> outcome
    double se_alpha_x = 0.0;
    double se_beta_x = 0.0;
    double se_beta_m = 0.0;
};

struct MediationOptions {
    double level = 0.95;
};

/// Which columns enter the mediator/outcome models besides the exposure.
struct CovariateSelection {
    bool confounders = true;
    std::vector<Index> co_exposures;
};

/// Product method on raw vectors. `covariates` excludes the intercept.
MediationEffects product_mediation(const VectorXd& exposure, const MatrixXd& covariates,
                                   const VectorXd& mediator, const VectorXd& outcome,
                                   const Contrast& contrast, const MediationOptions& options = {});

/// Difference method: NIE = (x - x*)(phi_x - beta_x) from total and outcome models.
MediationEffects difference_mediation(const VectorXd& exposure, const MatrixXd& covariates,
                                      const VectorXd& mediator, const VectorXd& outcome,
                                      const Contrast& contrast,
                                      const MediationOptions& options = {});

MediationEffects product_mediation(const Dataset& data, Index exposure,
                                   const CovariateSelection& covariates, const Contrast& contrast,
                                   const MediationOptions& options = {});
MediationEffects difference_mediation(const Dataset& data, Index exposure,
                                      const CovariateSelection& covariates,
                                      const Contrast& contrast,
                                      const MediationOptions& options = {});

/// Sum of estimates with variances added as if independent.
Effect sum_independent(std::span<const Effect> effects, double level = 0.95);

struct SemaOptions {
    bool adjust_coexposures = true;
    double fdr_level = 0.05;
    double level = 0.95;
    /// Per-exposure levels (length p). Unset means the unit shift 0 -> 1.
    std::optional<Contrast> contrast;
};

struct SemaResult {
    std::vector<MediationEffects> per_exposure;
    std::vector<double> nie_q;   // BH-adjusted NIE p-values
    std::vector<bool> active;    // nie_q <= fdr_level
    Effect global_nie;           // heuristic sum, independence approximation
    bool adjusted = true;
};

SemaResult sema(const Dataset& data, const SemaOptions& options = {});

/// Design [exposure | selected covariates] without intercept, plus column names.
MatrixXd covariate_block(const Dataset& data, Index exposure, const CovariateSelection& covariates,
                         std::vector<std::string>* names = nullptr);

} // namespace mixmed
