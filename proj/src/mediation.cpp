#include "mixmed/mediation.hpp"

#include <algorithm>
#include <cmath>

#include "mixmed/error.hpp"
#include "mixmed/linmod.hpp"

namespace mixmed {

Contrast Contrast::unit(Index dim) {
    return {VectorXd::Zero(dim), VectorXd::Ones(dim)};
}

Contrast Contrast::scalar(double reference, double comparative) {
    return {VectorXd::Constant(1, reference), VectorXd::Constant(1, comparative)};
}

void Contrast::require_dim(Index dim) const {
    if (reference.size() != dim || comparative.size() != dim) {
        throw DomainError("contrast has length " + std::to_string(reference.size()) + "/" +
                          std::to_string(comparative.size()) + ", expected " +
                          std::to_string(dim));
    }
}

namespace {

Effect to_effect(double estimate, double se, double level) {
    const auto iv = normal_interval(estimate, se, level);
    return {estimate, se, iv.lo, iv.hi, iv.p};
}

MatrixXd stack_design(const VectorXd& exposure, const MatrixXd& covariates,
                      const VectorXd* mediator) {
    const Index n = exposure.size();
    const Index extra = mediator ? 1 : 0;
    MatrixXd design(n, 2 + extra + covariates.cols());
    design.col(0).setOnes();
    design.col(1) = exposure;
    if (mediator) design.col(2) = *mediator;
    design.rightCols(covariates.cols()) = covariates;
    return design;
}

void check_inputs(const VectorXd& exposure, const MatrixXd& covariates, const VectorXd& mediator,
                  const VectorXd& outcome, const Contrast& contrast) {
    const Index n = exposure.size();
    if (mediator.size() != n || outcome.size() != n || (covariates.cols() > 0 && covariates.rows() != n))
        throw DomainError("mediation inputs have unequal lengths");
    contrast.require_dim(1);
}

} // namespace

MediationEffects product_mediation(const VectorXd& exposure, const MatrixXd& covariates,
                                   const VectorXd& mediator, const VectorXd& outcome,
                                   const Contrast& contrast, const MediationOptions& options) {
    check_inputs(exposure, covariates, mediator, outcome, contrast);
    const LinearFit med = ols_fit(stack_design(exposure, covariates, nullptr), mediator);
    const LinearFit out = ols_fit(stack_design(exposure, covariates, &mediator), outcome);

    MediationEffects e;
    e.contrast = contrast;
    e.method = "product";
    e.alpha_x = med.coefficients(1);
    e.se_alpha_x = med.se(1);
    e.beta_x = out.coefficients(1);
    e.se_beta_x = out.se(1);
    e.beta_m = out.coefficients(2);
    e.se_beta_m = out.se(2);

    const double d = contrast.comparative(0) - contrast.reference(0);
    const double level = options.level;

    e.nde = to_effect(d * e.beta_x, std::abs(d) * e.se_beta_x, level);

    const auto prod = delta_product_interval(e.alpha_x, e.se_alpha_x, e.beta_m, e.se_beta_m, level);
    e.nie = to_effect(d * e.alpha_x * e.beta_m, std::abs(d) * prod.se, level);

    // TE = d (beta_x + alpha_x beta_m); beta_x and beta_m share the outcome fit.
    const double var_te = out.covariance(1, 1) + e.beta_m * e.beta_m * med.covariance(1, 1) +
                          e.alpha_x * e.alpha_x * out.covariance(2, 2) +
                          2.0 * e.alpha_x * out.covariance(1, 2);
    e.te = to_effect(e.nde.estimate + e.nie.estimate, std::abs(d) * std::sqrt(std::max(0.0, var_te)),
                     level);
    return e;
}

MediationEffects difference_mediation(const VectorXd& exposure, const MatrixXd& covariates,
                                      const VectorXd& mediator, const VectorXd& outcome,
                                      const Contrast& contrast, const MediationOptions& options) {
    check_inputs(exposure, covariates, mediator, outcome, contrast);
    const LinearFit total = ols_fit(stack_design(exposure, covariates, nullptr), outcome);
    const LinearFit out = ols_fit(stack_design(exposure, covariates, &mediator), outcome);

    MediationEffects e;
    e.contrast = contrast;
    e.method = "difference";
    e.beta_x = out.coefficients(1);
    e.se_beta_x = out.se(1);
    e.beta_m = out.coefficients(2);
    e.se_beta_m = out.se(2);

    const double d = contrast.comparative(0) - contrast.reference(0);
    const double phi_x = total.coefficients(1);
    const double level = options.level;
    e.te = to_effect(d * phi_x, std::abs(d) * total.se(1), level);
    e.nde = to_effect(d * e.beta_x, std::abs(d) * e.se_beta_x, level);
    // Independent-fit approximation for Var(phi_x - beta_x).
    const double se_diff = std::sqrt(total.covariance(1, 1) + out.covariance(1, 1));
    e.nie = to_effect(d * (phi_x - e.beta_x), std::abs(d) * se_diff, level);
    return e;
}

MatrixXd covariate_block(const Dataset& data, Index exposure, const CovariateSelection& covariates,
                         std::vector<std::string>* names) {
    if (exposure < 0 || exposure >= data.p()) throw DomainError("exposure index out of range");
    for (Index j : covariates.co_exposures) {
        if (j == exposure) throw ConfigurationError("exposure column listed among its own covariates");
        if (j < 0 || j >= data.p()) throw DomainError("co-exposure index out of range");
    }
    const Index s = covariates.confounders ? data.s() : 0;
    MatrixXd block(data.n(), static_cast<Index>(covariates.co_exposures.size()) + s);
    Index c = 0;
    for (Index j : covariates.co_exposures) {
        block.col(c++) = data.exposures.col(j);
        if (names) names->push_back(data.exposure_names[static_cast<std::size_t>(j)]);
    }
    if (s > 0) {
        block.rightCols(s) = data.confounders;
        if (names) names->insert(names->end(), data.confounder_names.begin(), data.confounder_names.end());
    }
    return block;
}

MediationEffects product_mediation(const Dataset& data, Index exposure,
                                   const CovariateSelection& covariates, const Contrast& contrast,
                                   const MediationOptions& options) {
    const MatrixXd cov = covariate_block(data, exposure, covariates);
    auto e = product_mediation(data.exposures.col(exposure), cov, data.mediator, data.outcome,
                               contrast, options);
    e.exposure = data.exposure_names[static_cast<std::size_t>(exposure)];
    return e;
}

MediationEffects difference_mediation(const Dataset& data, Index exposure,
                                      const CovariateSelection& covariates,
                                      const Contrast& contrast, const MediationOptions& options) {
    const MatrixXd cov = covariate_block(data, exposure, covariates);
    auto e = difference_mediation(data.exposures.col(exposure), cov, data.mediator, data.outcome,
                                  contrast, options);
    e.exposure = data.exposure_names[static_cast<std::size_t>(exposure)];
    return e;
}

Effect sum_independent(std::span<const Effect> effects, double level) {
    double est = 0.0, var = 0.0;
    for (const auto& e : effects) {
        est += e.estimate;
        var += e.se * e.se;
    }
    return to_effect(est, std::sqrt(var), level);
}

SemaResult sema(const Dataset& data, const SemaOptions& options) {
    const Index p = data.p();
    if (p < 1) throw ConfigurationError("sema needs at least one exposure");
    if (!(options.fdr_level > 0.0 && options.fdr_level <= 1.0))
        throw DomainError("fdr level must lie in (0,1]");
    const Contrast contrast = options.contrast.value_or(Contrast::unit(p));
    contrast.require_dim(p);

    SemaResult result;
    result.adjusted = options.adjust_coexposures;
    const MediationOptions mopts{options.level};
    std::vector<double> pvals;
    std::vector<Effect> nies;
    for (Index j = 0; j < p; ++j) {
        CovariateSelection sel;
        if (options.adjust_coexposures) {
            for (Index k = 0; k < p; ++k)
                if (k != j) sel.co_exposures.push_back(k);
        }
        const Contrast cj = Contrast::scalar(contrast.reference(j), contrast.comparative(j));
        auto e = product_mediation(data, j, sel, cj, mopts);
        e.method = options.adjust_coexposures ? "sema-adjusted" : "sema-unadjusted";
        pvals.push_back(e.nie.p);
        nies.push_back(e.nie);
        result.per_exposure.push_back(std::move(e));
    }
    result.nie_q = bh_adjust(pvals);
    for (double q : result.nie_q) result.active.push_back(q <= options.fdr_level);
    result.global_nie = sum_independent(nies, options.level);
    return result;
}

} // namespace mixmed
