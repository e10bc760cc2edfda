#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "mixmed/dataset.hpp"
#include "mixmed/mediation.hpp"

namespace mixmed {

/// Correlation-scale PCA. Columns of `loadings` are the PCs; each PC's
/// largest-magnitude loading is positive.
struct PcaModel {
    MatrixXd loadings;     // p x p, orthonormal
    VectorXd eigenvalues;  // nonincreasing, sums to p
    MatrixXd scores;       // n x p = standardized X * loadings
    VectorXd means;
    VectorXd sds;

    Index p() const { return loadings.rows(); }
    VectorXd variance_proportions() const;
    VectorXd cumulative_proportions() const;
    /// Scores for new rows, standardized with the training means/sds.
    MatrixXd project(const MatrixXd& X) const;
};

PcaModel pca(const MatrixXd& X);

struct RetentionRule {
    enum class Kind { cumulative_variance, first_k, kaiser };
    Kind kind = Kind::cumulative_variance;
    double threshold = 0.8;
    Index k = 1;

    static RetentionRule cumulative(double theta) { return {Kind::cumulative_variance, theta, 1}; }
    static RetentionRule first(Index k) { return {Kind::first_k, 0.0, k}; }
    static RetentionRule kaiser() { return {Kind::kaiser, 0.0, 1}; }
};

/// Number of leading PCs to keep. Kaiser keeps at least one component.
Index select_components(const PcaModel& model, const RetentionRule& rule);

struct PcmaOptions {
    RetentionRule rule = RetentionRule::cumulative(0.8);
    double level = 0.95;
    /// Per-PC score levels (length = retained count). Unset means 0 -> 1 on each PC.
    std::optional<Contrast> contrast;
};

struct PcmaResult {
    PcaModel model;
    Index retained = 0;
    std::vector<MediationEffects> per_pc;
    Effect global_nie;  // sum over retained PCs, independence approximation
};

/// Each retained PC is the exposure in turn; confounders and the other
/// retained PCs are covariates.
PcmaResult pcma(const Dataset& data, const PcmaOptions& options = {});

/// Same analysis on precomputed scores (n x l).
PcmaResult pcma_on_scores(const Dataset& data, const MatrixXd& scores, const Contrast& contrast,
                          double level = 0.95);

} // namespace mixmed
