#include "mixmed/pcma.hpp"

#include <cmath>

#include "mixmed/error.hpp"

namespace mixmed {

VectorXd PcaModel::variance_proportions() const {
    const double total = eigenvalues.sum();
    return eigenvalues / total;
}

VectorXd PcaModel::cumulative_proportions() const {
    VectorXd prop = variance_proportions();
    VectorXd cum(prop.size());
    double acc = 0.0;
    for (Index i = 0; i < prop.size(); ++i) {
        acc += prop(i);
        cum(i) = std::min(1.0, acc);
    }
    return cum;
}

MatrixXd PcaModel::project(const MatrixXd& X) const {
    return apply_standardization(X, means, sds) * loadings;
}

PcaModel pca(const MatrixXd& X) {
    if (X.rows() < 2) throw InsufficientDataError("pca needs at least 2 rows");
    const Standardized st = standardize(X);
    const Index n = X.rows();
    const Index p = X.cols();

    Eigen::JacobiSVD<MatrixXd> svd(st.values, Eigen::ComputeFullV);
    PcaModel model;
    model.means = st.means;
    model.sds = st.sds;
    model.loadings = svd.matrixV();
    model.eigenvalues = VectorXd::Zero(p);
    const VectorXd& sv = svd.singularValues();
    for (Index i = 0; i < sv.size(); ++i) model.eigenvalues(i) = sv(i) * sv(i) / static_cast<double>(n - 1);

    for (Index j = 0; j < p; ++j) {
        Index arg = 0;
        model.loadings.col(j).cwiseAbs().maxCoeff(&arg);
        if (model.loadings(arg, j) < 0.0) model.loadings.col(j) *= -1.0;
    }
    model.scores = st.values * model.loadings;
    return model;
}

Index select_components(const PcaModel& model, const RetentionRule& rule) {
    const Index p = model.p();
    switch (rule.kind) {
    case RetentionRule::Kind::first_k:
        if (rule.k < 1 || rule.k > p) throw DomainError("first_k must lie in [1, p]");
        return rule.k;
    case RetentionRule::Kind::kaiser: {
        Index count = 0;
        for (Index i = 0; i < p; ++i)
            if (model.eigenvalues(i) > 1.0) ++count;
        return std::max<Index>(count, 1);
    }
    case RetentionRule::Kind::cumulative_variance: {
        if (!(rule.threshold > 0.0 && rule.threshold <= 1.0))
            throw DomainError("cumulative variance threshold must lie in (0,1]");
        const VectorXd cum = model.cumulative_proportions();
        for (Index i = 0; i < p; ++i)
            if (cum(i) >= rule.threshold - 1e-12) return i + 1;
        return p;
    }
    }
    return p;
}

PcmaResult pcma_on_scores(const Dataset& data, const MatrixXd& scores, const Contrast& contrast,
                          double level) {
    const Index l = scores.cols();
    contrast.require_dim(l);
    PcmaResult result;
    result.retained = l;
    std::vector<Effect> nies;
    for (Index j = 0; j < l; ++j) {
        MatrixXd cov(data.n(), l - 1 + data.s());
        Index c = 0;
        for (Index k = 0; k < l; ++k)
            if (k != j) cov.col(c++) = scores.col(k);
        cov.rightCols(data.s()) = data.confounders;
        auto e = product_mediation(VectorXd(scores.col(j)), cov, data.mediator, data.outcome,
                                   Contrast::scalar(contrast.reference(j), contrast.comparative(j)),
                                   {level});
        e.exposure = "PC" + std::to_string(j + 1);
        e.method = "pcma";
        nies.push_back(e.nie);
        result.per_pc.push_back(std::move(e));
    }
    result.global_nie = sum_independent(nies, level);
    return result;
}

PcmaResult pcma(const Dataset& data, const PcmaOptions& options) {
    PcaModel model = pca(data.exposures);
    const Index l = select_components(model, options.rule);
    const Contrast contrast = options.contrast.value_or(Contrast::unit(l));
    PcmaResult result = pcma_on_scores(data, model.scores.leftCols(l), contrast, options.level);
    result.model = std::move(model);
    return result;
}

} // namespace mixmed
