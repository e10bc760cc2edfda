#include "mixmed/linmod.hpp"

#include <algorithm>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <numeric>

#include "mixmed/error.hpp"

namespace mixmed {

double LinearFit::se(Index j) const { return std::sqrt(std::max(0.0, covariance(j, j))); }

double LinearFit::t_statistic(Index j) const { return coefficients(j) / se(j); }

double LinearFit::p_value(Index j) const {
    const double s = se(j);
    if (s == 0.0) return coefficients(j) == 0.0 ? 1.0 : 0.0;
    if (dof <= 0) return std::numeric_limits<double>::quiet_NaN();
    boost::math::students_t dist(static_cast<double>(dof));
    return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(coefficients(j) / s)));
}

MatrixXd with_intercept(const MatrixXd& columns) {
    MatrixXd out(columns.rows(), columns.cols() + 1);
    out.col(0).setOnes();
    out.rightCols(columns.cols()) = columns;
    return out;
}

LinearFit ols_fit(const MatrixXd& design, const VectorXd& response, std::vector<std::string> names) {
    const Index n = design.rows();
    const Index k = design.cols();
    if (response.size() != n) throw DomainError("ols_fit: response length does not match design");
    if (n <= k)
        throw InsufficientDataError("ols_fit: need more rows (" + std::to_string(n) +
                                    ") than columns (" + std::to_string(k) + ")");

    Eigen::ColPivHouseholderQR<MatrixXd> qr(design);
    const MatrixXd& qrm = qr.matrixQR();
    const double max_diag = k > 0 ? std::abs(qrm(0, 0)) : 0.0;
    for (Index i = 0; i < k; ++i) {
        if (!(std::abs(qrm(i, i)) > 1e-10 * max_diag)) {
            const Index col = qr.colsPermutation().indices()(i);
            const std::string label = static_cast<std::size_t>(col) < names.size()
                                          ? names[static_cast<std::size_t>(col)]
                                          : "column " + std::to_string(col);
            throw CollinearityError("ols_fit: design is rank deficient; " + label +
                                    " is linearly dependent on the others");
        }
    }

    LinearFit fit;
    fit.coefficients = qr.solve(response);
    const VectorXd resid = response - design * fit.coefficients;
    fit.dof = n - k;
    fit.residual_variance = resid.squaredNorm() / static_cast<double>(fit.dof);

    // (X'X)^-1 = P R^-1 R^-T P'
    const auto R = qrm.topLeftCorner(k, k).triangularView<Eigen::Upper>();
    const MatrixXd rinv = R.solve(MatrixXd::Identity(k, k));
    const MatrixXd unpermuted = rinv * rinv.transpose();
    const auto& perm = qr.colsPermutation();
    fit.covariance = perm * unpermuted * perm.transpose();
    fit.covariance = 0.5 * (fit.covariance + fit.covariance.transpose()).eval();
    fit.covariance *= fit.residual_variance;
    fit.names = std::move(names);
    return fit;
}

double normal_quantile(double prob) {
    return boost::math::quantile(boost::math::normal(), prob);
}

double normal_two_sided_p(double z) { return std::erfc(std::abs(z) / std::sqrt(2.0)); }

ProductInterval normal_interval(double estimate, double se, double level) {
    if (!(level > 0.0 && level < 1.0)) throw DomainError("interval level must lie in (0,1)");
    if (!(se >= 0.0)) throw DomainError("standard error must be nonnegative");
    ProductInterval out;
    out.se = se;
    const double z = normal_quantile(0.5 + level / 2.0);
    out.lo = estimate - z * se;
    out.hi = estimate + z * se;
    out.p = se > 0.0 ? normal_two_sided_p(estimate / se) : (estimate == 0.0 ? 1.0 : 0.0);
    return out;
}

ProductInterval delta_product_interval(double a, double se_a, double b, double se_b, double level) {
    if (!(se_a >= 0.0) || !(se_b >= 0.0)) throw DomainError("standard errors must be nonnegative");
    const double se = std::sqrt(b * b * se_a * se_a + a * a * se_b * se_b);
    return normal_interval(a * b, se, level);
}

std::vector<double> bh_adjust(std::span<const double> pvalues) {
    const std::size_t m = pvalues.size();
    for (double p : pvalues) {
        if (!(p >= 0.0 && p <= 1.0)) throw DomainError("bh_adjust: p-value outside [0,1]");
    }
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return pvalues[a] < pvalues[b]; });
    std::vector<double> q(m);
    double running = 1.0;
    for (std::size_t r = m; r-- > 0;) {
        const std::size_t i = order[r];
        // Ratio first: it is >= 1, so rounding never pushes q below p.
        const double candidate = pvalues[i] * (static_cast<double>(m) / static_cast<double>(r + 1));
        running = std::min(running, candidate);
        q[i] = std::min(1.0, running);
    }
    return q;
}

} // namespace mixmed
