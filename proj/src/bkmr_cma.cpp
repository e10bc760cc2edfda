#include "mixmed/bkmr_cma.hpp"

#include <algorithm>
#include <cmath>

#include "mixmed/dataset.hpp"
#include "mixmed/error.hpp"
#include "mixmed/parallel.hpp"

namespace mixmed {

PosteriorSummary posterior_summary(std::span<const double> samples, double alpha) {
    if (samples.empty()) throw DomainError("posterior_summary: no samples");
    if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("posterior_summary: alpha must lie in (0,1)");
    const double n = static_cast<double>(samples.size());
    PosteriorSummary s;
    for (double v : samples) s.mean += v;
    s.mean /= n;
    double ss = 0.0;
    for (double v : samples) ss += (v - s.mean) * (v - s.mean);
    s.sd = samples.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    s.lo = quantile(samples, alpha / 2.0);
    s.hi = quantile(samples, 1.0 - alpha / 2.0);
    return s;
}

PosteriorSummary posterior_summary(const VectorXd& samples, double alpha) {
    return posterior_summary(std::span<const double>(samples.data(), static_cast<std::size_t>(samples.size())),
                             alpha);
}

PosteriorSummary PosteriorEffects::cde_summary(Index j) const {
    if (j < 0 || j >= cde.cols()) throw DomainError("CDE index out of range");
    return posterior_summary(VectorXd(cde.col(j)), alpha);
}

PosteriorEffects mediation_bkmr(const BkmrFit& fit_m, const BkmrFit& fit_y, const BkmrFit& fit_te,
                                const CmaConfig& config, const SeededRng& rng) {
    if (fit_m.role != ModelRole::mediator || fit_y.role != ModelRole::outcome ||
        fit_te.role != ModelRole::total_effect)
        throw ConfigurationError("fits must have roles mediator, outcome, total_effect");
    const Index p = fit_m.q();
    if (fit_te.q() != p || fit_y.q() != p + 1)
        throw ConfigurationError("outcome kernel inputs must be the exposures plus the mediator");
    if (fit_m.x.cols() != fit_y.x.cols() || fit_m.x.cols() != fit_te.x.cols())
        throw ConfigurationError("fits must share the same confounders");
    if (config.a.size() != p || config.astar.size() != p)
        throw DomainError("a and astar must have one entry per exposure");
    if (config.draws < 1) throw DomainError("K must be at least 1");
    if (!(config.alpha > 0.0 && config.alpha < 1.0)) throw DomainError("alpha must lie in (0,1)");

    const Index len = std::min({fit_m.chain.length(), fit_y.chain.length(), fit_te.chain.length()});
    std::vector<Index> sel = config.sel;
    if (sel.empty())
        for (Index i = len / 2; i < len; ++i) sel.push_back(i);
    for (Index i : sel)
        if (i < 0 || i >= len) throw DomainError("sel refers to iteration " + std::to_string(i) +
                                                 " outside the chain (length " + std::to_string(len) + ")");

    const Index c = fit_m.x.cols();
    VectorXd profile(c);
    profile(0) = 1.0;
    if (config.covariate_profile) {
        if (config.covariate_profile->size() != c - 1)
            throw DomainError("covariate profile length does not match the confounders");
        profile.tail(c - 1) = *config.covariate_profile;
    } else {
        profile.tail(c - 1) = fit_m.x.rightCols(c - 1).colwise().mean().transpose();
    }

    std::vector<double> m_values;
    if (config.m_values) {
        m_values = *config.m_values;
    } else {
        const VectorXd med = fit_y.z.col(p);
        for (double qv : config.m_quantiles) {
            if (!(qv > 0.0 && qv < 1.0)) throw DomainError("mediator quantiles must lie in (0,1)");
            m_values.push_back(quantile(med, qv));
        }
    }

    PosteriorEffects out;
    out.sel = sel;
    out.alpha = config.alpha;
    out.m_values = m_values;
    const Index m = static_cast<Index>(sel.size());
    const Index nm = static_cast<Index>(m_values.size());
    out.te.resize(m);
    out.nde.resize(m);
    out.nie.resize(m);
    out.cde.resize(m, nm);

    const Index kd = config.draws;
    parallel_for(sel.size(), config.workers, [&](std::size_t s) {
        const Index it = sel[s];
        SeededRng draw_rng = rng.substream(static_cast<std::uint64_t>(it));
        const GpConditional gm(fit_m, it), gy(fit_y, it), gt(fit_te, it);

        // Step 1: mediator draws at the reference exposure (posterior predictive).
        VectorXd hvar;
        const double hmean = gm.mean(config.astar.transpose(), &hvar)(0);
        const double fixed_m = profile.dot(gm.beta());
        const double sd_h = std::sqrt(hvar(0));
        const double sd_e = std::sqrt(gm.sigma2());
        MatrixXd zy(2 * kd, p + 1);
        for (Index k = 0; k < kd; ++k) {
            const double mk = fixed_m + hmean + sd_h * draw_rng.normal() + sd_e * draw_rng.normal();
            zy.row(k).head(p) = config.a.transpose();
            zy.row(kd + k).head(p) = config.astar.transpose();
            zy(k, p) = mk;
            zy(kd + k, p) = mk;
        }
        // Steps 2-3: outcome model at (a, m_k) and (astar, m_k), averaged over k;
        // h is drawn jointly from its conditional at this iteration.
        const VectorXd hy = gy.draw(zy, draw_rng);
        const double y_a = hy.head(kd).mean();
        const double y_astar = hy.tail(kd).mean();
        // Step 4: total-effect model.
        MatrixXd zt(2, p);
        zt.row(0) = config.a.transpose();
        zt.row(1) = config.astar.transpose();
        const VectorXd ht = gt.draw(zt, draw_rng);

        const auto row = static_cast<Index>(s);
        out.te(row) = ht(0) - ht(1);
        out.nde(row) = y_a - y_astar;
        out.nie(row) = out.te(row) - out.nde(row);

        if (nm > 0) {
            MatrixXd zc(2 * nm, p + 1);
            for (Index j = 0; j < nm; ++j) {
                zc.row(j).head(p) = config.a.transpose();
                zc.row(nm + j).head(p) = config.astar.transpose();
                zc(j, p) = m_values[static_cast<std::size_t>(j)];
                zc(nm + j, p) = m_values[static_cast<std::size_t>(j)];
            }
            const VectorXd hc = gy.draw(zc, draw_rng);
            out.cde.row(row) = (hc.head(nm) - hc.tail(nm)).transpose();
        }
    });
    return out;
}

} // namespace mixmed
