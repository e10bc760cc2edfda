// Acceptance suite. `acceptance N` runs criterion N, `acceptance` runs all of them.
// Each criterion prints one line: "criterion N: PASS|FAIL|SKIP <details>".
// Exit status: 0 all passed, 1 any failure, 77 when the only outcome is a skip.

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "mixmed/bkmr.hpp"
#include "mixmed/bkmr_cma.hpp"
#include "mixmed/cli.hpp"
#include "mixmed/dataset.hpp"
#include "mixmed/elastic_net.hpp"
#include "mixmed/error.hpp"
#include "mixmed/ersma.hpp"
#include "mixmed/mediation.hpp"
#include "mixmed/parallel.hpp"
#include "mixmed/pcma.hpp"
#include "mixmed/rng.hpp"
#include "mixmed/sim.hpp"

using namespace mixmed;
namespace fs = std::filesystem;

namespace {

enum class Outcome { pass, fail, skip };

struct Verdict {
    Outcome outcome = Outcome::fail;
    std::string detail;
};

Verdict verdict(bool ok, const std::string& detail) { return {ok ? Outcome::pass : Outcome::fail, detail}; }

std::string fmt(double v, int precision = 4) {
    std::ostringstream os;
    os.precision(precision);
    os << v;
    return os.str();
}

MatrixXd normal_matrix(Index rows, Index cols, SeededRng& rng) {
    MatrixXd m(rows, cols);
    for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < cols; ++j) m(i, j) = rng.normal();
    return m;
}

// Equicorrelated columns with correlation rho.
MatrixXd correlated_matrix(Index rows, Index cols, double rho, SeededRng& rng) {
    MatrixXd corr = MatrixXd::Constant(cols, cols, rho);
    corr.diagonal().setOnes();
    const MatrixXd l = Eigen::LLT<MatrixXd>(corr).matrixL();
    return normal_matrix(rows, cols, rng) * l.transpose();
}

Index uniform_int(SeededRng& rng, Index lo, Index hi) {
    return lo + static_cast<Index>(std::floor(rng.uniform() * static_cast<double>(hi - lo + 1)));
}

// ---------------------------------------------------------------------------
// 1. Product and difference estimators agree.
Verdict criterion1() {
    SeededRng rng(101);
    double worst = 0.0;
    for (int rep = 0; rep < 200; ++rep) {
        const Index n = uniform_int(rng, 50, 500);
        const Index p = uniform_int(rng, 1, 10);
        const Index s = uniform_int(rng, 0, 3);
        const MatrixXd c = normal_matrix(n, s, rng);
        MatrixXd x = correlated_matrix(n, p, 0.3, rng);
        if (s > 0) x += c * MatrixXd::Constant(s, p, 0.2);
        const VectorXd ax = VectorXd::NullaryExpr(p, [&](Index) { return rng.normal() * 0.5; });
        const VectorXd bx = VectorXd::NullaryExpr(p, [&](Index) { return rng.normal() * 0.5; });
        VectorXd m = x * ax + normal_matrix(n, 1, rng).col(0);
        VectorXd y = 0.4 * m + x * bx + normal_matrix(n, 1, rng).col(0);
        if (s > 0) {
            m += c.rowwise().sum();
            y += c.rowwise().sum();
        }
        const Dataset d = make_dataset(x, m, y, c);
        const Contrast unit = Contrast::scalar(0.0, 1.0);
        for (Index j = 0; j < p; ++j) {
            CovariateSelection sel;
            for (Index k = 0; k < p; ++k)
                if (k != j) sel.co_exposures.push_back(k);
            const double prod = product_mediation(d, j, sel, unit).nie.estimate;
            const double diff = difference_mediation(d, j, sel, unit).nie.estimate;
            worst = std::max(worst, std::abs(prod - diff));
        }
    }
    return verdict(worst <= 1e-10, "max |NIE_product - NIE_difference| = " + fmt(worst, 3) + " over 200 datasets");
}

// ---------------------------------------------------------------------------
// 2. Delta-method interval coverage.
Verdict criterion2() {
    // M = 0.5 X + C + e, Y = 0.4 M + 0.2 X + C + e; NIE for a unit shift is 0.2.
    const double truth = 0.2;
    const int reps = 5000;
    const Index n = 500;
    int covered = 0;
    SeededRng root(202);
    for (int rep = 0; rep < reps; ++rep) {
        SeededRng rng = root.substream(static_cast<std::uint64_t>(rep));
        MatrixXd x(n, 1), c(n, 1);
        VectorXd m(n), y(n);
        for (Index i = 0; i < n; ++i) {
            c(i, 0) = rng.normal();
            x(i, 0) = 0.3 * c(i, 0) + rng.normal();
            m(i) = 0.5 * x(i, 0) + c(i, 0) + rng.normal();
            y(i) = 0.4 * m(i) + 0.2 * x(i, 0) + c(i, 0) + rng.normal();
        }
        const Dataset d = make_dataset(x, m, y, c);
        const MediationEffects e = product_mediation(d, 0, CovariateSelection{}, Contrast::scalar(0.0, 1.0));
        if (e.nie.ci_lo <= truth && truth <= e.nie.ci_hi) ++covered;
    }
    const double rate = static_cast<double>(covered) / reps;
    return verdict(rate >= 0.93 && rate <= 0.97, "coverage " + fmt(rate) + " over 5000 replicates (target [0.93, 0.97])");
}

// ---------------------------------------------------------------------------
// 3. Elastic net against an independent projected-gradient solver.

// Writes b = u - v with u, v >= 0; the objective is then smooth in (a, u, v) and
// the constraint set is a box, so accelerated projected gradient applies.
double projected_gradient_objective(const MatrixXd& z, const VectorXd& y, double l1, double l2,
                                    const std::vector<double>& pf) {
    const Index n = z.rows(), p = z.cols();
    MatrixXd w(n, 1 + 2 * p);
    w.col(0).setOnes();
    w.middleCols(1, p) = z;
    w.middleCols(1 + p, p) = -z;
    VectorXd pfv(p);
    for (Index j = 0; j < p; ++j) pfv(j) = pf[static_cast<std::size_t>(j)];

    const double lw = Eigen::SelfAdjointEigenSolver<MatrixXd>(w.transpose() * w, Eigen::EigenvaluesOnly)
                          .eigenvalues()
                          .maxCoeff();
    const double lipschitz = 2.0 * lw + 4.0 * l2 * pfv.maxCoeff() + 1e-12;
    const double step = 1.0 / lipschitz;

    auto objective = [&](const VectorXd& t) {
        const VectorXd u = t.segment(1, p), v = t.segment(1 + p, p);
        const VectorXd b = u - v;
        const VectorXd res = y - w * t;
        return res.squaredNorm() + l1 * pfv.dot(u + v) + l2 * pfv.dot(b.cwiseProduct(b));
    };
    auto gradient = [&](const VectorXd& t) {
        const VectorXd u = t.segment(1, p), v = t.segment(1 + p, p);
        const VectorXd b = u - v;
        VectorXd g = -2.0 * w.transpose() * (y - w * t);
        const VectorXd ridge = 2.0 * l2 * pfv.cwiseProduct(b);
        g.segment(1, p) += l1 * pfv + ridge;
        g.segment(1 + p, p) += l1 * pfv - ridge;
        return g;
    };
    auto project = [&](VectorXd t) {
        t.segment(1, 2 * p) = t.segment(1, 2 * p).cwiseMax(0.0);
        return t;
    };

    VectorXd t = VectorXd::Zero(1 + 2 * p);
    t(0) = y.mean();
    VectorXd prev = t, yk = t;
    double tk = 1.0, best = objective(t);
    for (int it = 0; it < 200000; ++it) {
        const VectorXd next = project(yk - step * gradient(yk));
        const double f = objective(next);
        // Restart momentum whenever the objective goes up.
        if (f > best) {
            tk = 1.0;
            yk = t;
            continue;
        }
        const double t1 = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * tk * tk));
        yk = next + ((tk - 1.0) / t1) * (next - t);
        prev = t;
        t = next;
        tk = t1;
        const double change = best - f;
        best = f;
        if (it > 100 && change <= 1e-15 * std::max(1.0, std::abs(f)) && (t - prev).norm() < 1e-13) break;
    }
    return best;
}

Verdict criterion3() {
    SeededRng rng(303);
    double worst_rel = 0.0, worst_kkt = 0.0, worst_ols = 0.0;
    for (int rep = 0; rep < 50; ++rep) {
        const Index n = uniform_int(rng, 30, 200);
        const Index p = uniform_int(rng, 2, 12);
        const MatrixXd z = correlated_matrix(n, p, 0.4, rng);
        VectorXd beta = VectorXd::Zero(p);
        for (Index j = 0; j < p; j += 2) beta(j) = rng.normal();
        const VectorXd y = z * beta + normal_matrix(n, 1, rng).col(0) + VectorXd::Constant(n, 1.5);
        std::vector<double> pf(static_cast<std::size_t>(p), 1.0);
        if (rep % 3 == 0) pf[0] = 0.0;  // one unpenalized feature
        if (rep % 5 == 0) pf[1] = 2.5;

        const GramSystem sys = GramSystem::from_data(z, y);
        const double lmax = lambda1_max(sys, pf);
        const double l1 = lmax * std::exp(std::log(1e-3) * rng.uniform());
        const double l2 = rep % 4 == 0 ? 0.0 : std::exp(std::log(1e-3) + rng.uniform() * std::log(1e5));

        const ElasticNetFit fit = elastic_net(z, y, l1, l2, pf);
        const double f_cd = elastic_net_objective(z, y, fit.intercept, fit.beta, l1, l2, pf);
        const double f_pg = projected_gradient_objective(z, y, l1, l2, pf);
        worst_rel = std::max(worst_rel, std::abs(f_cd - f_pg) / std::abs(f_pg));
        worst_kkt = std::max(worst_kkt, fit.kkt_residual);

        // Unpenalized limit against a QR least-squares solve.
        const ElasticNetFit ols = elastic_net(z, y, 0.0, 0.0, pf);
        MatrixXd design(n, p + 1);
        design.col(0).setOnes();
        design.rightCols(p) = z;
        const VectorXd coef = design.colPivHouseholderQr().solve(y);
        worst_ols = std::max(worst_ols, std::abs(ols.intercept - coef(0)));
        worst_ols = std::max(worst_ols, (ols.beta - coef.tail(p)).cwiseAbs().maxCoeff());
    }
    const bool ok = worst_rel <= 1e-6 && worst_kkt <= 1e-6 && worst_ols <= 1e-6;
    return verdict(ok, "max objective gap " + fmt(worst_rel, 3) + " (relative), max KKT " + fmt(worst_kkt, 3) +
                           ", max |b - b_OLS| " + fmt(worst_ols, 3) + " over 50 instances");
}

// ---------------------------------------------------------------------------
// 4. PCA identities.
Verdict criterion4() {
    SeededRng rng(404);
    double orth = 0.0, recon = 0.0, eigsum = 0.0;
    for (int rep = 0; rep < 50; ++rep) {
        const Index n = uniform_int(rng, 20, 300);
        const Index p = uniform_int(rng, 2, std::min<Index>(15, n - 1));
        MatrixXd x = correlated_matrix(n, p, 0.5 * rng.uniform(), rng);
        x.array().rowwise() += VectorXd::NullaryExpr(p, [&](Index) { return 5.0 * rng.normal(); }).transpose().array();
        const PcaModel model = pca(x);
        const MatrixXd std_x = standardize(x).values;
        orth = std::max(orth, (model.loadings.transpose() * model.loadings - MatrixXd::Identity(p, p)).cwiseAbs().maxCoeff());
        recon = std::max(recon, (model.scores * model.loadings.transpose() - std_x).cwiseAbs().maxCoeff());
        eigsum = std::max(eigsum, std::abs(model.eigenvalues.sum() - static_cast<double>(p)));
    }
    const bool ok = orth <= 1e-8 && recon <= 1e-8 && eigsum <= 1e-8;
    return verdict(ok, "max |L'L - I| " + fmt(orth, 3) + ", max reconstruction error " + fmt(recon, 3) +
                           ", max |sum(eigenvalues) - p| " + fmt(eigsum, 3) + " over 50 matrices");
}

// ---------------------------------------------------------------------------
// 5. Desk-scale simulation study.
Verdict criterion5() {
    StudyConfig cfg;
    cfg.scenarios = standard_scenarios();
    cfg.methods = {SimMethod::sema_unadjusted, SimMethod::sema_adjusted, SimMethod::pcma_first, SimMethod::ersma_main};
    cfg.replicates = 20;
    cfg.seed = 1;
    cfg.workers = default_workers();
    const MetricsReport report = run_study(cfg);

    bool ok = true;
    std::ostringstream detail;
    auto check = [&](const std::string& scenario, const std::string& method, const std::string& label, double value,
                     bool good) {
        detail << " " << label << "[" << scenario << "]=" << fmt(value, 3) << (good ? "" : "(x)");
        ok = ok && good;
        (void)method;
    };
    for (const Scenario& sc : cfg.scenarios) {
        const std::string s = sc.label();
        const MethodSummary* un = report.find(s, "sema_unadjusted");
        const MethodSummary* ad = report.find(s, "sema_adjusted");
        const MethodSummary* pc = report.find(s, "pcma_first");
        const MethodSummary* ers = report.find(s, "ersma_main");
        if (!un || !ad || !pc || !ers) return verdict(false, "missing summary rows for " + s);
        check(s, "sema_unadjusted", "unadj_bias%", un->relative_bias_mean, un->relative_bias_mean > 200.0);
        check(s, "sema_adjusted", "adj_bias%", ad->relative_bias_mean, std::abs(ad->relative_bias_mean) < 40.0);
        check(s, "sema_adjusted", "adj_fpr", ad->fpr_mean, ad->fpr_mean < 0.05);
        check(s, "ersma_main", "ers_bias%", ers->relative_bias_mean, std::abs(ers->relative_bias_mean) < 50.0);
        check(s, "pcma_first", "pc1_bias%", pc->relative_bias_mean,
              pc->relative_bias_mean >= 60.0 && pc->relative_bias_mean <= 180.0);
        if (sc.n == 2500 && sc.r2_m == 0.4) check(s, "sema_adjusted", "adj_tpr", ad->tpr_mean, ad->tpr_mean > 0.5);
    }
    return verdict(ok, "20 replicates;" + detail.str());
}

// ---------------------------------------------------------------------------
// 6. BKMR variable selection at desk scale.
Verdict criterion6() {
    // Five exposures with correlation 0.3 and one confounder; only Z1 drives M.
    const Index n = 200, p = 5;
    const int reps = 10;
    int top_hits = 0;
    double active_pip = 0.0, null_pip = 0.0;
    bool constraint_ok = true;
    std::string failure;
    for (int rep = 0; rep < reps; ++rep) {
        SeededRng data_rng(606, static_cast<std::uint64_t>(rep));
        const MatrixXd c = normal_matrix(n, 1, data_rng);
        const MatrixXd z = correlated_matrix(n, p, 0.3, data_rng);
        VectorXd m(n);
        for (Index i = 0; i < n; ++i) m(i) = 0.6 * z(i, 0) + 0.5 * c(i, 0) + data_rng.normal();

        KernelConfig cw;
        cw.iterations = 2000;
        cw.selection = SelectionMode::componentwise;
        SeededRng cw_rng(607, static_cast<std::uint64_t>(rep));
        const BkmrFit fit = kmbayes(m, z, c, cw, cw_rng, ModelRole::mediator);
        const Pips pips = extract_pips(fit);
        Index top = 0;
        pips.component.maxCoeff(&top);
        if (top == 0) ++top_hits;
        active_pip += pips.component(0);
        null_pip += pips.component.tail(p - 1).mean();

        KernelConfig hier = cw;
        hier.selection = SelectionMode::hierarchical;
        hier.groups = {0, 0, 1, 1, 1};
        SeededRng h_rng(608, static_cast<std::uint64_t>(rep));
        try {
            // The sampler also asserts the constraint after every iteration.
            const BkmrFit h = kmbayes(m, z, c, hier, h_rng, ModelRole::mediator);
            for (Index it = 0; it < h.chain.length(); ++it) {
                if (h.chain.delta(it, 0) + h.chain.delta(it, 1) > 1 ||
                    h.chain.delta(it, 2) + h.chain.delta(it, 3) + h.chain.delta(it, 4) > 1) {
                    constraint_ok = false;
                    failure = " (violation at replicate " + std::to_string(rep) + ")";
                    break;
                }
            }
        } catch (const NumericalError& e) {
            constraint_ok = false;
            failure = std::string(" (") + e.what() + ")";
        }
    }
    active_pip /= reps;
    null_pip /= reps;
    const bool ok = top_hits >= 8 && constraint_ok && null_pip < active_pip;
    return verdict(ok, "planted input top PIP in " + std::to_string(top_hits) + "/10; mean PIP active " +
                           fmt(active_pip, 3) + " vs null " + fmt(null_pip, 3) + "; hierarchical constraint " +
                           (constraint_ok ? "held" : "violated") + failure);
}

// ---------------------------------------------------------------------------
// 7. BKMR-CMA on a single-exposure linear DGP.
Verdict criterion7() {
    const Index n = 500;
    const int runs = 10;
    int covered = 0;
    bool identity = true;
    std::ostringstream detail;
    for (int run = 0; run < runs; ++run) {
        SeededRng rng(707, static_cast<std::uint64_t>(run));
        MatrixXd x(n, 1), c(n, 1), xm(n, 2);
        VectorXd m(n), y(n);
        for (Index i = 0; i < n; ++i) {
            x(i, 0) = rng.normal();
            c(i, 0) = rng.normal();
            m(i) = 0.5 * x(i, 0) + c(i, 0) + rng.normal();
            y(i) = 0.2 * x(i, 0) + 0.4 * m(i) + c(i, 0) + rng.normal();
        }
        xm << x, m;
        KernelConfig cfg;
        cfg.iterations = 1000;
        cfg.selection = SelectionMode::none;
        std::vector<BkmrFit> fits(3);
        parallel_for(3, default_workers(), [&](std::size_t k) {
            SeededRng s = rng.substream(1 + k);
            if (k == 0) fits[0] = kmbayes(m, x, c, cfg, s, ModelRole::mediator);
            if (k == 1) fits[1] = kmbayes(y, xm, c, cfg, s, ModelRole::outcome);
            if (k == 2) fits[2] = kmbayes(y, x, c, cfg, s, ModelRole::total_effect);
        });
        CmaConfig cma;
        cma.astar = VectorXd::Zero(1);
        cma.a = VectorXd::Ones(1);
        cma.workers = default_workers();
        const PosteriorEffects eff = mediation_bkmr(fits[0], fits[1], fits[2], cma, rng.substream(10));
        for (Index j = 0; j < eff.te.size(); ++j)
            if (eff.nie(j) != eff.te(j) - eff.nde(j)) identity = false;
        const PosteriorSummary s = eff.nie_summary();
        if (s.lo <= 0.2 && 0.2 <= s.hi) ++covered;
        detail << " (" << fmt(s.lo, 2) << "," << fmt(s.hi, 2) << ")";
    }
    return verdict(covered >= 9 && identity, "0.20 inside the 95% CrI in " + std::to_string(covered) +
                                                 "/10 runs; NIE = TE - NDE " + (identity ? "exact" : "violated") +
                                                 "; CrIs" + detail.str());
}

// ---------------------------------------------------------------------------
// 8. Truth machinery.
Verdict criterion8() {
    const Scenario base = Scenario::standard(1000, 0.4);
    const double se_truth = true_global_nie(base, SimMethod::sema_adjusted);
    bool ok = std::abs(se_truth - 2.16) < 1e-12;
    std::ostringstream detail;
    detail << "SE-MA truth " << fmt(se_truth, 6) << ";";
    for (double r2 : {0.1, 0.4}) {
        const Scenario sc = Scenario::standard(1000, r2);
        for (SimMethod m : {SimMethod::pcma_first, SimMethod::pcma_top3, SimMethod::pcma_var80, SimMethod::ersma_main}) {
            TruthOptions a, b;
            a.seed = 1001;
            b.seed = 2002;
            const double ta = true_global_nie(sc, m, a);
            const double tb = true_global_nie(sc, m, b);
            const double rel = std::abs(ta - tb) / (0.5 * std::abs(ta + tb));
            ok = ok && rel <= 0.02;
            detail << " " << to_string(m) << "@r2m" << r2 << " " << fmt(ta, 4) << "/" << fmt(tb, 4) << " ("
                   << fmt(100.0 * rel, 2) << "%)";
        }
    }
    return verdict(ok, detail.str());
}

// ---------------------------------------------------------------------------
// 9. Reanalysis of a user-supplied cohort CSV.

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

std::string env_or(const char* name, const std::string& fallback) {
    const char* v = std::getenv(name);
    return v && *v ? std::string(v) : fallback;
}

// Reported values are rounded to two decimals.
bool matches_rounded(double value, double reported) { return std::abs(value - reported) <= 0.005 + 1e-12; }

Verdict criterion9() {
    const std::string path = env_or("MIXMED_PROTECT_CSV", "");
    if (path.empty() || !fs::exists(path))
        return {Outcome::skip, "set MIXMED_PROTECT_CSV to the cohort CSV to run this check"};
    Schema schema;
    schema.exposures = split_list(env_or("MIXMED_PROTECT_EXPOSURES", "MCPP,MCOP,MCNP,MBzP,MEHP,MEHHP,MEOHP,MECPP,MEP,MBP,MiBP"));
    schema.mediator = env_or("MIXMED_PROTECT_MEDIATOR", "LTE4");
    schema.outcome = env_or("MIXMED_PROTECT_OUTCOME", "hc_zscore");
    schema.confounders = split_list(env_or("MIXMED_PROTECT_CONFOUNDERS", "age_cat,edu_cat,bmi_cat"));
    schema.categorical = split_list(env_or("MIXMED_PROTECT_CATEGORICAL", "age_cat,edu_cat,bmi_cat"));
    const Dataset d = load_dataset(path, schema).data;

    bool ok = true;
    std::ostringstream detail;
    auto compare = [&](const std::string& label, double est, double lo, double hi, double r_est, double r_lo,
                       double r_hi) {
        const bool good = matches_rounded(est, r_est) && matches_rounded(lo, r_lo) && matches_rounded(hi, r_hi);
        ok = ok && good;
        detail << " " << label << " " << fmt(est, 2) << " (" << fmt(lo, 2) << ", " << fmt(hi, 2) << ")"
               << (good ? "" : "(x)");
    };

    const SemaResult se = sema(d);
    compare("SE-MA", se.global_nie.estimate, se.global_nie.ci_lo, se.global_nie.ci_hi, 0.00, -0.30, 0.30);

    PcmaOptions po;
    po.rule = RetentionRule::first(5);
    const PcmaResult pc = pcma(d, po);
    const double cum5 = pc.model.cumulative_proportions()(4);
    const bool five = cum5 > 0.85 && select_components(pc.model, RetentionRule::cumulative(0.85)) == 5;
    ok = ok && five;
    detail << " PCs: 5 explain " << fmt(100.0 * cum5, 3) << "%" << (five ? "" : "(x)");
    compare("PC-MA", pc.global_nie.estimate, pc.global_nie.ci_lo, pc.global_nie.ci_hi, -0.02, -0.09, 0.05);

    SeededRng ers_rng(909);
    const ErsmaResult ers = ersma(d, ers_rng);
    compare("ERS-MA", ers.effects.nie.estimate, ers.effects.nie.ci_lo, ers.effects.nie.ci_hi, 0.02, -0.04, 0.13);

    KernelConfig kc;
    kc.iterations = 10000;
    MatrixXd xm(d.n(), d.p() + 1);
    xm << d.exposures, d.mediator;
    SeededRng b(910);
    SeededRng s1 = b.substream(1), s2 = b.substream(2), s3 = b.substream(3);
    const BkmrFit fm = kmbayes(d.mediator, d.exposures, d.confounders, kc, s1, ModelRole::mediator);
    const BkmrFit fy = kmbayes(d.outcome, xm, d.confounders, kc, s2, ModelRole::outcome);
    const BkmrFit ft = kmbayes(d.outcome, d.exposures, d.confounders, kc, s3, ModelRole::total_effect);
    CmaConfig cma;
    cma.astar.resize(d.p());
    cma.a.resize(d.p());
    for (Index j = 0; j < d.p(); ++j) {
        cma.astar(j) = quantile(VectorXd(d.exposures.col(j)), 0.25);
        cma.a(j) = quantile(VectorXd(d.exposures.col(j)), 0.75);
    }
    const PosteriorSummary nie = mediation_bkmr(fm, fy, ft, cma, b.substream(10)).nie_summary();
    compare("BKMR-CMA", nie.mean, nie.lo, nie.hi, 0.00, -0.44, 0.45);
    return verdict(ok, detail.str());
}

// ---------------------------------------------------------------------------
// 10. Byte-identical reruns of every subcommand.

std::map<std::string, std::string> dir_contents(const fs::path& dir) {
    std::map<std::string, std::string> m;
    for (const auto& e : fs::directory_iterator(dir)) {
        std::ifstream in(e.path(), std::ios::binary);
        std::ostringstream s;
        s << in.rdbuf();
        m[e.path().filename().string()] = s.str();
    }
    return m;
}

Verdict criterion10() {
    const fs::path root = fs::temp_directory_path() / "mixmed_acceptance_determinism";
    fs::remove_all(root);
    fs::create_directories(root);
    const fs::path csv = root / "data.csv";
    {
        std::ofstream f(csv);
        f.precision(17);
        f << "x1,x2,x3,m,y,c,site\n";
        SeededRng r(1010);
        const char* sites[] = {"a", "b", "c"};
        for (int i = 0; i < 150; ++i) {
            const double c = r.normal();
            const double x1 = 0.3 * c + r.normal(), x2 = 0.5 * x1 + r.normal(), x3 = r.normal();
            const double m = 0.5 * x1 + 0.3 * x3 + 0.5 * c + r.normal();
            const double y = 0.4 * m + 0.2 * x2 + c + r.normal();
            f << x1 << "," << x2 << "," << x3 << "," << m << "," << y << "," << c << "," << sites[i % 3] << "\n";
        }
    }
    const std::vector<std::string> data{"--data",     csv.string(), "--exposures", "x1,x2,x3",  "--mediator",
                                        "m",          "--outcome",  "y",           "--confounders", "c,site",
                                        "--categorical", "site"};
    std::vector<std::vector<std::string>> commands = {
        {"sema"},
        {"sema", "--unadjusted"},
        {"pcma"},
        {"ersma", "--features", "higher_order", "--lambda2-points", "5"},
        {"bkmr-fit", "--iterations", "300", "--selection", "hierarchical", "--cluster-k", "2"},
        {"bkmr-cma", "--iterations", "300", "--draws", "10"},
        {"simulate", "--methods", "sema_adjusted,pcma_first,ersma_main,bkmr_componentwise", "--n", "200", "--r2m",
         "0.4", "--replicates", "2", "--bkmr-replicates", "1", "--bkmr-iterations", "200", "--truth-rows", "3000"},
    };
    std::string mismatches;
    std::size_t checked = 0;
    fs::path metrics;
    for (std::size_t ci = 0; ci < commands.size(); ++ci) {
        std::vector<std::map<std::string, std::string>> runs;
        for (int rep = 0; rep < 2; ++rep) {
            const fs::path out = root / ("run" + std::to_string(ci) + "_" + std::to_string(rep));
            std::vector<std::string> args = commands[ci];
            if (args.front() != "simulate") args.insert(args.end(), data.begin(), data.end());
            args.insert(args.end(), {"--seed", "77", "--out", out.string()});
            std::ostringstream o, e;
            const int code = run_cli(args, o, e);
            if (code != 0) return verdict(false, args.front() + " failed: " + e.str());
            runs.push_back(dir_contents(out));
            if (args.front() == "simulate")
                for (const auto& entry : fs::directory_iterator(out))
                    if (entry.path().filename().string().rfind("simulate_metrics_", 0) == 0) metrics = entry.path();
        }
        ++checked;
        if (runs[0] != runs[1]) mismatches += " " + commands[ci].front();
    }
    std::vector<std::map<std::string, std::string>> reports;
    for (int rep = 0; rep < 2; ++rep) {
        const fs::path out = root / ("report_" + std::to_string(rep));
        std::ostringstream o, e;
        if (run_cli({"report", "--input", metrics.string(), "--out", out.string()}, o, e) != 0)
            return verdict(false, "report failed: " + e.str());
        reports.push_back(dir_contents(out));
    }
    ++checked;
    if (reports[0] != reports[1]) mismatches += " report";
    fs::remove_all(root);
    return verdict(mismatches.empty(), std::to_string(checked) + " subcommand configurations rerun" +
                                           (mismatches.empty() ? ", all artifacts byte-identical"
                                                               : "; differing:" + mismatches));
}

const std::vector<std::function<Verdict()>> criteria = {criterion1, criterion2, criterion3, criterion4, criterion5,
                                                        criterion6, criterion7, criterion8, criterion9, criterion10};

} // namespace

int main(int argc, char** argv) {
    std::vector<int> which;
    for (int i = 1; i < argc; ++i) which.push_back(std::atoi(argv[i]));
    if (which.empty())
        for (int i = 1; i <= static_cast<int>(criteria.size()); ++i) which.push_back(i);

    bool any_fail = false, any_pass = false;
    for (int k : which) {
        if (k < 1 || k > static_cast<int>(criteria.size())) {
            std::cerr << "unknown criterion " << k << "\n";
            return 2;
        }
        const auto start = std::chrono::steady_clock::now();
        Verdict v;
        try {
            v = criteria[static_cast<std::size_t>(k - 1)]();
        } catch (const std::exception& e) {
            v = {Outcome::fail, std::string("threw: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const char* tag = v.outcome == Outcome::pass ? "PASS" : v.outcome == Outcome::fail ? "FAIL" : "SKIP";
        std::cout << "criterion " << k << ": " << tag << "  " << v.detail << " [" << fmt(secs, 3) << " s]" << std::endl;
        any_fail = any_fail || v.outcome == Outcome::fail;
        any_pass = any_pass || v.outcome == Outcome::pass;
    }
    if (any_fail) return 1;
    return any_pass ? 0 : 77;
}
