#include "mixmed/bkmr.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mixmed/dataset.hpp"
#include "mixmed/error.hpp"
#include "mixmed/linmod.hpp"

namespace mixmed {

const char* to_string(SelectionMode mode) {
    switch (mode) {
    case SelectionMode::none: return "none";
    case SelectionMode::componentwise: return "componentwise";
    case SelectionMode::hierarchical: return "hierarchical";
    }
    return "none";
}

const char* to_string(ModelRole role) {
    switch (role) {
    case ModelRole::mediator: return "mediator";
    case ModelRole::outcome: return "outcome";
    case ModelRole::total_effect: return "total_effect";
    }
    return "outcome";
}

SelectionMode parse_selection_mode(const std::string& text) {
    if (text == "none") return SelectionMode::none;
    if (text == "componentwise" || text == "component-wise") return SelectionMode::componentwise;
    if (text == "hierarchical") return SelectionMode::hierarchical;
    throw ConfigurationError("unknown selection mode '" + text +
                             "' (none | componentwise | hierarchical)");
}

ModelRole parse_model_role(const std::string& text) {
    if (text == "mediator") return ModelRole::mediator;
    if (text == "outcome") return ModelRole::outcome;
    if (text == "total_effect" || text == "total-effect" || text == "te") return ModelRole::total_effect;
    throw ConfigurationError("unknown model role '" + text + "'");
}

void KernelConfig::validate(Index q) const {
    if (iterations < 100) throw DomainError("iterations must be at least 100");
    if (thin < 1 || thin > iterations) throw DomainError("thin must lie in [1, iterations]");
    if (!(pi > 0.0 && pi < 1.0)) throw DomainError("pi must lie in (0,1)");
    if (!(slab_upper > 0.0)) throw DomainError("slab_upper must be positive");
    if (!(sigma_shape > 0.0 && sigma_rate > 0.0 && lambda_shape > 0.0 && lambda_rate > 0.0))
        throw DomainError("prior hyperparameters must be positive");
    if (!(lambda_step > 0.0 && r_step > 0.0 && r_birth_mean > 0.0 && r_birth_sd > 0.0))
        throw DomainError("proposal scales must be positive");
    if (!(lambda_init > 0.0 && r_init > 0.0 && r_init < slab_upper))
        throw DomainError("initial values out of range");
    if (selection == SelectionMode::hierarchical) {
        if (static_cast<Index>(groups.size()) != q)
            throw ConfigurationError("hierarchical mode needs one group label per kernel input");
        const int g = *std::max_element(groups.begin(), groups.end());
        std::vector<int> seen(static_cast<std::size_t>(std::max(g + 1, 0)), 0);
        for (int label : groups) {
            if (label < 0) throw ConfigurationError("group labels must be nonnegative");
            seen[static_cast<std::size_t>(label)] = 1;
        }
        for (int s : seen)
            if (!s) throw ConfigurationError("group labels must be contiguous from 0");
    }
}

double gaussian_kernel(const VectorXd& zi, const VectorXd& zj, const VectorXd& r) {
    if (zi.size() != zj.size() || zi.size() != r.size())
        throw DomainError("gaussian_kernel: length mismatch");
    return std::exp(-(r.array() * (zi - zj).array().square()).sum());
}

MatrixXd kernel_matrix(const MatrixXd& a, const MatrixXd& b, const VectorXd& r) {
    if (a.cols() != r.size() || b.cols() != r.size()) throw DomainError("kernel_matrix: dimension mismatch");
    const VectorXd w = r.cwiseSqrt();
    const MatrixXd as = a * w.asDiagonal();
    const MatrixXd bs = b * w.asDiagonal();
    MatrixXd d = -2.0 * as * bs.transpose();
    d.colwise() += as.rowwise().squaredNorm();
    d.rowwise() += bs.rowwise().squaredNorm().transpose();
    return (-d.cwiseMax(0.0)).array().exp().matrix();
}

namespace {

MatrixXd self_kernel(const MatrixXd& z, const VectorXd& r) {
    MatrixXd k = kernel_matrix(z, z, r);
    k.diagonal().setOnes();
    return k;
}

struct Factor {
    MatrixXd lower;
    double logdet = 0.0;
};

// Cholesky of I + lambda K, escalating a diagonal jitter before giving up.
Factor factor_covariance(const MatrixXd& k, double lambda) {
    static constexpr double jitters[] = {0.0, 1e-8, 1e-7, 1e-6};
    MatrixXd v = lambda * k;
    v.diagonal().array() += 1.0;
    for (double j : jitters) {
        MatrixXd trial = v;
        if (j > 0.0) trial.diagonal().array() += j;
        Eigen::LLT<MatrixXd> llt(trial);
        if (llt.info() == Eigen::Success) {
            Factor f;
            f.lower = llt.matrixL();
            f.logdet = 2.0 * f.lower.diagonal().array().log().sum();
            if (std::isfinite(f.logdet)) return f;
        }
    }
    throw NumericalError("kernel covariance is not positive definite after jitter 1e-6");
}

VectorXd lower_solve(const Factor& f, const VectorXd& b) {
    return f.lower.triangularView<Eigen::Lower>().solve(b);
}

double log_likelihood(const Factor& f, const VectorXd& resid, double sigma2) {
    return -0.5 * f.logdet - 0.5 * lower_solve(f, resid).squaredNorm() / sigma2;
}

double gamma_log_density(double x, double shape, double rate) {
    return shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * std::log(x) - rate * x;
}

struct Sampler {
    const VectorXd& y;
    const MatrixXd& z;
    const MatrixXd& x;
    const KernelConfig& cfg;
    SeededRng& rng;

    Index n, q, c;
    std::vector<std::vector<Index>> members;  // per group
    std::vector<Index> group_of;
    VectorXd r;
    Eigen::VectorXi delta;
    VectorXd beta;
    double sigma2 = 1.0;
    double lambda = 10.0;
    MatrixXd k;
    Factor fac;
    Acceptance lambda_moves, select_moves, r_moves;

    Sampler(const VectorXd& y_, const MatrixXd& z_, const MatrixXd& x_, const KernelConfig& cfg_,
            SeededRng& rng_)
        : y(y_), z(z_), x(x_), cfg(cfg_), rng(rng_), n(y_.size()), q(z_.cols()), c(x_.cols()) {
        group_of.resize(static_cast<std::size_t>(q));
        if (cfg.selection == SelectionMode::hierarchical) {
            const int g = *std::max_element(cfg.groups.begin(), cfg.groups.end()) + 1;
            members.resize(static_cast<std::size_t>(g));
            for (Index j = 0; j < q; ++j) {
                group_of[static_cast<std::size_t>(j)] = cfg.groups[static_cast<std::size_t>(j)];
                members[static_cast<std::size_t>(cfg.groups[static_cast<std::size_t>(j)])].push_back(j);
            }
        } else {
            for (Index j = 0; j < q; ++j) {
                group_of[static_cast<std::size_t>(j)] = j;
                members.push_back({j});
            }
        }
        r = VectorXd::Zero(q);
        delta = Eigen::VectorXi::Zero(q);
        for (const auto& g : members) {
            if (cfg.selection == SelectionMode::hierarchical) {
                delta(g.front()) = 1;
                r(g.front()) = cfg.r_init;
            } else {
                for (Index j : g) {
                    delta(j) = 1;
                    r(j) = cfg.r_init;
                }
            }
        }
        const LinearFit ols = ols_fit(x, y);
        beta = ols.coefficients;
        sigma2 = std::max(ols.residual_variance, 1e-8);
        lambda = cfg.lambda_init;
        k = self_kernel(z, r);
        fac = factor_covariance(k, lambda);
    }

    Index included() const { return delta.sum(); }
    double select_move_prob(Index count) const { return count == 0 ? 1.0 : 0.5; }
    double off_prob(std::size_t group_size) const { return group_size > 1 ? 0.5 : 1.0; }
    double birth_shape() const { return std::pow(cfg.r_birth_mean / cfg.r_birth_sd, 2); }
    double birth_rate() const { return cfg.r_birth_mean / (cfg.r_birth_sd * cfg.r_birth_sd); }
    double slab_log_density(double v) const {
        return v > 0.0 && v < cfg.slab_upper ? -std::log(cfg.slab_upper)
                                             : -std::numeric_limits<double>::infinity();
    }

    VectorXd residual() const { return y - x * beta; }

    void update_beta() {
        const MatrixXd w = fac.lower.triangularView<Eigen::Lower>().solve(x);
        const VectorXd u = lower_solve(fac, y);
        const MatrixXd a = w.transpose() * w;
        Eigen::LLT<MatrixXd> llt(a);
        if (llt.info() != Eigen::Success) throw NumericalError("fixed-effect precision is singular");
        const VectorXd mean = llt.solve(w.transpose() * u);
        VectorXd xi(c);
        for (Index j = 0; j < c; ++j) xi(j) = rng.normal();
        const MatrixXd rl = llt.matrixL();
        beta = mean + std::sqrt(sigma2) * rl.transpose().triangularView<Eigen::Upper>().solve(xi);
    }

    void update_sigma2() {
        const double ss = lower_solve(fac, residual()).squaredNorm();
        const double precision =
            rng.gamma(cfg.sigma_shape + 0.5 * static_cast<double>(n), cfg.sigma_rate + 0.5 * ss);
        sigma2 = 1.0 / precision;
    }

    void update_lambda() {
        const double proposal = lambda * std::exp(cfg.lambda_step * rng.normal());
        const VectorXd e = residual();
        const Factor next = factor_covariance(k, proposal);
        const double log_a = log_likelihood(next, e, sigma2) - log_likelihood(fac, e, sigma2) +
                             gamma_log_density(proposal, cfg.lambda_shape, cfg.lambda_rate) -
                             gamma_log_density(lambda, cfg.lambda_shape, cfg.lambda_rate) +
                             std::log(proposal / lambda);
        ++lambda_moves.proposed;
        if (std::log(rng.uniform_open()) < log_a) {
            ++lambda_moves.accepted;
            lambda = proposal;
            fac = next;
        }
    }

    // Evaluates a proposed r and accepts with log ratio `log_prior_proposal` + likelihood ratio.
    bool try_r(const VectorXd& r_new, double log_prior_proposal, Acceptance& counter) {
        ++counter.proposed;
        if (!std::isfinite(log_prior_proposal)) return false;
        const VectorXd e = residual();
        MatrixXd k_new = self_kernel(z, r_new);
        Factor f_new = factor_covariance(k_new, lambda);
        const double log_a =
            log_likelihood(f_new, e, sigma2) - log_likelihood(fac, e, sigma2) + log_prior_proposal;
        if (std::log(rng.uniform_open()) < log_a) {
            ++counter.accepted;
            r = r_new;
            k = std::move(k_new);
            fac = std::move(f_new);
            return true;
        }
        return false;
    }

    void random_walk_move() {
        std::vector<Index> on;
        for (Index j = 0; j < q; ++j)
            if (delta(j)) on.push_back(j);
        if (on.empty()) return;
        const Index j = on[rng.below(on.size())];
        VectorXd r_new = r;
        r_new(j) = r(j) * std::exp(cfg.r_step * rng.normal());
        const double log_ratio = slab_log_density(r_new(j)) - slab_log_density(r(j)) +
                                 std::log(r_new(j) / r(j));
        try_r(r_new, log_ratio, r_moves);
    }

    void selection_move() {
        const Index count = included();
        const auto g = rng.below(members.size());
        const auto& mem = members[g];
        Index on = -1;
        for (Index j : mem)
            if (delta(j)) on = j;
        const double log_odds = std::log(cfg.pi / (1.0 - cfg.pi));
        const double p_off = off_prob(mem.size());

        if (on < 0) {
            const Index j = mem[rng.below(mem.size())];
            const double v = rng.gamma(birth_shape(), birth_rate());
            VectorXd r_new = r;
            r_new(j) = v;
            const double log_ratio = log_odds + slab_log_density(v) -
                                     gamma_log_density(v, birth_shape(), birth_rate()) +
                                     std::log(select_move_prob(count + 1)) + std::log(p_off) -
                                     std::log(select_move_prob(count));
            if (try_r(r_new, log_ratio, select_moves)) delta(j) = 1;
        } else if (rng.uniform() < p_off) {
            VectorXd r_new = r;
            const double v = r(on);
            r_new(on) = 0.0;
            const double log_ratio = -log_odds - slab_log_density(v) +
                                     gamma_log_density(v, birth_shape(), birth_rate()) +
                                     std::log(select_move_prob(count - 1)) - std::log(p_off) -
                                     std::log(select_move_prob(count));
            if (try_r(r_new, log_ratio, select_moves)) delta(on) = 0;
        } else {
            std::vector<Index> others;
            for (Index j : mem)
                if (j != on) others.push_back(j);
            const Index j = others[rng.below(others.size())];
            VectorXd r_new = r;
            r_new(j) = r(on);
            r_new(on) = 0.0;
            if (try_r(r_new, 0.0, select_moves)) {
                delta(on) = 0;
                delta(j) = 1;
            }
        }
    }

    void update_kernel_weights() {
        if (cfg.selection == SelectionMode::none) {
            random_walk_move();
            return;
        }
        const Index count = included();
        if (rng.uniform() < select_move_prob(count))
            selection_move();
        else
            random_walk_move();
    }

    void check_invariants() const {
        if (!(sigma2 > 0.0) || !(lambda > 0.0)) throw NumericalError("variance draw left the support");
        for (Index j = 0; j < q; ++j)
            if ((delta(j) == 0) != (r(j) == 0.0)) throw NumericalError("r/delta mismatch in chain");
        if (cfg.selection == SelectionMode::hierarchical) {
            for (const auto& mem : members) {
                int on = 0;
                for (Index j : mem) on += delta(j);
                if (on > 1) throw NumericalError("more than one input included in a group");
            }
        }
    }
};

} // namespace

BkmrFit kmbayes(const VectorXd& y, const MatrixXd& z, const MatrixXd& x, const KernelConfig& config,
                SeededRng& rng, ModelRole role) {
    const Index n = y.size();
    if (z.rows() != n || (x.cols() > 0 && x.rows() != n))
        throw DomainError("kmbayes: inconsistent row counts");
    if (z.cols() < 1) throw DomainError("kmbayes needs at least one kernel input");
    config.validate(z.cols());
    if (!y.allFinite() || !z.allFinite() || !x.allFinite())
        throw DomainError("kmbayes: non-finite input");

    BkmrFit fit;
    fit.config = config;
    fit.role = role;
    fit.seed = rng.seed();
    fit.stream = rng.stream();
    fit.y = y;
    fit.z = z;
    fit.x = with_intercept(x.cols() > 0 ? x : MatrixXd(n, 0));
    if (n <= fit.x.cols()) throw InsufficientDataError("kmbayes: more fixed effects than rows");

    Sampler s(y, z, fit.x, config, rng);
    const Index kept = config.iterations / config.thin;
    const Index groups = static_cast<Index>(s.members.size());
    McmcChain& ch = fit.chain;
    ch.r.resize(kept, s.q);
    ch.delta.resize(kept, s.q);
    if (config.selection == SelectionMode::hierarchical) ch.omega.resize(kept, groups);
    ch.beta.resize(kept, s.c);
    ch.sigma2.resize(kept);
    ch.lambda.resize(kept);

    Index row = 0;
    for (int it = 1; it <= config.iterations; ++it) {
        s.update_beta();
        s.update_sigma2();
        s.update_lambda();
        s.update_kernel_weights();
        s.check_invariants();
        if (it % config.thin != 0 || row >= kept) continue;
        ch.r.row(row) = s.r.transpose();
        ch.delta.row(row) = s.delta.transpose();
        if (config.selection == SelectionMode::hierarchical) {
            for (Index g = 0; g < groups; ++g) {
                int on = 0;
                for (Index j : s.members[static_cast<std::size_t>(g)]) on += s.delta(j);
                ch.omega(row, g) = on;
            }
        }
        ch.beta.row(row) = s.beta.transpose();
        ch.sigma2(row) = s.sigma2;
        ch.lambda(row) = s.lambda;
        ++row;
    }
    ch.lambda_moves = s.lambda_moves;
    ch.select_moves = s.select_moves;
    ch.r_moves = s.r_moves;
    auto check_rate = [&](const char* label, const Acceptance& a) {
        if (a.proposed > 0 && (a.rate() <= 0.01 || a.rate() >= 0.99))
            fit.warnings.push_back(std::string(label) + " acceptance rate " + std::to_string(a.rate()) +
                                   " outside (0.01, 0.99)");
    };
    check_rate("r random-walk", ch.r_moves);
    check_rate("lambda", ch.lambda_moves);
    return fit;
}

std::vector<Index> default_retained(const McmcChain& chain) {
    std::vector<Index> out;
    for (Index i = chain.length() / 2; i < chain.length(); ++i) out.push_back(i);
    return out;
}

Pips extract_pips(const BkmrFit& fit, const std::vector<Index>& retained) {
    if (retained.empty()) throw DomainError("extract_pips: no retained iterations");
    const McmcChain& ch = fit.chain;
    for (Index i : retained)
        if (i < 0 || i >= ch.length()) throw DomainError("extract_pips: iteration out of range");
    const Index q = ch.delta.cols();
    const double m = static_cast<double>(retained.size());
    Pips out;
    out.component = VectorXd::Zero(q);
    for (Index i : retained) out.component += ch.delta.row(i).cast<double>().transpose();
    out.component /= m;
    if (fit.config.selection == SelectionMode::hierarchical) {
        const Index g = ch.omega.cols();
        out.group = VectorXd::Zero(g);
        for (Index i : retained) out.group += ch.omega.row(i).cast<double>().transpose();
        out.group /= m;
        out.conditional = VectorXd::Zero(q);
        for (Index j = 0; j < q; ++j) {
            const int label = fit.config.groups[static_cast<std::size_t>(j)];
            double on = 0.0, hits = 0.0;
            for (Index i : retained) {
                if (ch.omega(i, label) == 0) continue;
                on += 1.0;
                hits += ch.delta(i, j);
            }
            out.conditional(j) = on > 0.0 ? hits / on : 0.0;
            out.component(j) = out.group(label) * out.conditional(j);
        }
    }
    return out;
}

Pips extract_pips(const BkmrFit& fit) { return extract_pips(fit, default_retained(fit.chain)); }

GpConditional::GpConditional(const BkmrFit& fit, Index iteration) : fit_(fit) {
    if (iteration < 0 || iteration >= fit.chain.length())
        throw DomainError("iteration outside the stored chain");
    r_ = fit.chain.r.row(iteration).transpose();
    beta_ = fit.chain.beta.row(iteration).transpose();
    sigma2_ = fit.chain.sigma2(iteration);
    lambda_ = fit.chain.lambda(iteration);
    const Factor f = factor_covariance(self_kernel(fit.z, r_), lambda_);
    chol_ = f.lower;
    const VectorXd e = fit.y - fit.x * beta_;
    alpha_ = chol_.transpose().triangularView<Eigen::Upper>().solve(
        chol_.triangularView<Eigen::Lower>().solve(e));
}

VectorXd GpConditional::mean(const MatrixXd& znew, VectorXd* var) const {
    if (znew.cols() != fit_.q()) throw DomainError("prediction inputs have the wrong width");
    const MatrixXd ks = kernel_matrix(fit_.z, znew, r_);
    const VectorXd m = lambda_ * (ks.transpose() * alpha_);
    if (var) {
        const MatrixXd w = chol_.triangularView<Eigen::Lower>().solve(ks);
        *var = (sigma2_ * lambda_ * (1.0 - lambda_ * w.colwise().squaredNorm().array())).cwiseMax(0.0).matrix().transpose();
    }
    return m;
}

VectorXd GpConditional::draw(const MatrixXd& znew, SeededRng& rng) const {
    if (znew.cols() != fit_.q()) throw DomainError("prediction inputs have the wrong width");
    // Collapse exact duplicates so their draws coincide.
    std::vector<Index> slot(static_cast<std::size_t>(znew.rows()));
    std::vector<Index> unique_rows;
    for (Index i = 0; i < znew.rows(); ++i) {
        Index found = -1;
        for (std::size_t u = 0; u < unique_rows.size() && found < 0; ++u)
            if (znew.row(unique_rows[u]) == znew.row(i)) found = static_cast<Index>(u);
        if (found < 0) {
            found = static_cast<Index>(unique_rows.size());
            unique_rows.push_back(i);
        }
        slot[static_cast<std::size_t>(i)] = found;
    }
    const Index u = static_cast<Index>(unique_rows.size());
    MatrixXd zu(u, fit_.q());
    for (Index k = 0; k < u; ++k) zu.row(k) = znew.row(unique_rows[static_cast<std::size_t>(k)]);

    const MatrixXd ks = kernel_matrix(fit_.z, zu, r_);
    const VectorXd m = lambda_ * (ks.transpose() * alpha_);
    const MatrixXd w = chol_.triangularView<Eigen::Lower>().solve(ks);
    MatrixXd cov = sigma2_ * lambda_ * (kernel_matrix(zu, zu, r_) - lambda_ * w.transpose() * w);
    cov = 0.5 * (cov + cov.transpose()).eval();
    // Eigen square root tolerates the near-singular covariance of close points.
    const Eigen::SelfAdjointEigenSolver<MatrixXd> es(cov);
    const VectorXd root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    VectorXd z(u);
    for (Index k = 0; k < u; ++k) z(k) = rng.normal();
    const VectorXd hu = m + es.eigenvectors() * root.cwiseProduct(z);

    VectorXd out(znew.rows());
    for (Index i = 0; i < znew.rows(); ++i) out(i) = hu(slot[static_cast<std::size_t>(i)]);
    return out;
}

ResponseCurve predictor_response_univar(const BkmrFit& fit, Index input, const VectorXd& grid,
                                        Index max_draws) {
    if (input < 0 || input >= fit.q()) throw DomainError("input index out of range");
    if (grid.size() < 1) throw DomainError("empty grid");
    if (max_draws < 1) throw DomainError("max_draws must be positive");
    const VectorXd col = fit.z.col(input);
    const double lo = col.minCoeff(), hi = col.maxCoeff();
    const double pad = 0.1 * (hi - lo);
    for (Index g = 0; g < grid.size(); ++g)
        if (grid(g) < lo - pad - 1e-12 || grid(g) > hi + pad + 1e-12)
            throw DomainError("grid point outside the training range +/- 10%");

    MatrixXd znew(grid.size(), fit.q());
    for (Index j = 0; j < fit.q(); ++j) {
        if (j == input)
            znew.col(j) = grid;
        else
            znew.col(j).setConstant(quantile(VectorXd(fit.z.col(j)), 0.5));
    }

    const auto retained = default_retained(fit.chain);
    if (retained.empty()) throw DomainError("no retained iterations");
    const Index draws = std::min<Index>(max_draws, static_cast<Index>(retained.size()));
    VectorXd sum = VectorXd::Zero(grid.size());
    VectorXd sumsq = VectorXd::Zero(grid.size());
    for (Index d = 0; d < draws; ++d) {
        const auto pos = static_cast<std::size_t>(d * static_cast<Index>(retained.size()) / draws);
        GpConditional gp(fit, retained[pos]);
        VectorXd v;
        const VectorXd m = gp.mean(znew, &v);
        sum += m;
        sumsq += (v.array() + m.array().square()).matrix();
    }
    ResponseCurve out;
    out.grid = grid;
    out.mean = sum / static_cast<double>(draws);
    out.sd = (sumsq / static_cast<double>(draws) - out.mean.cwiseAbs2()).cwiseMax(0.0).cwiseSqrt();
    return out;
}

} // namespace mixmed
