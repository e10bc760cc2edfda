#include "mixmed/elastic_net.hpp"

#include <cmath>
#include <limits>

#include "mixmed/error.hpp"
#include "mixmed/parallel.hpp"

namespace mixmed {

namespace {

double soft_threshold(double z, double t) {
    if (z > t) return z - t;
    if (z < -t) return z + t;
    return 0.0;
}

void check_penalties(std::span<const double> pf, Index k, double l1, double l2) {
    if (static_cast<Index>(pf.size()) != k)
        throw DomainError("penalty factor count does not match feature count");
    for (double f : pf)
        if (!(f >= 0.0)) throw DomainError("penalty factors must be nonnegative");
    if (!(l1 >= 0.0) || !(l2 >= 0.0)) throw DomainError("lambdas must be nonnegative");
}

struct FoldSums {
    MatrixXd zz;
    VectorXd zy;
    double yy = 0.0;
    VectorXd z;
    double y = 0.0;
    double n = 0.0;
};

double validation_sse(const FoldSums& f, double a, const VectorXd& b) {
    return f.yy - 2.0 * a * f.y - 2.0 * b.dot(f.zy) + f.n * a * a + 2.0 * a * b.dot(f.z) +
           b.dot(f.zz * b);
}

} // namespace

GramSystem GramSystem::from_data(const MatrixXd& Z, const VectorXd& y) {
    if (Z.rows() != y.size()) throw DomainError("feature matrix and response lengths differ");
    GramSystem s;
    s.n = static_cast<double>(Z.rows());
    s.zmean = Z.colwise().mean().transpose();
    s.ymean = y.mean();
    const MatrixXd zc = Z.rowwise() - s.zmean.transpose();
    const VectorXd yc = y.array() - s.ymean;
    s.gram = zc.transpose() * zc;
    s.cross = zc.transpose() * yc;
    s.yy = yc.squaredNorm();
    return s;
}

GramSystem GramSystem::from_sums(const MatrixXd& zz, const VectorXd& zy, double yy,
                                 const VectorXd& z, double y, double n) {
    GramSystem s;
    s.n = n;
    s.zmean = z / n;
    s.ymean = y / n;
    s.gram = zz - n * s.zmean * s.zmean.transpose();
    s.cross = zy - n * s.ymean * s.zmean;
    s.yy = yy - n * s.ymean * s.ymean;
    return s;
}

ElasticNetFit elastic_net(const GramSystem& system, double lambda1, double lambda2,
                          std::span<const double> pf, const ElasticNetOptions& options,
                          const VectorXd* warm_start) {
    const Index k = system.gram.rows();
    check_penalties(pf, k, lambda1, lambda2);
    const MatrixXd& G = system.gram;

    ElasticNetFit fit;
    fit.beta = warm_start && warm_start->size() == k ? *warm_start : VectorXd::Zero(k);
    VectorXd g = system.cross - G * fit.beta;

    bool converged = false;
    double max_delta = 0.0;
    for (int sweep = 1; sweep <= options.max_sweeps; ++sweep) {
        max_delta = 0.0;
        for (Index j = 0; j < k; ++j) {
            const double pfj = pf[static_cast<std::size_t>(j)];
            const double denom = G(j, j) + lambda2 * pfj;
            const double old = fit.beta(j);
            double next = 0.0;
            if (denom > 0.0) {
                const double z = g(j) + G(j, j) * old;
                next = soft_threshold(z, 0.5 * lambda1 * pfj) / denom;
            }
            const double delta = next - old;
            if (delta != 0.0) {
                g.noalias() -= G.col(j) * delta;
                fit.beta(j) = next;
                max_delta = std::max(max_delta, std::abs(delta));
            }
        }
        fit.sweeps = sweep;
        if (max_delta < options.tolerance) {
            converged = true;
            break;
        }
    }
    if (!converged) {
        throw ConvergenceError("elastic net did not converge after " +
                               std::to_string(options.max_sweeps) +
                               " sweeps (last max change " + std::to_string(max_delta) +
                               ", lambda1 " + std::to_string(lambda1) + ", lambda2 " +
                               std::to_string(lambda2) + ")");
    }
    fit.intercept = system.ymean - system.zmean.dot(fit.beta);
    fit.kkt_residual = k > 0 ? kkt_violations(system, fit.beta, lambda1, lambda2, pf).maxCoeff() : 0.0;
    return fit;
}

ElasticNetFit elastic_net(const MatrixXd& Z, const VectorXd& y, double lambda1, double lambda2,
                          std::span<const double> pf, const ElasticNetOptions& options) {
    return elastic_net(GramSystem::from_data(Z, y), lambda1, lambda2, pf, options);
}

double elastic_net_objective(const MatrixXd& Z, const VectorXd& y, double intercept,
                             const VectorXd& beta, double lambda1, double lambda2,
                             std::span<const double> pf) {
    const VectorXd r = (y - Z * beta).array() - intercept;
    double pen = 0.0;
    for (Index j = 0; j < beta.size(); ++j) {
        const double f = pf[static_cast<std::size_t>(j)];
        pen += f * (lambda1 * std::abs(beta(j)) + lambda2 * beta(j) * beta(j));
    }
    return r.squaredNorm() + pen;
}

VectorXd kkt_violations(const GramSystem& system, const VectorXd& beta, double lambda1,
                        double lambda2, std::span<const double> pf) {
    const Index k = beta.size();
    const VectorXd grad = -2.0 * (system.cross - system.gram * beta);
    VectorXd v(k);
    for (Index j = 0; j < k; ++j) {
        const double f = pf[static_cast<std::size_t>(j)];
        const double smooth = grad(j) + 2.0 * lambda2 * f * beta(j);
        if (beta(j) != 0.0) {
            v(j) = std::abs(smooth + lambda1 * f * (beta(j) > 0.0 ? 1.0 : -1.0));
        } else {
            v(j) = std::max(0.0, std::abs(smooth) - lambda1 * f);
        }
    }
    return v / std::max(1.0, system.n);
}

double lambda1_max(const GramSystem& system, std::span<const double> pf) {
    const Index k = system.gram.rows();
    std::vector<Index> free_cols;
    for (Index j = 0; j < k; ++j)
        if (pf[static_cast<std::size_t>(j)] == 0.0 && system.gram(j, j) > 0.0) free_cols.push_back(j);

    VectorXd g = system.cross;
    if (!free_cols.empty()) {
        const auto u = static_cast<Index>(free_cols.size());
        MatrixXd guu(u, u);
        VectorXd cu(u);
        for (Index a = 0; a < u; ++a) {
            cu(a) = system.cross(free_cols[static_cast<std::size_t>(a)]);
            for (Index b = 0; b < u; ++b)
                guu(a, b) = system.gram(free_cols[static_cast<std::size_t>(a)],
                                        free_cols[static_cast<std::size_t>(b)]);
        }
        const VectorXd bu = guu.ldlt().solve(cu);
        for (Index a = 0; a < u; ++a) g -= system.gram.col(free_cols[static_cast<std::size_t>(a)]) * bu(a);
    }
    double lmax = 0.0;
    for (Index j = 0; j < k; ++j) {
        const double f = pf[static_cast<std::size_t>(j)];
        if (f > 0.0) lmax = std::max(lmax, 2.0 * std::abs(g(j)) / f);
    }
    return lmax;
}

std::vector<double> lambda1_path(double lambda_max, Index length, double ratio) {
    if (length < 1) throw DomainError("lambda path needs at least one point");
    std::vector<double> path(static_cast<std::size_t>(length));
    if (length == 1) {
        path[0] = lambda_max;
        return path;
    }
    const double step = std::log(ratio) / static_cast<double>(length - 1);
    for (Index i = 0; i < length; ++i)
        path[static_cast<std::size_t>(i)] = lambda_max * std::exp(step * static_cast<double>(i));
    return path;
}

std::vector<double> default_lambda2_grid() {
    std::vector<double> grid(100);
    const double lo = std::log(1e-4), hi = std::log(1e2);
    for (std::size_t i = 0; i < grid.size(); ++i)
        grid[i] = std::exp(lo + (hi - lo) * static_cast<double>(i) / 99.0);
    return grid;
}

CvResult cv_tune(const MatrixXd& Z, const VectorXd& y, std::span<const double> pf, SeededRng& rng,
                 const CvOptions& options) {
    const Index n = Z.rows();
    const Index k = Z.cols();
    if (n < 10) throw InsufficientDataError("cv_tune needs at least 10 rows");
    if (options.folds < 2 || options.folds > n) throw DomainError("invalid fold count");
    check_penalties(pf, k, 0.0, 0.0);
    if (options.lambda2_grid.empty()) throw DomainError("empty lambda2 grid");

    CvResult result;
    result.lambda2_grid = options.lambda2_grid;
    result.fold_of_row.assign(static_cast<std::size_t>(n), 0);
    const auto perm = rng.permutation(static_cast<std::size_t>(n));
    for (std::size_t i = 0; i < perm.size(); ++i)
        result.fold_of_row[perm[i]] = static_cast<int>(i % static_cast<std::size_t>(options.folds));

    const GramSystem full = GramSystem::from_data(Z, y);
    result.lambda1_grid = lambda1_path(lambda1_max(full, pf), options.path_length, options.path_ratio);

    // Raw sums per fold; the training system of fold f is total minus fold f.
    std::vector<FoldSums> folds(static_cast<std::size_t>(options.folds));
    for (auto& f : folds) {
        f.zz = MatrixXd::Zero(k, k);
        f.zy = VectorXd::Zero(k);
        f.z = VectorXd::Zero(k);
    }
    for (int f = 0; f < options.folds; ++f) {
        std::vector<Index> rows;
        for (Index i = 0; i < n; ++i)
            if (result.fold_of_row[static_cast<std::size_t>(i)] == f) rows.push_back(i);
        MatrixXd zf(static_cast<Index>(rows.size()), k);
        VectorXd yf(static_cast<Index>(rows.size()));
        for (std::size_t r = 0; r < rows.size(); ++r) {
            zf.row(static_cast<Index>(r)) = Z.row(rows[r]);
            yf(static_cast<Index>(r)) = y(rows[r]);
        }
        auto& s = folds[static_cast<std::size_t>(f)];
        s.zz = zf.transpose() * zf;
        s.zy = zf.transpose() * yf;
        s.yy = yf.squaredNorm();
        s.z = zf.colwise().sum().transpose();
        s.y = yf.sum();
        s.n = static_cast<double>(rows.size());
    }
    FoldSums total;
    total.zz = MatrixXd::Zero(k, k);
    total.zy = VectorXd::Zero(k);
    total.z = VectorXd::Zero(k);
    for (const auto& s : folds) {
        total.zz += s.zz;
        total.zy += s.zy;
        total.yy += s.yy;
        total.z += s.z;
        total.y += s.y;
        total.n += s.n;
    }
    std::vector<GramSystem> train;
    for (const auto& s : folds)
        train.push_back(GramSystem::from_sums(total.zz - s.zz, total.zy - s.zy, total.yy - s.yy,
                                              total.z - s.z, total.y - s.y, total.n - s.n));

    const std::size_t n2 = options.lambda2_grid.size();
    const std::size_t n1 = result.lambda1_grid.size();
    std::vector<std::vector<double>> cv(n2, std::vector<double>(n1, 0.0));
    parallel_for(n2, options.workers, [&](std::size_t i2) {
        const double l2 = options.lambda2_grid[i2];
        for (std::size_t f = 0; f < folds.size(); ++f) {
            VectorXd warm = VectorXd::Zero(k);
            for (std::size_t i1 = 0; i1 < n1; ++i1) {
                const auto fit = elastic_net(train[f], result.lambda1_grid[i1], l2, pf, options.solver, &warm);
                warm = fit.beta;
                cv[i2][i1] += validation_sse(folds[f], fit.intercept, fit.beta);
            }
        }
        for (auto& v : cv[i2]) v /= static_cast<double>(n);
    });

    result.cv_error = std::numeric_limits<double>::infinity();
    for (std::size_t i2 = 0; i2 < n2; ++i2) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t i1 = 0; i1 < n1; ++i1) {
            const double e = cv[i2][i1];
            if (e < best) best = e;
            if (e < result.cv_error) {
                result.cv_error = e;
                result.lambda1 = result.lambda1_grid[i1];
                result.lambda2 = options.lambda2_grid[i2];
            }
        }
        result.best_error_per_lambda2.push_back(best);
    }
    return result;
}

} // namespace mixmed
