#include <algorithm>
#include <cmath>
#include <limits>

#include "mixmed/bkmr.hpp"
#include "mixmed/error.hpp"

namespace mixmed {

std::vector<int> cluster_groups(const MatrixXd& corr, Index k) {
    const Index p = corr.rows();
    if (p < 1 || corr.cols() != p) throw DomainError("correlation matrix must be square and nonempty");
    if (k < 1 || k > p) throw DomainError("group count must lie in [1, p]");
    if (!corr.allFinite()) throw DomainError("correlation matrix has non-finite entries");
    for (Index i = 0; i < p; ++i) {
        if (std::abs(corr(i, i) - 1.0) > 1e-8) throw DomainError("correlation matrix needs a unit diagonal");
        for (Index j = 0; j < i; ++j) {
            if (std::abs(corr(i, j) - corr(j, i)) > 1e-8) throw DomainError("correlation matrix is not symmetric");
            if (std::abs(corr(i, j)) > 1.0 + 1e-8) throw DomainError("correlation outside [-1, 1]");
        }
    }

    // Cluster members and the complete-linkage distance between live clusters.
    std::vector<std::vector<Index>> clusters(static_cast<std::size_t>(p));
    for (Index i = 0; i < p; ++i) clusters[static_cast<std::size_t>(i)] = {i};
    MatrixXd dist = 1.0 - corr.array();
    std::vector<bool> live(static_cast<std::size_t>(p), true);

    for (Index remaining = p; remaining > k; --remaining) {
        double best = std::numeric_limits<double>::infinity();
        Index ba = -1, bb = -1;
        for (Index a = 0; a < p; ++a) {
            if (!live[static_cast<std::size_t>(a)]) continue;
            for (Index b = a + 1; b < p; ++b) {
                if (!live[static_cast<std::size_t>(b)]) continue;
                if (dist(a, b) < best) {
                    best = dist(a, b);
                    ba = a;
                    bb = b;
                }
            }
        }
        auto& into = clusters[static_cast<std::size_t>(ba)];
        auto& from = clusters[static_cast<std::size_t>(bb)];
        into.insert(into.end(), from.begin(), from.end());
        from.clear();
        live[static_cast<std::size_t>(bb)] = false;
        for (Index c = 0; c < p; ++c) {
            const double d = std::max(dist(ba, c), dist(bb, c));
            dist(ba, c) = d;
            dist(c, ba) = d;
        }
    }

    std::vector<int> cluster_of(static_cast<std::size_t>(p), -1);
    for (Index c = 0; c < p; ++c)
        for (Index m : clusters[static_cast<std::size_t>(c)]) cluster_of[static_cast<std::size_t>(m)] = static_cast<int>(c);
    std::vector<int> relabel(static_cast<std::size_t>(p), -1);
    std::vector<int> labels(static_cast<std::size_t>(p));
    int next = 0;
    for (Index i = 0; i < p; ++i) {
        int& r = relabel[static_cast<std::size_t>(cluster_of[static_cast<std::size_t>(i)])];
        if (r < 0) r = next++;
        labels[static_cast<std::size_t>(i)] = r;
    }
    return labels;
}

} // namespace mixmed
