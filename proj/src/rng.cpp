#include "mixmed/rng.hpp"

#include <cmath>
#include <numeric>

#include "mixmed/error.hpp"

namespace mixmed {

std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

SeededRng::SeededRng(std::uint64_t seed, std::uint64_t stream)
    : seed_(seed), stream_(stream),
      engine_(splitmix64(seed) ^ splitmix64(stream ^ 0x5bd1e9955bd1e995ULL)) {}

SeededRng SeededRng::substream(std::uint64_t id) const {
    return SeededRng(seed_, splitmix64(stream_ * 0x100000001b3ULL + splitmix64(id)));
}

double SeededRng::uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double SeededRng::uniform_open() {
    return (static_cast<double>(engine_() >> 12) + 0.5) * 0x1.0p-52;
}

double SeededRng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    // Marsaglia polar method.
    double u, v, s;
    do {
        u = 2.0 * uniform() - 1.0;
        v = 2.0 * uniform() - 1.0;
        s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    has_spare_ = true;
    return u * f;
}

double SeededRng::gamma(double shape, double rate) {
    if (!(shape > 0.0) || !(rate > 0.0)) {
        throw DomainError("gamma: shape and rate must be positive");
    }
    if (shape < 1.0) {
        // Boost to shape + 1 and rescale by U^(1/shape).
        const double g = gamma(shape + 1.0, 1.0);
        return g * std::pow(uniform_open(), 1.0 / shape) / rate;
    }
    // Marsaglia-Tsang.
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x, v;
        do {
            x = normal();
            v = 1.0 + c * x;
        } while (v <= 0.0);
        v = v * v * v;
        const double u = uniform_open();
        if (u < 1.0 - 0.0331 * x * x * x * x) return d * v / rate;
        if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v / rate;
    }
}

std::size_t SeededRng::below(std::size_t n) {
    if (n == 0) throw DomainError("below: empty range");
    // Lemire-style rejection keeps the result unbiased.
    const std::uint64_t bound = n;
    const std::uint64_t limit = (~std::uint64_t{0}) - ((~std::uint64_t{0}) % bound);
    std::uint64_t x;
    do {
        x = engine_();
    } while (x >= limit);
    return static_cast<std::size_t>(x % bound);
}

std::vector<std::size_t> SeededRng::permutation(std::size_t n) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = n; i > 1; --i) {
        std::swap(idx[i - 1], idx[below(i)]);
    }
    return idx;
}

} // namespace mixmed
