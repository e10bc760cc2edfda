#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace mixmed {

/// Reproducible random stream identified by (seed, stream id).
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the
/// standard. Variates are produced by the methods below rather than the
/// <random> distributions, whose algorithms are implementation-defined, so a
/// given (seed, stream) yields the same draws on every platform.
class SeededRng {
public:
    explicit SeededRng(std::uint64_t seed, std::uint64_t stream = 0);

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t stream() const noexcept { return stream_; }

    /// Child stream keyed by `id`. Depends only on (seed, stream, id), never on
    /// how many draws this stream has already produced.
    SeededRng substream(std::uint64_t id) const;

    std::uint64_t next_u64() { return engine_(); }
    double uniform();        // [0, 1)
    double uniform_open();   // (0, 1)
    double normal();
    double normal(double mean, double sd) { return mean + sd * normal(); }
    double gamma(double shape, double rate);
    bool bernoulli(double p) { return uniform() < p; }
    std::size_t below(std::size_t n);  // uniform on {0, ..., n-1}

    /// Uniformly random permutation of 0..n-1 (Fisher-Yates).
    std::vector<std::size_t> permutation(std::size_t n);

private:
    std::uint64_t seed_;
    std::uint64_t stream_;
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x) noexcept;

} // namespace mixmed
