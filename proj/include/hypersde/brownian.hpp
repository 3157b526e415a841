#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace hypersde {

/// One sample path of a scalar Wiener process on a uniform time grid.
/// increments[k] = W(t_{k+1}) - W(t_k); cumulative[k] = W(t_k).
class BrownianPath {
public:
    BrownianPath() = default;
    BrownianPath(std::uint64_t seed, double dt, std::vector<double> increments);

    std::uint64_t seed() const { return seed_; }
    double dt() const { return dt_; }
    int steps() const { return static_cast<int>(increments_.size()); }
    const std::vector<double>& increments() const { return increments_; }
    const std::vector<double>& cumulative() const { return cumulative_; }
    double increment(int k) const { return increments_[static_cast<std::size_t>(k)]; }

    /// Increments strictly before step k: everything F_{t_k}-measurable.
    std::span<const double> history(int k) const {
        return {increments_.data(), static_cast<std::size_t>(k)};
    }

    /// Keeps increments [0, from) of *this and takes [from, steps) from `tail`.
    BrownianPath spliced(const BrownianPath& tail, int from) const;

private:
    std::uint64_t seed_ = 0;
    double dt_ = 0.0;
    std::vector<double> increments_;
    std::vector<double> cumulative_;
};

/// Counter-based standard normal stream keyed by a 64-bit seed. normal(i) is
/// a pure function of (seed, i).
class NormalStream {
public:
    explicit NormalStream(std::uint64_t seed);
    double normal(std::uint64_t index) const;
    /// Uniform on (0, 1], a pure function of (seed, index).
    double uniform(std::uint64_t index) const;

private:
    std::uint64_t key_;
};

/// Draws nt independent N(0, dt) increments from the stream keyed by `seed`.
BrownianPath sample_brownian(std::uint64_t seed, int nt, double dt);

/// Seed of the index-th path of an ensemble.
inline std::uint64_t path_seed(std::uint64_t base_seed, std::uint64_t index) {
    return base_seed ^ index;
}

}  // namespace hypersde
