#include "hypersde/brownian.hpp"

#include <cmath>
#include <numbers>

#include "hypersde/types.hpp"

namespace hypersde {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::vector<double> running_sum(const std::vector<double>& inc) {
    std::vector<double> c(inc.size() + 1, 0.0);
    for (std::size_t k = 0; k < inc.size(); ++k) c[k + 1] = c[k] + inc[k];
    return c;
}

// increments re-read from the cumulative sums, so that the stored pair
// satisfies cumulative[k+1] - cumulative[k] == increments[k] bit for bit
std::vector<double> differences(const std::vector<double>& c) {
    std::vector<double> inc(c.size() - 1);
    for (std::size_t k = 0; k + 1 < c.size(); ++k) inc[k] = c[k + 1] - c[k];
    return inc;
}

}  // namespace

BrownianPath::BrownianPath(std::uint64_t seed, double dt, std::vector<double> increments)
    : seed_(seed), dt_(dt) {
    if (!(dt > 0.0)) throw InvalidArgument("brownian: dt must be positive");
    cumulative_ = running_sum(increments);
    increments_ = differences(cumulative_);
}

BrownianPath BrownianPath::spliced(const BrownianPath& tail, int from) const {
    if (tail.steps() != steps() || from < 0 || from > steps())
        throw InvalidArgument("brownian: incompatible splice");
    BrownianPath out = *this;
    for (int k = from; k < steps(); ++k) {
        const auto i = static_cast<std::size_t>(k);
        out.cumulative_[i + 1] = out.cumulative_[i] + tail.increments_[i];
        out.increments_[i] = out.cumulative_[i + 1] - out.cumulative_[i];
    }
    return out;
}

NormalStream::NormalStream(std::uint64_t seed) : key_(splitmix64(seed ^ 0x5deece66dULL)) {}

double NormalStream::uniform(std::uint64_t index) const {
    const std::uint64_t bits = splitmix64(key_ + splitmix64(index));
    return (static_cast<double>(bits >> 11) + 1.0) * 0x1.0p-53;
}

double NormalStream::normal(std::uint64_t index) const {
    const double u1 = uniform(2 * index);
    const double u2 = uniform(2 * index + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

BrownianPath sample_brownian(std::uint64_t seed, int nt, double dt) {
    if (nt < 1) throw InvalidArgument("brownian: nt must be positive");
    if (!(dt > 0.0)) throw InvalidArgument("brownian: dt must be positive");
    const NormalStream stream(seed);
    const double s = std::sqrt(dt);
    std::vector<double> inc(static_cast<std::size_t>(nt));
    for (int k = 0; k < nt; ++k) inc[static_cast<std::size_t>(k)] = s * stream.normal(static_cast<std::uint64_t>(k));
    return BrownianPath(seed, dt, std::move(inc));
}

}  // namespace hypersde
