#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

#include "hypersde/profile.hpp"

namespace hypersde::detail {

// Flat n x n blocks, column-major, one per lag.
inline std::vector<double> flatten(const std::vector<Mat>& blocks) {
    std::vector<double> out;
    for (const auto& b : blocks) out.insert(out.end(), b.data(), b.data() + b.size());
    return out;
}

// out += sum_{j=first}^{last} block(j) z_{k-j}, z stored as n doubles per step.
inline void lag_sum(const double* blocks, int n, const std::vector<double>& z, int k, int first,
                    int last, double* out) {
    const std::size_t nn = static_cast<std::size_t>(n) * static_cast<std::size_t>(n);
    for (int j = first; j <= last; ++j) {
        const double* m = blocks + static_cast<std::size_t>(j) * nn;
        const double* zz = z.data() + static_cast<std::size_t>(k - j) * static_cast<std::size_t>(n);
        if (n == 1) {
            out[0] += m[0] * zz[0];
            continue;
        }
        for (int c = 0; c < n; ++c)
            for (int r = 0; r < n; ++r) out[r] += m[static_cast<std::size_t>(c * n + r)] * zz[c];
    }
}

// Running record of sigma(t_j) dW_j, appended as increments become visible.
class NoiseRecord {
public:
    NoiseRecord(const Profile& sigma, double dt, int n) : sigma_(sigma), dt_(dt), n_(n) {}

    void catch_up(const double* increments, int count) {
        while (steps_ < count) {
            const Vec s = sigma_.is_constant() ? sigma_.constant_value() : sigma_.vec(steps_ * dt_);
            for (int r = 0; r < n_; ++r) z_.push_back(s(r) * increments[steps_]);
            ++steps_;
        }
    }
    const std::vector<double>& z() const { return z_; }
    int steps() const { return steps_; }

private:
    Profile sigma_;
    double dt_;
    int n_;
    int steps_ = 0;
    std::vector<double> z_;
};

}  // namespace hypersde::detail
