#pragma once

#include <cstddef>
#include <span>
#include <type_traits>
#include <vector>

#include "hypersde/types.hpp"

namespace hypersde::quad {

/// Composite Simpson rule on [a, b] with `panels` subintervals (rounded up to
/// even). Works for any value type with + and scalar *, e.g. double, Vec, Mat.
template <typename F>
auto simpson(F&& f, double a, double b, int panels) {
    if (panels < 2) panels = 2;
    if (panels % 2 != 0) ++panels;
    const double h = (b - a) / panels;
    using R = std::decay_t<decltype(f(a))>;
    R sum = f(a) + f(b);
    for (int i = 1; i < panels; ++i) {
        const double w = (i % 2 == 1) ? 4.0 : 2.0;
        sum += w * f(a + i * h);
    }
    return R((h / 3.0) * sum);
}

/// Weights of a fourth-order rule for m uniform intervals (m + 1 samples):
/// composite Simpson, with a 3/8 block at the end when m is odd. m = 1 falls
/// back to the trapezoid.
std::vector<double> uniform_weights(int intervals);

/// Integral of uniformly spaced samples with the weights above.
template <typename T>
T integrate_uniform(std::span<const T> samples, double h) {
    const int m = static_cast<int>(samples.size()) - 1;
    if (m <= 0) return T(0.0 * samples[0]);
    const auto w = uniform_weights(m);
    T sum = w[0] * samples[0];
    for (int i = 1; i <= m; ++i) sum = sum + w[static_cast<std::size_t>(i)] * samples[static_cast<std::size_t>(i)];
    return T(h * sum);
}

/// Running integral F_i = int_{x_0}^{x_i} f of uniform samples. Interior
/// intervals use the four-point cubic rule h/24 (-f_{k-1} + 13 f_k + 13 f_{k+1}
/// - f_{k+2}); the end intervals use the one-sided cubic variant. Fewer than
/// four samples falls back to the trapezoid.
std::vector<double> cumulative(std::span<const double> f, double h);
std::vector<RowVec> cumulative(std::span<const RowVec> f, double h);

}  // namespace hypersde::quad
