#include "hypersde/quadrature.hpp"

namespace hypersde::quad {

std::vector<double> uniform_weights(int m) {
    if (m < 1) return {0.0};
    std::vector<double> w(static_cast<std::size_t>(m + 1), 0.0);
    if (m == 1) {
        w[0] = w[1] = 0.5;
        return w;
    }
    const int simpson_end = (m % 2 == 0) ? m : m - 3;
    for (int i = 0; i < simpson_end; i += 2) {
        w[static_cast<std::size_t>(i)] += 1.0 / 3.0;
        w[static_cast<std::size_t>(i + 1)] += 4.0 / 3.0;
        w[static_cast<std::size_t>(i + 2)] += 1.0 / 3.0;
    }
    if (simpson_end != m) {
        const auto s = static_cast<std::size_t>(simpson_end);
        w[s] += 3.0 / 8.0;
        w[s + 1] += 9.0 / 8.0;
        w[s + 2] += 9.0 / 8.0;
        w[s + 3] += 3.0 / 8.0;
    }
    return w;
}

namespace {

template <typename T>
std::vector<T> cumulative_impl(std::span<const T> f, double h) {
    const std::size_t n = f.size();
    std::vector<T> out(n);
    if (n == 0) return out;
    out[0] = T(0.0 * f[0]);
    if (n < 4) {
        for (std::size_t k = 1; k < n; ++k) out[k] = T(out[k - 1] + 0.5 * h * (f[k - 1] + f[k]));
        return out;
    }
    const double c = h / 24.0;
    for (std::size_t k = 0; k + 1 < n; ++k) {
        T piece;
        if (k == 0)
            piece = T(c * (9.0 * f[0] + 19.0 * f[1] - 5.0 * f[2] + f[3]));
        else if (k + 2 == n)
            piece = T(c * (f[k - 2] - 5.0 * f[k - 1] + 19.0 * f[k] + 9.0 * f[k + 1]));
        else
            piece = T(c * (-f[k - 1] + 13.0 * f[k] + 13.0 * f[k + 1] - f[k + 2]));
        out[k + 1] = T(out[k] + piece);
    }
    return out;
}

}  // namespace

std::vector<double> cumulative(std::span<const double> f, double h) {
    return cumulative_impl<double>(f, h);
}

std::vector<RowVec> cumulative(std::span<const RowVec> f, double h) {
    return cumulative_impl<RowVec>(f, h);
}

}  // namespace hypersde::quad
