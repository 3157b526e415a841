#include "hypersde/statistics.hpp"

#include <cmath>
#include <limits>

#include "hypersde/quadrature.hpp"
#include "hypersde/types.hpp"

namespace hypersde {

double MeanEstimate::z_score(double target) const {
    const double d = std::abs(mean - target);
    if (std_error > 0.0) return d / std_error;
    return d == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
}

MeanEstimate estimate_mean(std::span<const double> samples) {
    if (samples.empty()) throw InvalidArgument("estimate_mean: no samples");
    const double n = static_cast<double>(samples.size());
    double mean = 0.0;
    for (double s : samples) mean += s;
    mean /= n;
    MeanEstimate e;
    e.mean = mean;
    if (samples.size() > 1) e.std_error = std::sqrt(sample_variance(samples) / n);
    return e;
}

double sample_variance(std::span<const double> samples) {
    if (samples.size() < 2) return 0.0;
    double mean = 0.0, m2 = 0.0;
    std::size_t k = 0;
    for (double s : samples) {
        ++k;
        const double d = s - mean;
        mean += d / static_cast<double>(k);
        m2 += d * (s - mean);
    }
    return m2 / static_cast<double>(samples.size() - 1);
}

LinearFit fit_line(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 3) throw InvalidArgument("fit_line: need >= 3 points");
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (!(sxx > 0.0)) throw InvalidArgument("fit_line: degenerate abscissae");
    LinearFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    double sse = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double r = y[i] - f.intercept - f.slope * x[i];
        sse += r * r;
    }
    f.slope_std_error = std::sqrt(sse / (n - 2.0) / sxx);
    return f;
}

IsometryEstimate ito_isometry_check(const ScalarFunction& f1, const ScalarFunction& f2,
                                    std::span<const BrownianPath> paths, double t) {
    if (paths.empty()) throw InvalidArgument("isometry: empty ensemble");
    const double dt = paths.front().dt();
    const int steps = static_cast<int>(std::llround(t / dt));
    std::vector<double> a(static_cast<std::size_t>(steps)), b(a.size());
    for (int k = 0; k < steps; ++k) {
        a[static_cast<std::size_t>(k)] = f1(k * dt);
        b[static_cast<std::size_t>(k)] = f2(k * dt);
    }
    std::vector<double> products;
    products.reserve(paths.size());
    for (const auto& p : paths) {
        if (p.dt() != dt || p.steps() < steps)
            throw InvalidArgument("isometry: paths must share dt and cover t");
        double i1 = 0.0, i2 = 0.0;
        for (int k = 0; k < steps; ++k) {
            const double dw = p.increment(k);
            i1 += a[static_cast<std::size_t>(k)] * dw;
            i2 += b[static_cast<std::size_t>(k)] * dw;
        }
        products.push_back(i1 * i2);
    }
    const auto est = estimate_mean(products);
    IsometryEstimate out;
    out.estimate = est.mean;
    out.std_error = est.std_error;
    out.reference = quad::simpson([&](double s) { return f1(s) * f2(s); }, 0.0, t, 2048);
    return out;
}

}  // namespace hypersde
