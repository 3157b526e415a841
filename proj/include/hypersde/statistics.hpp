#pragma once

#include <functional>
#include <span>
#include <vector>

#include "hypersde/brownian.hpp"

namespace hypersde {

struct MeanEstimate {
    double mean = 0.0;
    double std_error = 0.0;
    /// |mean - target| / std_error, infinite when std_error is zero and the
    /// difference is not.
    double z_score(double target = 0.0) const;
};

MeanEstimate estimate_mean(std::span<const double> samples);

/// Unbiased sample variance.
double sample_variance(std::span<const double> samples);

/// Ordinary least squares y = intercept + slope * x with the textbook
/// standard error of the slope.
struct LinearFit {
    double intercept = 0.0;
    double slope = 0.0;
    double slope_std_error = 0.0;
};
LinearFit fit_line(std::span<const double> x, std::span<const double> y);

using ScalarFunction = std::function<double(double)>;

struct IsometryEstimate {
    double estimate = 0.0;   // Monte Carlo mean of I1 * I2
    double reference = 0.0;  // deterministic int_0^t f1 f2 ds
    double std_error = 0.0;
};

/// Monte Carlo check of E[(int f1 dW)(int f2 dW)] = int f1 f2 ds on [0, t]
/// with left-point Ito sums over each path's grid. All paths must share dt
/// and cover t.
IsometryEstimate ito_isometry_check(const ScalarFunction& f1, const ScalarFunction& f2,
                                    std::span<const BrownianPath> paths, double t);

}  // namespace hypersde
