#pragma once

#include <vector>

#include "hypersde/types.hpp"

namespace hypersde {

/// Vector-valued function of one real variable: either a constant or a
/// table of (abscissa, value) rows with linear interpolation and constant
/// extrapolation beyond the first/last row.
class Profile {
public:
    Profile() : Profile(constant(0.0)) {}

    static Profile constant(double value);
    static Profile constant(const Vec& value);
    /// Rows must have strictly increasing abscissae and a common dimension.
    static Profile table(std::vector<double> abscissae, std::vector<Vec> values);

    int dim() const { return static_cast<int>(dim_); }
    bool is_constant() const { return xs_.empty(); }

    /// Scalar evaluation; requires dim() == 1.
    double operator()(double x) const;
    Vec vec(double x) const;

    const std::vector<double>& abscissae() const { return xs_; }
    const std::vector<Vec>& values() const { return values_; }
    const Vec& constant_value() const { return values_.front(); }

    /// Largest absolute component over the table (or the constant).
    double sup_norm() const;

    friend bool operator==(const Profile& a, const Profile& b);

private:
    Profile(std::vector<double> xs, std::vector<Vec> values, long dim)
        : xs_(std::move(xs)), values_(std::move(values)), dim_(dim) {}

    std::vector<double> xs_;
    std::vector<Vec> values_;
    long dim_;
};

}  // namespace hypersde
