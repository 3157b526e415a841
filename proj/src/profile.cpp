#include "hypersde/profile.hpp"

#include <algorithm>
#include <cmath>

namespace hypersde {

Profile Profile::constant(double value) {
    Vec v(1);
    v(0) = value;
    return constant(v);
}

Profile Profile::constant(const Vec& value) {
    if (value.size() == 0) throw InvalidArgument("profile: empty constant");
    return Profile({}, {value}, value.size());
}

Profile Profile::table(std::vector<double> abscissae, std::vector<Vec> values) {
    if (abscissae.empty() || abscissae.size() != values.size())
        throw InvalidArgument("profile: table needs matching, nonempty abscissae and values");
    const long dim = values.front().size();
    if (dim == 0) throw InvalidArgument("profile: empty table row");
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (values[i].size() != dim) throw InvalidArgument("profile: ragged table");
        if (!values[i].allFinite() || !std::isfinite(abscissae[i]))
            throw InvalidArgument("profile: non-finite table entry");
        if (i > 0 && !(abscissae[i] > abscissae[i - 1]))
            throw InvalidArgument("profile: abscissae must be strictly increasing");
    }
    return Profile(std::move(abscissae), std::move(values), dim);
}

Vec Profile::vec(double x) const {
    if (xs_.empty()) return values_.front();
    if (x <= xs_.front()) return values_.front();
    if (x >= xs_.back()) return values_.back();
    const auto it = std::upper_bound(xs_.begin(), xs_.end(), x);
    const auto hi = static_cast<std::size_t>(it - xs_.begin());
    const std::size_t lo = hi - 1;
    const double w = (x - xs_[lo]) / (xs_[hi] - xs_[lo]);
    return (1.0 - w) * values_[lo] + w * values_[hi];
}

double Profile::operator()(double x) const {
    if (dim_ != 1) throw InvalidArgument("profile: scalar evaluation of a vector profile");
    if (xs_.empty()) return values_.front()(0);
    return vec(x)(0);
}

double Profile::sup_norm() const {
    double m = 0.0;
    for (const auto& v : values_) m = std::max(m, v.cwiseAbs().maxCoeff());
    return m;
}

bool operator==(const Profile& a, const Profile& b) {
    if (a.dim_ != b.dim_ || a.xs_ != b.xs_ || a.values_.size() != b.values_.size()) return false;
    for (std::size_t i = 0; i < a.values_.size(); ++i)
        if (a.values_[i] != b.values_[i]) return false;
    return true;
}

}  // namespace hypersde
