#include "hypersde/params.hpp"

#include <cmath>

namespace hypersde {

namespace {

bool same(const Mat& a, const Mat& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() && a == b;
}

}  // namespace

void SystemParams::validate() const {
    const auto fail = [](const char* what) { throw InvalidArgument(std::string("params: ") + what); };
    if (!(lambda > 0.0) || !std::isfinite(lambda)) fail("lambda must be positive");
    if (!(mu > 0.0) || !std::isfinite(mu)) fail("mu must be positive");
    if (q == 0.0 || !std::isfinite(q)) fail("q must be nonzero");
    if (!std::isfinite(rho) || !(std::abs(rho * q) < 1.0)) fail("|rho q| must be below 1");
    if (!(T > 1.0 / mu) || !std::isfinite(T)) fail("T must exceed the delay 1/mu");
    const long n = A.rows();
    if (n < 1 || A.cols() != n) fail("A must be square and nonempty");
    if (B.size() != n) fail("B must have n rows");
    if (M.size() != n) fail("M must have n columns");
    if (X0.size() != n) fail("X0 must have n entries");
    if (sigma.dim() != n) fail("sigma must be n-dimensional");
    if (eta_plus.dim() != 1 || eta_minus.dim() != 1) fail("eta profiles must be scalar");
    if (u0.dim() != 1 || v0.dim() != 1) fail("initial profiles must be scalar");
    if (!A.allFinite() || !B.allFinite() || !M.allFinite() || !X0.allFinite())
        fail("non-finite matrix entry");
}

bool operator==(const SystemParams& a, const SystemParams& b) {
    return a.lambda == b.lambda && a.mu == b.mu && a.eta_plus == b.eta_plus &&
           a.eta_minus == b.eta_minus && a.q == b.q && a.rho == b.rho && same(a.A, b.A) &&
           same(a.B, b.B) && same(a.M, b.M) && a.sigma == b.sigma && same(a.X0, b.X0) &&
           a.u0 == b.u0 && a.v0 == b.v0 && a.T == b.T;
}

SystemParams fig1_params() {
    SystemParams p;
    p.lambda = 1.0;
    p.mu = 2.0;
    p.eta_plus = Profile::constant(0.3);
    p.eta_minus = Profile::constant(0.3);
    p.q = 0.25;
    p.rho = 1.0;
    p.A = Mat::Constant(1, 1, 0.6);
    p.B = Vec::Constant(1, 1.0);
    p.M = RowVec::Constant(1, 1.0);
    p.sigma = Profile::constant(0.6);
    p.X0 = Vec::Constant(1, 2.0);
    p.u0 = Profile::constant(0.0);
    p.v0 = Profile::constant(0.0);
    p.T = 4.0;
    return p;
}

SystemParams decoupled_params() {
    SystemParams p = fig1_params();
    p.eta_plus = Profile::constant(0.0);
    p.eta_minus = Profile::constant(0.0);
    p.M = RowVec::Zero(1);
    return p;
}

}  // namespace hypersde
