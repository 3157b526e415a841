#include "hypersde/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <boost/math/interpolators/cardinal_cubic_b_spline.hpp>

#include "hypersde/quadrature.hpp"

namespace hypersde {

std::string_view to_string(KernelName name) {
    switch (name) {
        case KernelName::uu: return "K_uu";
        case KernelName::uv: return "K_uv";
        case KernelName::vu: return "K_vu";
        case KernelName::vv: return "K_vv";
    }
    return "?";
}

TriangleField::TriangleField(int nx)
    : nx_(nx), data_(static_cast<std::size_t>(nx + 1) * static_cast<std::size_t>(nx + 2) / 2, 0.0) {
    if (nx < 1) throw InvalidArgument("triangle field: nx must be positive");
}

double TriangleField::eval(double x, double y) const {
    constexpr double slack = 1e-12;
    if (!(y >= -slack) || !(x <= 1.0 + slack) || !(y <= x + slack))
        throw InvalidArgument("kernel evaluation outside the triangle 0 <= y <= x <= 1");
    x = std::clamp(x, 0.0, 1.0);
    y = std::clamp(y, 0.0, x);
    const double sx = x * nx_;
    const double sy = y * nx_;
    int i = std::min(static_cast<int>(std::floor(sx)), nx_ - 1);
    int j = std::min(static_cast<int>(std::floor(sy)), i);
    const double a = sx - i;
    const double b = sy - j;
    if (j < i) {
        return (1 - a) * (1 - b) * at(i, j) + a * (1 - b) * at(i + 1, j) + (1 - a) * b * at(i, j + 1) +
               a * b * at(i + 1, j + 1);
    }
    // half cell with vertices (i,i), (i+1,i), (i+1,i+1); here b <= a
    return (1 - a) * at(i, i) + (a - b) * at(i + 1, i) + b * at(i + 1, i + 1);
}

double TriangleField::sup_norm() const {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::abs(v));
    return m;
}

struct KernelSet::Splines {
    using Spline = boost::math::interpolators::cardinal_cubic_b_spline<double>;
    std::vector<Spline> alpha, beta;
};

KernelSet::KernelSet(int nx, int n)
    : nx_(nx),
      n_(n),
      uu_(nx),
      uv_(nx),
      vu_(nx),
      vv_(nx),
      gamma_alpha_(static_cast<std::size_t>(nx + 1), RowVec::Zero(n)),
      gamma_beta_(static_cast<std::size_t>(nx + 1), RowVec::Zero(n)) {
    if (nx < 2) throw InvalidArgument("kernels: nx must be at least 2");
    if (n < 1) throw InvalidArgument("kernels: n must be positive");
}

TriangleField& KernelSet::field(KernelName name) {
    switch (name) {
        case KernelName::uu: return uu_;
        case KernelName::uv: return uv_;
        case KernelName::vu: return vu_;
        case KernelName::vv: return vv_;
    }
    return uu_;
}

const TriangleField& KernelSet::field(KernelName name) const {
    return const_cast<KernelSet*>(this)->field(name);
}

namespace {

RowVec linear_nodes(const std::vector<RowVec>& nodes, double x) {
    const int nx = static_cast<int>(nodes.size()) - 1;
    const double s = std::clamp(x, 0.0, 1.0) * nx;
    const int i = std::min(static_cast<int>(std::floor(s)), nx - 1);
    const double a = s - i;
    return (1 - a) * nodes[static_cast<std::size_t>(i)] + a * nodes[static_cast<std::size_t>(i + 1)];
}

void check_unit(double x) {
    if (!(x >= -1e-12 && x <= 1.0 + 1e-12))
        throw InvalidArgument("gamma evaluation outside [0, 1]");
}

// lattice index when x sits exactly on a node, else -1
int node_index(double x, int nx) {
    const double s = x * nx;
    const double r = std::round(s);
    return s == r ? static_cast<int>(r) : -1;
}

}  // namespace

RowVec KernelSet::gamma_alpha(double x) const {
    check_unit(x);
    x = std::clamp(x, 0.0, 1.0);
    if (!splines_) return linear_nodes(gamma_alpha_, x);
    if (const int i = node_index(x, nx_); i >= 0) return gamma_alpha_[static_cast<std::size_t>(i)];
    RowVec r(n_);
    for (int c = 0; c < n_; ++c) r(c) = splines_->alpha[static_cast<std::size_t>(c)](x);
    return r;
}

RowVec KernelSet::gamma_beta(double x) const {
    check_unit(x);
    x = std::clamp(x, 0.0, 1.0);
    if (!splines_) return linear_nodes(gamma_beta_, x);
    if (const int i = node_index(x, nx_); i >= 0) return gamma_beta_[static_cast<std::size_t>(i)];
    RowVec r(n_);
    for (int c = 0; c < n_; ++c) r(c) = splines_->beta[static_cast<std::size_t>(c)](x);
    return r;
}

RowVec KernelSet::gamma_beta_prime(double x) const {
    check_unit(x);
    x = std::clamp(x, 0.0, 1.0);
    if (!splines_) throw InvalidArgument("kernels: gamma_beta_prime needs finalize()");
    RowVec r(n_);
    for (int c = 0; c < n_; ++c) r(c) = splines_->beta[static_cast<std::size_t>(c)].prime(x);
    return r;
}

void KernelSet::finalize(const SystemParams& params) {
    const double dx = 1.0 / nx_;
    const auto edge = [&](int i) { return static_cast<std::size_t>(i); };
    // end slopes straight from the gamma equations
    const auto alpha_slope = [&](int i) -> RowVec {
        return -(gamma_alpha_[edge(i)] * params.A + params.lambda * uu_.at(i, 0) * params.M) /
               params.lambda;
    };
    const auto beta_slope = [&](int i) -> RowVec {
        return (gamma_beta_[edge(i)] * params.A + params.lambda * vu_.at(i, 0) * params.M) /
               params.mu;
    };
    auto s = std::make_shared<Splines>();
    const RowVec a0 = alpha_slope(0), a1 = alpha_slope(nx_);
    const RowVec b0 = beta_slope(0), b1 = beta_slope(nx_);
    std::vector<double> col(static_cast<std::size_t>(nx_ + 1));
    for (int c = 0; c < n_; ++c) {
        for (int i = 0; i <= nx_; ++i) col[edge(i)] = gamma_alpha_[edge(i)](c);
        s->alpha.emplace_back(col.data(), col.size(), 0.0, dx, a0(c), a1(c));
        for (int i = 0; i <= nx_; ++i) col[edge(i)] = gamma_beta_[edge(i)](c);
        s->beta.emplace_back(col.data(), col.size(), 0.0, dx, b0(c), b1(c));
    }
    splines_ = std::move(s);
}

KernelSet zero_kernels(int nx, int n) { return KernelSet(nx, n); }

namespace {

double field_change(const TriangleField& a, const TriangleField& b) {
    double m = 0.0;
    for (std::size_t k = 0; k < a.data().size(); ++k)
        m = std::max(m, std::abs(a.data()[k] - b.data()[k]));
    return m;
}

double gamma_change(const std::vector<RowVec>& a, const std::vector<RowVec>& b) {
    double m = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, (a[k] - b[k]).cwiseAbs().maxCoeff());
    return m;
}

bool all_finite(const KernelSet& ks) {
    for (auto name : {KernelName::uu, KernelName::uv, KernelName::vu, KernelName::vv})
        for (double v : ks.field(name).data())
            if (!std::isfinite(v)) return false;
    for (const auto& g : ks.gamma_alpha_nodes())
        if (!g.allFinite()) return false;
    for (const auto& g : ks.gamma_beta_nodes())
        if (!g.allFinite()) return false;
    return true;
}

}  // namespace

KernelSet kernel_picard_sweep(const SystemParams& params, const RowVec& gamma_beta_0,
                              const KernelSet& prev) {
    const int nx = prev.nx();
    const int n = prev.n();
    const double dx = 1.0 / nx;
    const double lam = params.lambda;
    const double mu = params.mu;
    const double q = params.q;
    const auto idx = [](int i) { return static_cast<std::size_t>(i); };

    std::vector<double> eta_p(idx(nx + 1)), eta_m(idx(nx + 1));
    for (int i = 0; i <= nx; ++i) {
        eta_p[idx(i)] = params.eta_plus(i * dx);
        eta_m[idx(i)] = params.eta_minus(i * dx);
    }

    KernelSet next(nx, n);
    const TriangleField& uu0 = prev.field(KernelName::uu);
    const TriangleField& uv0 = prev.field(KernelName::uv);
    const TriangleField& vu0 = prev.field(KernelName::vu);
    const TriangleField& vv0 = prev.field(KernelName::vv);

    // gamma equations integrated along x with the previous iterate on the right
    {
        std::vector<RowVec> fa(idx(nx + 1)), fb(idx(nx + 1));
        for (int i = 0; i <= nx; ++i) {
            fa[idx(i)] = -(prev.gamma_alpha_nodes()[idx(i)] * params.A +
                           lam * uu0.at(i, 0) * params.M) / lam;
            fb[idx(i)] = (prev.gamma_beta_nodes()[idx(i)] * params.A +
                          lam * vu0.at(i, 0) * params.M) / mu;
        }
        const auto ia = quad::cumulative(std::span<const RowVec>(fa), dx);
        const auto ib = quad::cumulative(std::span<const RowVec>(fb), dx);
        const RowVec alpha0 = q * gamma_beta_0 - params.M;
        for (int i = 0; i <= nx; ++i) {
            next.gamma_alpha_nodes()[idx(i)] = i == 0 ? alpha0 : RowVec(alpha0 + ia[idx(i)]);
            next.gamma_beta_nodes()[idx(i)] = i == 0 ? gamma_beta_0 : RowVec(gamma_beta_0 + ib[idx(i)]);
        }
    }

    // K_uv and K_vu from their diagonal data along the slanted characteristics
    TriangleField& uv = next.field(KernelName::uv);
    TriangleField& vu = next.field(KernelName::vu);
    for (int i = 0; i <= nx; ++i) {
        for (int j = 0; j <= i; ++j) {
            const double x = i * dx, y = j * dx;
            const double tau = (x - y) / (lam + mu);
            const double xi = (mu * x + lam * y) / (lam + mu);
            const double xi2 = (lam * x + mu * y) / (lam + mu);
            double iuv = 0.0, ivu = 0.0;
            if (i > j) {
                const int m = i - j;
                const double hs = tau / m;
                for (int s = 0; s <= m; ++s) {
                    const double w = (s == 0 || s == m) ? 0.5 : 1.0;
                    const double t = s * hs;
                    const double ya = std::max(0.0, xi - mu * t);
                    const double yb = std::max(0.0, xi2 - lam * t);
                    iuv += w * uu0.eval(std::min(1.0, xi + lam * t), ya) * params.eta_plus(ya);
                    ivu += w * vv0.eval(std::min(1.0, xi2 + mu * t), yb) * params.eta_minus(yb);
                }
                iuv *= hs;
                ivu *= hs;
            }
            uv.at(i, j) = -params.eta_plus(xi) / (lam + mu) - iuv;
            vu.at(i, j) = params.eta_minus(xi2) / (lam + mu) + ivu;
        }
    }

    // edge values from the boundary identities, then the (1,1) characteristics
    TriangleField& uu = next.field(KernelName::uu);
    TriangleField& vv = next.field(KernelName::vv);
    for (int i = 0; i <= nx; ++i) {
        const double ga_b = next.gamma_alpha_nodes()[idx(i)].dot(params.B.transpose());
        const double gb_b = next.gamma_beta_nodes()[idx(i)].dot(params.B.transpose());
        uu.at(i, 0) = (mu * uv.at(i, 0) - ga_b) / (lam * q);
        vv.at(i, 0) = (lam * q * vu.at(i, 0) + gb_b) / mu;
    }
    std::vector<double> fu, fv;
    for (int d = 0; d <= nx; ++d) {
        const int len = nx - d + 1;  // nodes (d + m, m), m = 0 .. nx - d
        fu.assign(idx(len), 0.0);
        fv.assign(idx(len), 0.0);
        for (int m = 0; m < len; ++m) {
            fu[idx(m)] = uv0.at(d + m, m) * eta_m[idx(m)];
            fv[idx(m)] = vu0.at(d + m, m) * eta_p[idx(m)];
        }
        const auto cu = quad::cumulative(std::span<const double>(fu), dx);
        const auto cv = quad::cumulative(std::span<const double>(fv), dx);
        for (int m = 1; m < len; ++m) {
            uu.at(d + m, m) = uu.at(d, 0) - cu[idx(m)] / lam;
            vv.at(d + m, m) = vv.at(d, 0) + cv[idx(m)] / mu;
        }
    }
    return next;
}

KernelSet solve_kernels(const SystemParams& params, int nx, const RowVec& gamma_beta_0,
                        const KernelSolverOptions& options) {
    params.validate();
    if (nx < 2) throw InvalidArgument("kernels: nx must be at least 2");
    if (!(options.tol > 0.0)) throw InvalidArgument("kernels: tol must be positive");
    if (options.max_iter < 1) throw InvalidArgument("kernels: max_iter must be positive");
    if (gamma_beta_0.size() != params.n())
        throw InvalidArgument("kernels: gamma_beta_0 must be 1 x n");

    KernelSet cur = zero_kernels(nx, params.n());
    double change = std::numeric_limits<double>::infinity();
    for (int it = 1; it <= options.max_iter; ++it) {
        KernelSet nxt = kernel_picard_sweep(params, gamma_beta_0, cur);
        if (!all_finite(nxt))
            throw NumericalError("kernels: non-finite value in sweep " + std::to_string(it));
        change = 0.0;
        for (auto name : {KernelName::uu, KernelName::uv, KernelName::vu, KernelName::vv})
            change = std::max(change, field_change(nxt.field(name), cur.field(name)));
        change = std::max(change, gamma_change(nxt.gamma_alpha_nodes(), cur.gamma_alpha_nodes()));
        change = std::max(change, gamma_change(nxt.gamma_beta_nodes(), cur.gamma_beta_nodes()));
        cur = std::move(nxt);
        if (change < options.tol) {
            cur.iterations = it;
            cur.last_change = change;
            cur.finalize(params);
            cur.residual_norm = kernel_residuals(cur, params).max_differential();
            return cur;
        }
    }
    throw NonConvergence("kernels: no convergence after " + std::to_string(options.max_iter) +
                             " sweeps",
                         change);
}

KernelSet solve_kernels(const SystemParams& params, int nx, const KernelSolverOptions& options) {
    return solve_kernels(params, nx, RowVec::Zero(params.n()), options);
}

double eval_kernel(const KernelSet& ks, KernelName which, double x, double y) {
    return ks.field(which).eval(x, y);
}

double KernelResiduals::max_differential() const {
    return std::max({transport_uu.max, transport_uv.max, transport_vu.max, transport_vv.max,
                     gamma_alpha_ode.max, gamma_beta_ode.max});
}

double KernelResiduals::max_algebraic() const {
    return std::max({boundary_alpha.max, boundary_beta.max, diagonal_uv.max, diagonal_vu.max});
}

namespace {

struct Accumulator {
    double max = 0.0, sum = 0.0;
    long count = 0;
    void add(double r) {
        r = std::abs(r);
        max = std::max(max, r);
        sum += r;
        ++count;
    }
    ResidualStat stat() const { return {max, count ? sum / static_cast<double>(count) : 0.0}; }
};

}  // namespace

KernelResiduals kernel_residuals(const KernelSet& ks, const SystemParams& params) {
    const int nx = ks.nx();
    if (nx < 8) throw InvalidArgument("kernel residuals need nx >= 8");
    const double dx = ks.dx();
    const double lam = params.lambda, mu = params.mu, q = params.q;
    const auto& uu = ks.field(KernelName::uu);
    const auto& uv = ks.field(KernelName::uv);
    const auto& vu = ks.field(KernelName::vu);
    const auto& vv = ks.field(KernelName::vv);
    const auto dxf = [&](const TriangleField& f, int i, int j) {
        return (f.at(i + 1, j) - f.at(i - 1, j)) / (2 * dx);
    };
    const auto dyf = [&](const TriangleField& f, int i, int j) {
        return (f.at(i, j + 1) - f.at(i, j - 1)) / (2 * dx);
    };

    Accumulator ruu, ruv, rvu, rvv, rga, rgb, rba, rbb, rdu, rdv;
    for (int i = 2; i <= nx - 1; ++i) {
        for (int j = 1; j <= i - 1; ++j) {
            const double y = j * dx;
            const double ep = params.eta_plus(y), em = params.eta_minus(y);
            ruu.add(lam * (dxf(uu, i, j) + dyf(uu, i, j)) + uv.at(i, j) * em);
            ruv.add(lam * dxf(uv, i, j) - mu * dyf(uv, i, j) + uu.at(i, j) * ep);
            rvu.add(-mu * dxf(vu, i, j) + lam * dyf(vu, i, j) + vv.at(i, j) * em);
            rvv.add(-mu * (dxf(vv, i, j) + dyf(vv, i, j)) + vu.at(i, j) * ep);
        }
    }
    const auto& ga = ks.gamma_alpha_nodes();
    const auto& gb = ks.gamma_beta_nodes();
    const auto at = [](int i) { return static_cast<std::size_t>(i); };
    for (int i = 1; i <= nx - 1; ++i) {
        const RowVec da = (ga[at(i + 1)] - ga[at(i - 1)]) / (2 * dx);
        const RowVec db = (gb[at(i + 1)] - gb[at(i - 1)]) / (2 * dx);
        rga.add((lam * da + ga[at(i)] * params.A + lam * uu.at(i, 0) * params.M).cwiseAbs().maxCoeff());
        rgb.add((-mu * db + gb[at(i)] * params.A + lam * vu.at(i, 0) * params.M).cwiseAbs().maxCoeff());
    }
    for (int i = 0; i <= nx; ++i) {
        const double x = i * dx;
        rba.add(uu.at(i, 0) * lam * q - mu * uv.at(i, 0) + ga[at(i)].dot(params.B.transpose()));
        rbb.add(vu.at(i, 0) * lam * q - mu * vv.at(i, 0) + gb[at(i)].dot(params.B.transpose()));
        rdu.add((lam + mu) * uv.at(i, i) + params.eta_plus(x));
        rdv.add((lam + mu) * vu.at(i, i) - params.eta_minus(x));
    }
    KernelResiduals r;
    r.transport_uu = ruu.stat();
    r.transport_uv = ruv.stat();
    r.transport_vu = rvu.stat();
    r.transport_vv = rvv.stat();
    r.gamma_alpha_ode = rga.stat();
    r.gamma_beta_ode = rgb.stat();
    r.boundary_alpha = rba.stat();
    r.boundary_beta = rbb.stat();
    r.diagonal_uv = rdu.stat();
    r.diagonal_vu = rdv.stat();
    return r;
}

}  // namespace hypersde
