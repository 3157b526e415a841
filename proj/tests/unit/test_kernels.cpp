#include <cmath>

#include <gtest/gtest.h>

#include "hypersde/kernels.hpp"

using namespace hypersde;

namespace {

SystemParams uncoupled_scalar() {
    auto p = fig1_params();
    p.eta_plus = Profile::constant(0.0);
    p.eta_minus = Profile::constant(0.0);
    p.q = 1.0;
    p.rho = 0.5;
    p.A = Mat::Constant(1, 1, 0.5);
    p.M = RowVec::Constant(1, 1.0);
    return p;
}

// gamma_alpha' = gamma_alpha (B M / q - A) / lambda, gamma_alpha(0) = -M, by RK4
std::vector<double> gamma_alpha_rk4(const SystemParams& p, int steps) {
    const double c = (p.B(0) * p.M(0) / p.q - p.A(0, 0)) / p.lambda;
    const double h = 1.0 / steps;
    std::vector<double> out{-p.M(0)};
    double y = -p.M(0);
    for (int i = 0; i < steps; ++i) {
        const double k1 = c * y, k2 = c * (y + 0.5 * h * k1), k3 = c * (y + 0.5 * h * k2),
                     k4 = c * (y + h * k3);
        y += h / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
        out.push_back(y);
    }
    return out;
}

double coarse_distance(const KernelSet& a, const KernelSet& b) {
    const int r = b.nx() / a.nx();
    double d = 0.0;
    for (auto name : {KernelName::uu, KernelName::uv, KernelName::vu, KernelName::vv})
        for (int i = 0; i <= a.nx(); ++i)
            for (int j = 0; j <= i; ++j)
                d = std::max(d, std::abs(a.field(name).at(i, j) - b.field(name).at(r * i, r * j)));
    for (int i = 0; i <= a.nx(); ++i) {
        const auto ia = static_cast<std::size_t>(i), ib = static_cast<std::size_t>(r * i);
        d = std::max(d, (a.gamma_alpha_nodes()[ia] - b.gamma_alpha_nodes()[ib]).lpNorm<Eigen::Infinity>());
        d = std::max(d, (a.gamma_beta_nodes()[ia] - b.gamma_beta_nodes()[ib]).lpNorm<Eigen::Infinity>());
    }
    return d;
}

}  // namespace

TEST(TriangleField, NodesAndBilinear) {
    TriangleField f(2);
    f.at(1, 0) = 0.0;
    f.at(2, 0) = 1.0;
    f.at(1, 1) = 0.0;
    f.at(2, 1) = 1.0;
    EXPECT_DOUBLE_EQ(f.eval(0.75, 0.25), 0.5);  // cell midpoint
    EXPECT_EQ(f.eval(1.0, 0.0), 1.0);
    EXPECT_EQ(f.eval(0.5, 0.5), 0.0);
    EXPECT_THROW(f.eval(0.2, 0.4), InvalidArgument);
    EXPECT_THROW(f.eval(1.2, 0.1), InvalidArgument);
    EXPECT_THROW(f.eval(0.5, -0.1), InvalidArgument);
}

TEST(Kernels, ZeroKernelSetEvaluatesToZero) {
    const auto ks = zero_kernels(10, 1);
    for (auto name : {KernelName::uu, KernelName::uv, KernelName::vu, KernelName::vv})
        EXPECT_EQ(eval_kernel(ks, name, 0.73, 0.31), 0.0);
}

TEST(Kernels, NodeQueriesReturnStoredValues) {
    const auto ks = solve_kernels(fig1_params(), 20);
    for (int i = 0; i <= 20; i += 3)
        for (int j = 0; j <= i; j += 2)
            EXPECT_EQ(eval_kernel(ks, KernelName::vu, i / 20.0, j / 20.0), ks.field(KernelName::vu).at(i, j));
}

TEST(Kernels, NoCouplingGivesZeroKernels) {
    auto p = fig1_params();
    p.eta_plus = Profile::constant(0.0);
    p.eta_minus = Profile::constant(0.0);
    p.M = RowVec::Zero(1);
    const auto ks = solve_kernels(p, 40);
    for (auto name : {KernelName::uu, KernelName::uv, KernelName::vu, KernelName::vv})
        EXPECT_EQ(ks.field(name).sup_norm(), 0.0);
    for (int i = 0; i <= 40; ++i) {
        EXPECT_EQ(ks.gamma_alpha_nodes()[static_cast<std::size_t>(i)](0), 0.0);
        EXPECT_EQ(ks.gamma_beta_nodes()[static_cast<std::size_t>(i)](0), 0.0);
    }
    const auto r = kernel_residuals(ks, p);
    EXPECT_EQ(r.max_differential(), 0.0);
    EXPECT_EQ(r.max_algebraic(), 0.0);
}

TEST(Kernels, ReferenceBoundaryValuesAreExact) {
    const auto ks = solve_kernels(fig1_params(), 100);
    EXPECT_EQ(ks.gamma_alpha_nodes().front()(0), -1.0);
    EXPECT_EQ(ks.gamma_beta_nodes().front()(0), 0.0);
    EXPECT_EQ(ks.gamma_alpha(0.0)(0), -1.0);
    EXPECT_EQ(ks.gamma_beta(0.0)(0), 0.0);
    const auto r = kernel_residuals(ks, fig1_params());
    EXPECT_TRUE(std::isfinite(r.max_differential()));
    EXPECT_LE(r.max_algebraic(), 10 * KernelSolverOptions{}.tol);
}

TEST(Kernels, UncoupledMatchesCharacteristicOracle) {
    const auto p = uncoupled_scalar();
    const int nx = 100;
    const auto ks = solve_kernels(p, nx);
    const auto rk = gamma_alpha_rk4(p, 4 * nx);
    const double c = (p.B(0) * p.M(0) / p.q - p.A(0, 0)) / p.lambda;
    const double tol = KernelSolverOptions{}.tol;
    double err = 0.0, err_closed = 0.0;
    for (int i = 0; i <= nx; ++i) {
        const double x = static_cast<double>(i) / nx;
        const double ga = ks.gamma_alpha_nodes()[static_cast<std::size_t>(i)](0);
        err = std::max(err, std::abs(ga - rk[static_cast<std::size_t>(4 * i)]));
        err_closed = std::max(err_closed, std::abs(ga + p.M(0) * std::exp(c * x)));
        for (int j = 0; j <= i; ++j) {
            const double kuu = -(-p.M(0) * std::exp(c * (i - j) / nx)) * p.B(0) / (p.lambda * p.q);
            err = std::max(err, std::abs(ks.field(KernelName::uu).at(i, j) - kuu));
            err = std::max(err, std::abs(ks.field(KernelName::uv).at(i, j)));
            err = std::max(err, std::abs(ks.field(KernelName::vu).at(i, j)));
            err = std::max(err, std::abs(ks.field(KernelName::vv).at(i, j)));
        }
        err = std::max(err, std::abs(ks.gamma_beta_nodes()[static_cast<std::size_t>(i)](0)));
    }
    EXPECT_LE(err, 10 * tol);
    EXPECT_LE(err_closed, 10 * tol);
}

TEST(Kernels, ResidualsShrinkUnderRefinement) {
    const auto p = fig1_params();
    const auto r50 = kernel_residuals(solve_kernels(p, 50), p);
    const auto r100 = kernel_residuals(solve_kernels(p, 100), p);
    EXPECT_GE(r50.max_differential() / r100.max_differential(), 1.5);
    EXPECT_LE(r100.max_differential(), 1e-2);
}

TEST(Kernels, RefinementDistanceDecreases) {
    const auto p = fig1_params();
    std::vector<KernelSet> sets;
    for (int nx : {25, 50, 100, 200, 400}) sets.push_back(solve_kernels(p, nx));
    double prev = INFINITY;
    for (std::size_t i = 0; i + 1 < sets.size(); ++i) {
        const double d = coarse_distance(sets[i], sets[i + 1]);
        EXPECT_LT(d, prev) << "nx " << sets[i].nx();
        prev = d;
    }
}

TEST(Kernels, FirstSweepIsLinearInCouplingData) {
    auto p = fig1_params();
    const double s = 2.5;
    auto ps = p;
    ps.eta_plus = Profile::constant(0.3 * s);
    ps.eta_minus = Profile::constant(0.3 * s);
    ps.M = p.M * s;
    const RowVec zero = RowVec::Zero(1);
    const auto a = kernel_picard_sweep(p, zero, zero_kernels(40, 1));
    const auto b = kernel_picard_sweep(ps, zero, zero_kernels(40, 1));
    for (auto name : {KernelName::uu, KernelName::uv, KernelName::vu, KernelName::vv}) {
        const auto& fa = a.field(name).data();
        const auto& fb = b.field(name).data();
        for (std::size_t k = 0; k < fa.size(); ++k) EXPECT_NEAR(fb[k], s * fa[k], 1e-13);
    }
    for (std::size_t i = 0; i < a.gamma_alpha_nodes().size(); ++i) {
        EXPECT_NEAR(b.gamma_alpha_nodes()[i](0), s * a.gamma_alpha_nodes()[i](0), 1e-13);
        EXPECT_NEAR(b.gamma_beta_nodes()[i](0), s * a.gamma_beta_nodes()[i](0), 1e-13);
    }
}

TEST(Kernels, BoundaryAndDiagonalIdentities) {
    const auto p = fig1_params();
    const auto ks = solve_kernels(p, 80);
    const double tol = KernelSolverOptions{}.tol;
    for (int i = 0; i <= 80; ++i) {
        const auto ix = static_cast<std::size_t>(i);
        const double x = i / 80.0;
        // K(x,0) (lambda q, -mu)' + gamma(x) B = 0, both rows
        const double ra = ks.field(KernelName::uu).at(i, 0) * p.lambda * p.q -
                          ks.field(KernelName::uv).at(i, 0) * p.mu +
                          ks.gamma_alpha_nodes()[ix].dot(p.B.transpose());
        const double rb = ks.field(KernelName::vu).at(i, 0) * p.lambda * p.q -
                          ks.field(KernelName::vv).at(i, 0) * p.mu +
                          ks.gamma_beta_nodes()[ix].dot(p.B.transpose());
        EXPECT_LE(std::abs(ra), 10 * tol);
        EXPECT_LE(std::abs(rb), 10 * tol);
        // Lambda K - K Lambda = -eta on the diagonal
        EXPECT_NEAR(ks.field(KernelName::uv).at(i, i) * (p.lambda + p.mu), -p.eta_plus(x), 10 * tol);
        EXPECT_NEAR(ks.field(KernelName::vu).at(i, i) * (p.lambda + p.mu), p.eta_minus(x), 10 * tol);
    }
}

TEST(Kernels, ImposedGammaBetaVariant) {
    const auto p = fig1_params();
    const RowVec k0 = RowVec::Constant(1, 0.4);
    const auto ks = solve_kernels(p, 60, k0);
    EXPECT_EQ(ks.gamma_beta_nodes().front()(0), 0.4);
    EXPECT_EQ(ks.gamma_alpha_nodes().front()(0), p.q * 0.4 - p.M(0));
    const auto r = kernel_residuals(ks, p);
    EXPECT_LE(r.max_algebraic(), 1e-8);
    EXPECT_LE(r.max_differential(), 0.05);
}

TEST(Kernels, IterationCapAndNonFiniteData) {
    const auto p = fig1_params();
    EXPECT_THROW(solve_kernels(p, 30, KernelSolverOptions{1e-10, 2}), NonConvergence);
    try {
        solve_kernels(p, 30, KernelSolverOptions{1e-10, 2});
    } catch (const NonConvergence& e) {
        EXPECT_GT(e.last_change(), 1e-10);
    }
    auto bad = p;
    bad.eta_plus = Profile::constant(std::nan(""));
    EXPECT_THROW(solve_kernels(bad, 30), NumericalError);
}

TEST(Kernels, GammaSplinesInterpolateNodes) {
    const auto ks = solve_kernels(fig1_params(), 50);
    for (int i = 0; i <= 50; i += 7) {
        const auto ix = static_cast<std::size_t>(i);
        EXPECT_NEAR(ks.gamma_beta(i / 50.0)(0), ks.gamma_beta_nodes()[ix](0), 1e-13);
        EXPECT_NEAR(ks.gamma_alpha(i / 50.0)(0), ks.gamma_alpha_nodes()[ix](0), 1e-13);
    }
    // derivative of the interpolant against a centered difference
    const double x = 0.43, e = 1e-5;
    EXPECT_NEAR(ks.gamma_beta_prime(x)(0), (ks.gamma_beta(x + e)(0) - ks.gamma_beta(x - e)(0)) / (2 * e), 1e-7);
}
