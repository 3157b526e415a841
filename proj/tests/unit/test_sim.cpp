#include <cmath>
#include <map>

#include <gtest/gtest.h>

#include "hypersde/analysis.hpp"
#include "hypersde/control.hpp"
#include "hypersde/sim.hpp"
#include "hypersde/statistics.hpp"

using namespace hypersde;

namespace {

// kernels are the slow part; solve each (preset, nx) once
const KernelSet& kernels(const SystemParams& p, int nx) {
    static std::map<std::pair<double, int>, KernelSet> cache;
    const auto key = std::make_pair(p.M(0) + 10 * p.eta_plus(0.0), nx);
    auto it = cache.find(key);
    if (it == cache.end()) it = cache.emplace(key, solve_kernels(p, nx)).first;
    return it->second;
}

SystemParams noiseless(SystemParams p) {
    p.sigma = Profile::constant(0.0);
    return p;
}

double max_abs_diff(const Vec& a, const Vec& b) { return (a - b).cwiseAbs().maxCoeff(); }

}  // namespace

TEST(Coupled, DecoupledNoiselessIsMatrixExponential) {
    const auto p = noiseless(decoupled_params());
    const auto g = make_grid(p, 40);
    const auto tr = simulate_coupled(p, kernels(p, 40), Controller::open_loop(),
                                     sample_brownian(1, g.nt, g.dt), g);
    for (int k = 0; k <= g.nt; k += 37) {
        const double exact = std::exp(0.6 * g.time(k)) * p.X0(0);
        EXPECT_NEAR(tr.X[static_cast<std::size_t>(k)](0), exact, 1e-12 * exact);
    }
}

TEST(Coupled, Fig1OpenLoopGrows) {
    const auto p = noiseless(fig1_params());
    const auto g = make_grid(p, 50);
    const auto tr = simulate_coupled(p, kernels(p, 50), Controller::open_loop(),
                                     sample_brownian(1, g.nt, g.dt), g);
    EXPECT_GT(std::abs(tr.X.back()(0)), std::abs(p.X0(0)));
}

TEST(Coupled, ArraySizesAndInputSplit) {
    const auto p = fig1_params();
    const auto g = make_grid(p, 50);
    SimOptions opt;
    opt.record_fields = true;
    const auto tr = simulate_coupled(p, kernels(p, 50), Controller::scripted({0.5, -0.2, 1.0}),
                                     sample_brownian(3, g.nt, g.dt), g, opt);
    const auto n = static_cast<std::size_t>(g.nt + 1);
    EXPECT_EQ(tr.times.size(), n);
    EXPECT_EQ(tr.X.size(), n);
    EXPECT_EQ(tr.v_in.size(), n);
    EXPECT_EQ(tr.v_bs.size(), n);
    EXPECT_EQ(tr.v_eff.size(), n);
    EXPECT_EQ(tr.beta0.size(), n);
    EXPECT_EQ(tr.u_field->size(), n);
    EXPECT_EQ(tr.v_field->size(), n);
    EXPECT_EQ(tr.v_eff_history.size(), static_cast<std::size_t>(g.delay_steps));
    for (std::size_t k = 0; k < n; ++k) EXPECT_EQ(tr.v_in[k], tr.v_bs[k] + tr.v_eff[k]);
    EXPECT_EQ(tr.v_eff[1], -0.2);
    EXPECT_EQ(tr.v_eff[5], 0.0);
}

TEST(Coupled, MeanMatchesNoiselessRun) {
    const auto p = fig1_params();
    const auto g = make_grid(p, 40);
    const auto& ks = kernels(p, 40);
    std::vector<double> script;
    for (int k = 0; k <= g.nt; ++k) script.push_back(-std::sin(g.time(k)));
    const auto ctl = Controller::scripted(script);
    const auto ref = simulate_coupled(noiseless(p), ks, ctl, sample_brownian(1, g.nt, g.dt), g);
    const std::vector<int> probes{g.delay_steps, g.nt / 2, g.nt};
    std::vector<std::vector<double>> xs(probes.size());
    for (int i = 0; i < 2000; ++i) {
        const auto tr = simulate_coupled(p, ks, ctl, sample_brownian(path_seed(77, i), g.nt, g.dt), g);
        for (std::size_t j = 0; j < probes.size(); ++j) xs[j].push_back(tr.X[static_cast<std::size_t>(probes[j])](0));
    }
    for (std::size_t j = 0; j < probes.size(); ++j) {
        const auto m = estimate_mean(xs[j]);
        EXPECT_LE(std::abs(m.mean - ref.X[static_cast<std::size_t>(probes[j])](0)), 5 * m.std_error)
            << "step " << probes[j];
    }
}

TEST(Coupled, BlowUpGuard) {
    const auto p = fig1_params();
    const auto g = make_grid(p, 30);
    SimOptions opt;
    opt.blowup = 3.0;
    EXPECT_THROW(simulate_coupled(p, kernels(p, 30), Controller::open_loop(),
                                  sample_brownian(2, g.nt, g.dt), g, opt),
                 NumericalError);
}

TEST(Coupled, RejectsMismatchedKernels) {
    const auto p = fig1_params();
    const auto g = make_grid(p, 30);
    EXPECT_THROW(simulate_coupled(p, kernels(p, 40), Controller::open_loop(),
                                  sample_brownian(2, g.nt, g.dt), g),
                 InvalidArgument);
}

TEST(Transform, ZeroKernelsAreIdentity) {
    const int nx = 20;
    const auto ks = zero_kernels(nx, 1);
    Vec u = Vec::LinSpaced(nx + 1, 0.0, 1.0), v = u.array().sin().matrix();
    const auto [a, b] = transform_profile(u, v, Vec::Constant(1, 3.0), ks);
    EXPECT_EQ(a, u);
    EXPECT_EQ(b, v);
}

TEST(Transform, BoundaryIdentitiesAndRoundTrip) {
    const auto p = fig1_params();
    const auto g = make_grid(p, 50);
    const auto& ks = kernels(p, 50);
    SimOptions opt;
    opt.record_fields = true;
    const auto tr = apply_transform(
        simulate_coupled(p, ks, Controller::scripted({1.0, 2.0, -1.0}), sample_brownian(4, g.nt, g.dt), g, opt),
        ks);
    double distal = 0, proximal = 0;
    for (int k = 0; k <= g.nt; ++k) {
        const auto i = static_cast<std::size_t>(k);
        const Vec& a = (*tr.alpha_field)[i];
        const Vec& b = (*tr.beta_field)[i];
        distal = std::max(distal, std::abs(b(g.nx) - tr.v_eff[i]));
        proximal = std::max(proximal, std::abs(a(0) - p.q * b(0)));
        EXPECT_NEAR(b(0), tr.beta0[i], 1e-12);
    }
    EXPECT_LE(distal, 1e-8);
    EXPECT_LE(proximal, 1e-10);

    const auto [u, v] = invert_transform(*tr.alpha_field, *tr.beta_field, tr.X, ks);
    double rt = 0;
    for (std::size_t k = 0; k < u.size(); ++k)
        rt = std::max({rt, max_abs_diff(u[k], (*tr.u_field)[k]), max_abs_diff(v[k], (*tr.v_field)[k])});
    EXPECT_LE(rt, 1e-8);
}

TEST(Transform, InverseIsFirstOrderNeumannForSmallKernels) {
    // scale a solved kernel set by c: the inverse is u - c K u + O(c^2)
    const auto p = fig1_params();
    const auto& base = kernels(p, 40);
    const Vec u = Vec::LinSpaced(41, 1.0, 2.0), v = Vec::LinSpaced(41, -1.0, 0.5);
    const Vec X = Vec::Zero(1);
    for (double c : {0.1, 0.05}) {
        KernelSet ks(40, 1);
        for (auto name : {KernelName::uu, KernelName::uv, KernelName::vu, KernelName::vv}) {
            auto& f = ks.field(name);
            for (int i = 0; i <= 40; ++i)
                for (int j = 0; j <= i; ++j) f.at(i, j) = c * base.field(name).at(i, j);
        }
        const auto [ta, tb] = transform_profile(u, v, X, ks);
        const Vec first_u = u - (ta - u), first_v = v - (tb - v);
        const auto [iu, iv] = invert_profile(u, v, X, ks);
        const double scale = std::max(base.field(KernelName::uu).sup_norm(), base.field(KernelName::vv).sup_norm()) + 1.0;
        EXPECT_LE(std::max(max_abs_diff(iu, first_u), max_abs_diff(iv, first_v)), 10 * c * c * scale * scale * 2.0);
    }
}

TEST(BetaExplicit, DistalBoundaryIsControl) {
    const auto p = fig1_params();
    const auto g = make_grid(p, 40);
    const auto path = sample_brownian(5, g.nt, g.dt);
    const auto tr = simulate_coupled(p, kernels(p, 40), Controller::scripted({0.3, 0.1}), path, g);
    for (int k : {0, 1, 7, g.nt})
        EXPECT_EQ(beta_explicit(p, kernels(p, 40), tr.control_signal(), path, g, k, 1.0),
                  tr.control_signal().at(k));
    EXPECT_THROW(beta_explicit(p, kernels(p, 40), tr.control_signal(), path, g, 3, 1.5), InvalidArgument);
}

TEST(BetaExplicit, PureDelayWithoutGammaBeta) {
    auto p = decoupled_params();
    p.v0 = Profile::constant(0.7);
    const auto g = make_grid(p, 40);
    const auto& ks = kernels(p, 40);
    const auto path = sample_brownian(6, g.nt, g.dt);
    std::vector<double> script;
    for (int k = 0; k <= g.nt; ++k) script.push_back(std::cos(3 * g.time(k)));
    const auto tr = simulate_coupled(p, ks, Controller::scripted(script), path, g);
    const auto sig = tr.control_signal();
    for (int k = 0; k <= g.nt; k += 13) {
        EXPECT_NEAR(beta_explicit(p, ks, sig, path, g, k, 0.0), sig.at(k - g.delay_steps), 1e-15);
        // the plant feels the same delayed value
        EXPECT_NEAR(tr.beta0[static_cast<std::size_t>(k)], sig.at(k - g.delay_steps), 1e-12);
    }
}

TEST(BetaExplicit, AgreesWithTransformedField) {
    const auto p = fig1_params();
    double prev = 0;
    for (int nx : {50, 100}) {
        const auto g = make_grid(p, nx);
        const auto& ks = kernels(p, nx);
        const auto path = sample_brownian(8, g.nt, g.dt);
        SimOptions opt;
        opt.record_fields = true;
        const auto tr = apply_transform(simulate_coupled(p, ks, Controller::scripted({0.2, -0.4}), path, g, opt), ks);
        double err = 0;
        for (int k = g.delay_steps; k <= g.nt; k += 5)
            for (int i : {0, nx / 4, nx / 2})
                err = std::max(err, std::abs(beta_explicit(p, ks, tr.control_signal(), path, g, k, g.x(i)) -
                                             (*tr.beta_field)[static_cast<std::size_t>(k)](i)));
        EXPECT_LE(err, 0.1);
        if (prev > 0) EXPECT_LT(err, prev);
        prev = err;
    }
}

TEST(Delayed, NoiselessScalarClosedForm) {
    DelayedSdeModel m;
    m.A = Mat::Constant(1, 1, -0.5);
    m.B = Vec::Constant(1, 2.0);
    m.sigma = Profile::constant(0.0);
    auto p = fig1_params();
    const auto g = make_grid(p, 20);
    m.delay_steps = g.delay_steps;
    m.h = g.delay();
    m.gamma_beta_lags.assign(static_cast<std::size_t>(g.delay_steps + 1), RowVec::Zero(1));
    m.initial_control_history.assign(static_cast<std::size_t>(g.delay_steps), 0.0);
    m.X0 = Vec::Constant(1, 1.0);
    const double c = 0.8;
    const auto tr = simulate_delayed_sde(m, Controller::scripted(std::vector<double>(static_cast<std::size_t>(g.nt + 1), c)),
                                         sample_brownian(1, g.nt, g.dt), g);
    // exponential Euler with constant input: x_{k+1} = e^{a dt}(x_k + b c dt) after the delay
    const double e = std::exp(-0.5 * g.dt);
    double x = 1.0;
    for (int k = 0; k < g.nt; ++k) {
        x = e * (x + (k >= g.delay_steps ? 2.0 * c * g.dt : 0.0));
        EXPECT_NEAR(tr.X[static_cast<std::size_t>(k + 1)](0), x, 1e-13);
    }
    EXPECT_EQ(tr.v_bs, std::vector<double>(static_cast<std::size_t>(g.nt + 1), 0.0));
}

TEST(Delayed, MatchesCoupledWhenDecoupled) {
    const auto p = decoupled_params();
    const auto g = make_grid(p, 40);
    const auto& ks = kernels(p, 40);
    const auto path = sample_brownian(9, g.nt, g.dt);
    const auto ctl = Controller::scripted({1.0, 0.5, 0.25});
    const auto a = simulate_coupled(p, ks, ctl, path, g);
    const auto b = simulate_delayed_sde(make_delayed_model(p, ks, g), ctl, path, g);
    for (int k = 0; k <= g.nt; ++k) EXPECT_NEAR(a.X[static_cast<std::size_t>(k)](0), b.X[static_cast<std::size_t>(k)](0), 1e-10);
}

TEST(Delayed, CoupledGapShrinksUnderRefinement) {
    const auto p = fig1_params();
    std::vector<double> rms;
    for (int nx : {50, 100, 200}) {
        const auto g = make_grid(p, nx);
        const auto& ks = kernels(p, nx);
        const auto K = stabilizing_gain(p.A, p.B, g.delay(), {-1.0});
        const auto model = make_delayed_model(p, ks, g);
        const auto ctl = feedback_controller(K, model);
        double s = 0;
        int count = 0;
        for (int i = 0; i < 8; ++i) {
            const auto path = sample_brownian(path_seed(123, i), g.nt, g.dt);
            const auto a = simulate_coupled(p, ks, ctl, path, g);
            const auto b = simulate_delayed_sde(model, ctl, path, g);
            for (int k = g.delay_steps; k <= g.nt; ++k) {
                s += (a.X[static_cast<std::size_t>(k)] - b.X[static_cast<std::size_t>(k)]).squaredNorm();
                ++count;
            }
        }
        rms.push_back(std::sqrt(s / count));
    }
    EXPECT_LT(rms[1], rms[0]);
    EXPECT_LT(rms[2], rms[1]);
}

TEST(Delayed, RandomDriftHasZeroMean) {
    const auto p = fig1_params();
    const auto g = make_grid(p, 30);
    const auto model = make_delayed_model(p, kernels(p, 30), g);
    std::vector<double> mid, end;
    for (int i = 0; i < 10000; ++i) {
        const auto path = sample_brownian(path_seed(55, i), g.nt, g.dt);
        mid.push_back(random_drift(model, g, path.history(g.nt / 2), g.nt / 2)(0));
        end.push_back(random_drift(model, g, path.history(g.nt), g.nt)(0));
    }
    for (const auto* xs : {&mid, &end}) {
        const auto m = estimate_mean(*xs);
        EXPECT_GT(m.std_error, 0.0);
        EXPECT_LE(std::abs(m.mean), 5 * m.std_error);
    }
    // r at step 0 sees no noise
    EXPECT_EQ(random_drift(model, g, {}, 0)(0), 0.0);
}

TEST(Delayed, RandomDriftMatchesRecorded) {
    const auto p = fig1_params();
    const auto g = make_grid(p, 30);
    const auto model = make_delayed_model(p, kernels(p, 30), g);
    const auto path = sample_brownian(12, g.nt, g.dt);
    const auto tr = simulate_delayed_sde(model, Controller::open_loop(), path, g);
    for (int k = 0; k <= g.nt; k += 11)
        EXPECT_NEAR((*tr.r)[static_cast<std::size_t>(k)](0), random_drift(model, g, path.history(k), k)(0), 1e-14);
}

namespace {

// paths agreeing up to step m must give identical X and V_eff up to m
template <class Run>
void expect_adapted(Run run, int nt, double dt, int m) {
    const auto a = sample_brownian(31, nt, dt);
    const auto s = a.spliced(sample_brownian(32, nt, dt), m);
    const auto ta = run(a), ts = run(s);
    for (int k = 0; k <= m; ++k) {
        const auto i = static_cast<std::size_t>(k);
        ASSERT_EQ(ta.X[i], ts.X[i]) << k;
        ASSERT_EQ(ta.v_eff[i], ts.v_eff[i]) << k;
    }
    EXPECT_NE(ta.X.back(), ts.X.back());
}

}  // namespace

TEST(Adaptedness, SplicedPathsAgreeUpToSplice) {
    const auto p = fig1_params();
    const auto g = make_grid(p, 40);
    const auto& ks = kernels(p, 40);
    const auto model = make_delayed_model(p, ks, g);
    const auto fb = feedback_controller(stabilizing_gain(p.A, p.B, g.delay(), {-1.0}), model);
    const auto lq = std::make_shared<LqSolution>(solve_lq(p, ks, model, LqWeights::constant(Mat::Identity(1, 1), 0.1), g));
    const auto lqc = lq_controller(lq, p.sigma);
    const int m = g.nt / 3;
    expect_adapted([&](const BrownianPath& w) { return simulate_coupled(p, ks, fb, w, g); }, g.nt, g.dt, m);
    expect_adapted([&](const BrownianPath& w) { return simulate_delayed_sde(model, fb, w, g); }, g.nt, g.dt, m);
    expect_adapted([&](const BrownianPath& w) { return simulate_delayed_sde(model, lqc, w, g); }, g.nt, g.dt, m);
    expect_adapted([&](const BrownianPath& w) { return simulate_coupled(p, ks, lqc, w, g); }, g.nt, g.dt, m);
}
