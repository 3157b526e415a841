#include "hypersde/analysis.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <mutex>
#include <thread>

#include "hypersde/linalg.hpp"
#include "hypersde/quadrature.hpp"
#include "lag_sum.hpp"

namespace hypersde {

namespace {

std::size_t at(int i) { return static_cast<std::size_t>(i); }

double check_lag(const SystemParams& params, double u) {
    const double h = params.delay();
    if (!(u >= -1e-12 * h && u <= h * (1 + 1e-12)))
        throw InvalidArgument("lag argument outside [0, h]");
    return std::clamp(u, 0.0, h);
}

int scaled_panels(int panels, double length, double h) {
    int p = static_cast<int>(std::ceil(panels * length / h));
    p = std::max(2, p);
    return p + (p % 2);
}

// B gamma_beta(x) as an n x n matrix, x clamped into [0, 1]
Mat b_gamma(const SystemParams& params, const KernelSet& ks, double x) {
    return params.B * ks.gamma_beta(std::clamp(x, 0.0, 1.0));
}

}  // namespace

Mat reduced_drift(const SystemParams& params, const KernelSet& ks) {
    return params.A - params.B * ks.gamma_beta(0.0);
}

Mat n_function(const SystemParams& params, const KernelSet& ks, double u, int panels) {
    u = check_lag(params, u);
    const Mat A = reduced_drift(params, ks);
    const long n = A.rows();
    if (u == 0.0) return Mat::Zero(n, n);
    const double mu = params.mu;
    return quad::simpson(
        [&](double tau) -> Mat { return expm(-A * tau) * b_gamma(params, ks, mu * (tau + u)); },
        -u, 0.0, scaled_panels(panels, u, params.delay()));
}

Mat g_function(const SystemParams& params, const KernelSet& ks, double u, int panels) {
    u = check_lag(params, u);
    const Mat A = reduced_drift(params, ks);
    const long n = A.rows();
    const double len = params.delay() - u;
    if (len <= 0.0) return Mat::Zero(n, n);
    const double mu = params.mu;
    return quad::simpson(
        [&](double tau) -> Mat { return expm(-A * tau) * b_gamma(params, ks, mu * (tau + u)); },
        0.0, len, scaled_panels(panels, len, params.delay()));
}

Mat g_prime(const SystemParams& params, const KernelSet& ks, double u, int panels) {
    u = check_lag(params, u);
    const Mat A = reduced_drift(params, ks);
    const double h = params.delay();
    const double mu = params.mu;
    const double len = h - u;
    Mat out = -expm(-A * len) * b_gamma(params, ks, mu * h);
    if (len > 0.0) {
        out += quad::simpson(
            [&](double tau) -> Mat {
                const double x = std::clamp(mu * (tau + u), 0.0, 1.0);
                return expm(-A * tau) * (params.B * (mu * ks.gamma_beta_prime(x)));
            },
            0.0, len, scaled_panels(panels, len, h));
    }
    return out;
}

Mat gamma_fn(const SystemParams& params, const KernelSet& ks, double u, int panels) {
    u = check_lag(params, u);
    const Mat A = reduced_drift(params, ks);
    return b_gamma(params, ks, params.mu * u) + g_prime(params, ks, u, panels) -
           A * g_function(params, ks, u, panels);
}

MinimumVariance::MinimumVariance(const SystemParams& params, const KernelSet& ks, int panels)
    : sigma_(params.sigma), h_(params.delay()) {
    if (panels < 4) throw InvalidArgument("minimum variance: need at least 4 panels");
    const Mat A = reduced_drift(params, ks);
    const double du = h_ / panels;
    // N(u) = e^{Au} int_0^u e^{-Aw} B gamma_beta(mu w) dw
    const long n = A.rows();
    std::vector<RowVec> rows(at(panels + 1));
    std::vector<Mat> f(at(panels + 1));
    for (int j = 0; j <= panels; ++j) f[at(j)] = expm(-A * (j * du)) * b_gamma(params, ks, params.mu * j * du);
    E_.resize(at(panels + 1));
    // cumulative integral column by column through the row-vector overload
    std::vector<Mat> I(at(panels + 1), Mat::Zero(n, n));
    for (long r = 0; r < n; ++r) {
        for (int j = 0; j <= panels; ++j) rows[at(j)] = f[at(j)].row(r);
        const auto c = quad::cumulative(std::span<const RowVec>(rows), du);
        for (int j = 0; j <= panels; ++j) I[at(j)].row(r) = c[at(j)];
    }
    for (int j = 0; j <= panels; ++j) {
        const Mat e = expm(A * (j * du));
        E_[at(j)] = e + e * I[at(j)];
    }
}

double MinimumVariance::operator()(double t, const Mat& W) const {
    if (t < h_ * (1 - 1e-12)) throw InvalidArgument("minimum variance needs t >= h");
    const int P = panels();
    const double du = h_ / P;
    const auto w = quad::uniform_weights(P);
    double acc = 0.0;
    for (int j = 0; j <= P; ++j) {
        const Vec s = E_[at(j)] * sigma_.vec(t - j * du);
        acc += w[at(j)] * s.dot(W * s);
    }
    return acc * du;
}

double MinimumVariance::operator()(double t) const {
    const long n = E_.front().rows();
    return (*this)(t, Mat::Identity(n, n));
}

double v_min(const SystemParams& params, const KernelSet& ks, const std::optional<Mat>& W,
             double t) {
    const MinimumVariance mv(params, ks);
    return W ? mv(t, *W) : mv(t);
}

Vec rolling_sum(std::span<const Mat> lags, const Profile& sigma, double dt,
                std::span<const double> past_increments, int k) {
    if (lags.empty()) throw InvalidArgument("rolling sum: no lags");
    const int L = static_cast<int>(lags.size()) - 1;
    const long n = lags.front().rows();
    Vec out = Vec::Zero(n);
    for (int j = 1; j <= std::min(L, k); ++j)
        out += lags[at(j)] * (sigma.vec((k - j) * dt) * past_increments[at(k - j)]);
    return out;
}

std::vector<Vec> rolling_G(const SystemParams& params, const KernelSet& ks,
                           const BrownianPath& path, const SpaceTimeGrid& grid) {
    const int L = grid.delay_steps;
    std::vector<Mat> g(at(L + 1));
    for (int j = 0; j < L; ++j) g[at(j)] = g_function(params, ks, j * grid.dt);
    g[at(L)] = Mat::Zero(params.n(), params.n());
    const auto flat = detail::flatten(g);
    detail::NoiseRecord noise(params.sigma, grid.dt, params.n());
    noise.catch_up(path.increments().data(), std::min(path.steps(), grid.nt));
    std::vector<Vec> G(at(grid.nt + 1), Vec::Zero(params.n()));
    for (int k = 1; k <= grid.nt; ++k)
        detail::lag_sum(flat.data(), params.n(), noise.z(), k, 1, std::min(L, k), G[at(k)].data());
    return G;
}

std::vector<Vec> artstein_sequence(const DelayedSdeModel& model, const Trajectory& trajectory,
                                   const SpaceTimeGrid& grid) {
    ArtsteinState art(model.A, model.B, grid.dt, model.delay_steps, trajectory.v_eff_history);
    std::vector<Vec> Y(trajectory.X.size());
    for (std::size_t k = 0; k < trajectory.X.size(); ++k) {
        Y[k] = art.predict(trajectory.X[k]);
        art.push(trajectory.v_eff[k]);
    }
    return Y;
}

LagTables::LagTables(const SystemParams& params, const KernelSet& ks, const SpaceTimeGrid& grid) {
    const int L = grid.delay_steps;
    for (int j = 0; j <= L; ++j) {
        g.push_back(j < L ? g_function(params, ks, j * grid.dt) : Mat::Zero(params.n(), params.n()));
        Gamma.push_back(gamma_fn(params, ks, std::min(j * grid.dt, params.delay())));
    }
}

std::vector<Vec> ybar_residuals(const LagTables& tables, const DelayedSdeModel& model,
                                const Trajectory& trajectory, const BrownianPath& path,
                                const SpaceTimeGrid& grid, std::span<const int> steps) {
    const double dt = grid.dt;
    const int n = static_cast<int>(model.A.rows());
    const auto Y = artstein_sequence(model, trajectory, grid);
    const Mat eAdt = expm(model.A * dt);
    const Vec Bbar = expm(-model.A * model.h) * model.B;
    const Mat noise_gain = Mat::Identity(n, n) + tables.g.front();
    const auto& inc = path.increments();
    const auto ybar = [&](int k) {
        return Vec(Y[at(k)] + rolling_sum(tables.g, model.sigma, dt, inc, k));
    };
    std::vector<Vec> out;
    for (int k : steps) {
        if (k < 0 || k >= grid.nt) throw InvalidArgument("ybar residuals: step outside [0, nt)");
        const Vec rbar = rolling_sum(tables.Gamma, model.sigma, dt, inc, k);
        const Vec z = model.sigma.vec(grid.time(k)) * inc[at(k)];
        const Vec pred = eAdt * (ybar(k) + (Bbar * trajectory.v_eff[at(k)] + rbar) * dt + noise_gain * z);
        out.push_back(ybar(k + 1) - pred);
    }
    return out;
}

ArtsteinResiduals artstein_residuals(const DelayedSdeModel& model, const Trajectory& trajectory,
                                     const BrownianPath& path, const SpaceTimeGrid& grid,
                                     std::span<const int> steps) {
    if (!trajectory.r) throw InvalidArgument("artstein residuals need the recorded drift r");
    const int L = model.delay_steps, nt = grid.nt;
    const double dt = grid.dt;
    const auto Y = artstein_sequence(model, trajectory, grid);
    const Mat eAdt = expm(model.A * dt);
    const Mat eAh = expm(model.A * model.h);
    const Vec Bbar = expm(-model.A * model.h) * model.B;
    std::vector<Mat> eAi(at(L + 1));
    for (int i = 0; i <= L; ++i) eAi[at(i)] = expm(model.A * (i * dt));
    const auto& r = *trajectory.r;

    ArtsteinResiduals out;
    for (int k : steps) {
        if (k < L || k >= nt) throw InvalidArgument("artstein residuals: step outside [L, nt)");
        out.steps.push_back(k);
        const double V = trajectory.v_eff[at(k)];
        const Vec noise = model.sigma.vec(grid.time(k)) * path.increment(k);
        const Vec drift = Bbar * V + r[at(k)];
        out.predictor.push_back(Y[at(k + 1)] - eAdt * (Y[at(k)] + drift * dt));
        out.predictor_euler.push_back(Y[at(k + 1)] - Y[at(k)] - (model.A * Y[at(k)] + drift) * dt - noise);
        Vec link = trajectory.X[at(k)] - eAh * Y[at(k - L)];
        for (int i = 1; i <= L; ++i) link -= eAi[at(i)] * (r[at(k - i)] * dt);
        out.link_drift.push_back(link);
        for (int i = 1; i <= L; ++i)
            link -= eAi[at(i)] * (model.sigma.vec(grid.time(k - i)) * path.increment(k - i));
        out.link.push_back(link);
    }
    return out;
}

namespace {

struct GroupStats {
    int count = 0;
    std::vector<double> mean;   // (nt+1) x n
    std::vector<double> m2;     // (nt+1), trace of the centered sum of squares
    std::vector<double> cost;   // (nt+1), sum over paths of the cumulative cost
};

void merge(GroupStats& into, const GroupStats& g, int n) {
    if (g.count == 0) return;
    if (into.count == 0) {
        into = g;
        return;
    }
    const double na = into.count, nb = g.count, nn = na + nb;
    const std::size_t steps = into.m2.size();
    for (std::size_t k = 0; k < steps; ++k) {
        double d2 = 0.0;
        for (int r = 0; r < n; ++r) {
            const std::size_t i = k * at(n) + at(r);
            const double d = g.mean[i] - into.mean[i];
            d2 += d * d;
            into.mean[i] += d * nb / nn;
        }
        into.m2[k] += g.m2[k] + d2 * na * nb / nn;
        into.cost[k] += g.cost[k];
    }
    into.count += g.count;
}

struct PathWork {
    const RunSpec& setup;
    const DelayedSdeModel& model;
    const std::vector<double>& g_flat;
    const Mat& eAh;
    std::vector<PathCost>& costs;
    std::vector<ProbeSamples>& probes;
    bool need_ybar;

    void run(int index, std::uint64_t seed, GroupStats& gs) const {
        const auto& grid = setup.grid;
        const int nt = grid.nt, L = grid.delay_steps, n = setup.params.n();
        const BrownianPath path = sample_brownian(seed, nt, grid.dt);
        const Trajectory tr = setup.plant == PlantModel::coupled
                                  ? simulate_coupled(setup.params, *setup.ks, setup.controller, path, grid)
                                  : simulate_delayed_sde(model, setup.controller, path, grid);

        std::vector<Vec> ybar;
        if (need_ybar) {
            ybar = artstein_sequence(model, tr, grid);
            detail::NoiseRecord noise(setup.params.sigma, grid.dt, n);
            noise.catch_up(path.increments().data(), nt);
            for (int k = 1; k <= nt; ++k)
                detail::lag_sum(g_flat.data(), n, noise.z(), k, 1, std::min(L, k), ybar[at(k)].data());
        }

        // Welford update per step
        gs.count += 1;
        const double c = gs.count;
        for (int k = 0; k <= nt; ++k) {
            double d2 = 0.0;
            for (int r = 0; r < n; ++r) {
                const std::size_t i = at(k) * at(n) + at(r);
                const double x = tr.X[at(k)](r);
                const double d = x - gs.mean[i];
                gs.mean[i] += d / c;
                d2 += d * (x - gs.mean[i]);
            }
            gs.m2[at(k)] += d2;
        }

        if (setup.weights) {
            const auto& w = *setup.weights;
            const int K = nt - L;
            const double dt = grid.dt;
            PathCost pc;
            double running = 0.0;
            double prev = 0.0;
            for (int k = 0; k <= nt; ++k) {
                const double t = grid.time(k);
                double f = 0.0;
                if (k >= L) {
                    const Vec& X = tr.X[at(k)];
                    f += X.dot(w.Q(t) * X);
                }
                if (k <= K) f += w.R(t) * tr.v_eff[at(k)] * tr.v_eff[at(k)];
                // per-window integrals are closed separately below
                if (k > 0) running += 0.5 * dt * (prev + f);
                prev = f;
                gs.cost[at(k)] += running;
            }
            const auto trap = [&](int a, int b, auto&& fn) {
                double s = 0.0;
                for (int k = a; k <= b; ++k) s += ((k == a || k == b) ? 0.5 : 1.0) * fn(k);
                return s * dt;
            };
            pc.state = trap(L, nt, [&](int k) {
                const Vec& X = tr.X[at(k)];
                return X.dot(w.Q(grid.time(k)) * X);
            });
            pc.control = trap(0, K, [&](int k) {
                const double v = tr.v_eff[at(k)];
                return w.R(grid.time(k)) * v * v;
            });
            if (need_ybar) {
                pc.ybar = trap(0, K, [&](int k) {
                    const Mat Qb = w.Qbar(grid.time(k), model.h, eAh);
                    return ybar[at(k)].dot(Qb * ybar[at(k)]);
                });
            }
            costs[at(index)] = pc;
        }

        for (auto& p : probes) {
            p.X[at(index)] = tr.X[at(p.step)];
            p.predicted[at(index)] = eAh * ybar[at(p.step - L)];
        }
    }
};

}  // namespace

MonteCarloResult monte_carlo(const RunSpec& setup, int n_paths, std::uint64_t base_seed,
                             int parallelism) {
    if (n_paths < 2) throw InvalidArgument("monte_carlo: need at least two paths");
    if (!setup.ks) throw InvalidArgument("monte_carlo: RunSpec has no kernels");
    setup.params.validate();
    const auto& grid = setup.grid;
    const int nt = grid.nt, L = grid.delay_steps, n = setup.params.n();
    for (int s : setup.probe_steps)
        if (s < L || s > nt) throw InvalidArgument("monte_carlo: probe step outside [L, nt]");

    const DelayedSdeModel model = make_delayed_model(setup.params, *setup.ks, grid);
    std::vector<Mat> g(at(L + 1));
    for (int j = 0; j < L; ++j) g[at(j)] = g_function(setup.params, *setup.ks, j * grid.dt);
    g[at(L)] = Mat::Zero(n, n);
    const auto g_flat = detail::flatten(g);
    const Mat eAh = expm(model.A * model.h);

    MonteCarloResult res;
    if (setup.weights) res.costs.resize(at(n_paths));
    for (int s : setup.probe_steps) {
        ProbeSamples p;
        p.step = s;
        p.X.resize(at(n_paths));
        p.predicted.resize(at(n_paths));
        res.probes.push_back(std::move(p));
    }
    const bool need_ybar = setup.weights.has_value() || !setup.probe_steps.empty();
    const PathWork work{setup, model, g_flat, eAh, res.costs, res.probes, need_ybar};

    const int groups = std::min(n_paths, 200);
    std::vector<GroupStats> stats(at(groups));
    std::atomic<int> next{0};
    const auto worker = [&] {
        for (int gi = next.fetch_add(1); gi < groups; gi = next.fetch_add(1)) {
            GroupStats& gs = stats[at(gi)];
            gs.mean.assign(at(nt + 1) * at(n), 0.0);
            gs.m2.assign(at(nt + 1), 0.0);
            gs.cost.assign(at(nt + 1), 0.0);
            const int lo = static_cast<int>(static_cast<long long>(gi) * n_paths / groups);
            const int hi = static_cast<int>(static_cast<long long>(gi + 1) * n_paths / groups);
            for (int i = lo; i < hi; ++i)
                work.run(i, path_seed(base_seed, static_cast<std::uint64_t>(i)), gs);
        }
    };
    const int threads = std::max(1, std::min(parallelism, groups));
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        std::exception_ptr failure;
        std::mutex m;
        for (int t = 0; t < threads; ++t)
            pool.emplace_back([&] {
                try {
                    worker();
                } catch (...) {
                    std::lock_guard<std::mutex> lock(m);
                    if (!failure) failure = std::current_exception();
                    next.store(groups);
                }
            });
        for (auto& th : pool) th.join();
        if (failure) std::rethrow_exception(failure);
    }

    GroupStats total;
    for (const auto& gs : stats) merge(total, gs, n);

    auto& rep = res.report;
    rep.n_paths = n_paths;
    const double N = n_paths;
    const MinimumVariance mv(setup.params, *setup.ks);
    rep.times.resize(at(nt + 1));
    rep.mean_X.resize(at(nt + 1));
    rep.var_X.resize(at(nt + 1));
    rep.stderr_var.resize(at(nt + 1));
    rep.v_min.resize(at(nt + 1));
    res.cost_running.resize(at(nt + 1));
    std::vector<double> loo(at(groups));
    for (int k = 0; k <= nt; ++k) {
        const std::size_t kk = at(k);
        rep.times[kk] = grid.time(k);
        rep.mean_X[kk] = Eigen::Map<const Vec>(total.mean.data() + kk * at(n), n);
        rep.var_X[kk] = total.m2[kk] / (N - 1);
        res.cost_running[kk] = total.cost[kk] / N;
        rep.v_min[kk] = k >= L ? mv(grid.time(k)) : std::numeric_limits<double>::quiet_NaN();

        // delete-a-group jackknife of the trace variance
        double mean_loo = 0.0;
        for (int gi = 0; gi < groups; ++gi) {
            const auto& gs = stats[at(gi)];
            const double nb = gs.count, na = N - nb;
            double d2 = 0.0;
            for (int r = 0; r < n; ++r) {
                const std::size_t i = kk * at(n) + at(r);
                const double ma = (N * total.mean[i] - nb * gs.mean[i]) / na;
                const double d = gs.mean[i] - ma;
                d2 += d * d;
            }
            const double m2a = total.m2[kk] - gs.m2[kk] - d2 * na * nb / N;
            loo[at(gi)] = m2a / (na - 1);
            mean_loo += loo[at(gi)];
        }
        mean_loo /= groups;
        double ss = 0.0;
        for (double v : loo) ss += (v - mean_loo) * (v - mean_loo);
        rep.stderr_var[kk] = std::sqrt(ss * (groups - 1.0) / groups);
    }
    return res;
}

LinearFit log_mean_fit(const VarianceReport& report, double t0, double t1) {
    std::vector<double> t, y;
    for (std::size_t k = 0; k < report.times.size(); ++k) {
        const double tk = report.times[k];
        if (tk < t0 - 1e-12 || tk > t1 + 1e-12) continue;
        t.push_back(tk);
        y.push_back(std::log(report.mean_X[k].norm()));
    }
    if (t.size() < 3) throw InvalidArgument("log_mean_fit: fewer than three points in range");
    return fit_line(t, y);
}

int bound_violations(const VarianceReport& report, double z) {
    int count = 0;
    for (std::size_t k = 0; k < report.times.size(); ++k) {
        if (std::isnan(report.v_min[k])) continue;
        if (report.var_X[k] < report.v_min[k] - z * report.stderr_var[k]) ++count;
    }
    return count;
}

double DecompositionCheck::z_score() const {
    const double d = std::abs(var_X - var_predicted - v_min);
    if (std_error > 0.0) return d / std_error;
    return d == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
}

DecompositionCheck variance_decomposition(const ProbeSamples& probe, double t, double vmin) {
    const std::size_t N = probe.X.size();
    if (N < 3 || probe.predicted.size() != N)
        throw InvalidArgument("variance decomposition: need matching samples");
    const long n = probe.X.front().size();
    Vec mx = Vec::Zero(n), mz = Vec::Zero(n), mw = Vec::Zero(n);
    for (std::size_t i = 0; i < N; ++i) {
        mx += probe.X[i];
        mz += probe.predicted[i];
    }
    mx /= static_cast<double>(N);
    mz /= static_cast<double>(N);
    mw = mx - mz;
    std::vector<double> d(N);
    double sx = 0.0, sz = 0.0, sw = 0.0, szw = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
        const Vec x = probe.X[i] - mx;
        const Vec z = probe.predicted[i] - mz;
        const Vec w = (probe.X[i] - probe.predicted[i]) - mw;
        sx += x.squaredNorm();
        sz += z.squaredNorm();
        sw += w.squaredNorm();
        szw += z.dot(w);
        d[i] = x.squaredNorm() - z.squaredNorm();
    }
    DecompositionCheck c;
    c.t = t;
    c.var_X = sx / static_cast<double>(N - 1);
    c.var_predicted = sz / static_cast<double>(N - 1);
    c.v_min = vmin;
    c.std_error = std::sqrt(sample_variance(d) / static_cast<double>(N));
    c.correlation = (sz > 0.0 && sw > 0.0) ? szw / std::sqrt(sz * sw) : 0.0;
    c.correlation_std_error = 1.0 / std::sqrt(static_cast<double>(N) - 1.0);
    return c;
}

double CostCheck::z_score() const {
    const double d = std::abs(lhs - rhs);
    if (std_error > 0.0) return d / std_error;
    return d == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
}

CostCheck cost_decomposition_check(const MonteCarloResult& result, const SystemParams& params,
                                   const KernelSet& ks, const LqWeights& weights,
                                   const SpaceTimeGrid& grid) {
    if (result.costs.size() < 2) throw InvalidArgument("cost check: run recorded no costs");
    const int L = grid.delay_steps, nt = grid.nt;
    const MinimumVariance mv(params, ks);
    double vint = 0.0;
    for (int k = L; k <= nt; ++k) {
        const double t = grid.time(k);
        vint += ((k == L || k == nt) ? 0.5 : 1.0) * mv(t, weights.Q(t));
    }
    vint *= grid.dt;
    std::vector<double> lhs, rhs, diff;
    for (const auto& c : result.costs) {
        lhs.push_back(c.total());
        rhs.push_back(c.ybar + c.control + vint);
        diff.push_back(c.state - c.ybar);
    }
    CostCheck out;
    out.lhs = estimate_mean(lhs).mean;
    out.rhs = estimate_mean(rhs).mean;
    out.std_error = estimate_mean(diff).std_error;
    return out;
}

}  // namespace hypersde
