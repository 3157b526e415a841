#include "hypersde/sim.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "hypersde/control.hpp"
#include "hypersde/linalg.hpp"

namespace hypersde {

namespace {

std::size_t at(int i) { return static_cast<std::size_t>(i); }

double interpolate_nodes(const Vec& f, double x, double dx) {
    const int nx = static_cast<int>(f.size()) - 1;
    const double s = std::clamp(x / dx, 0.0, static_cast<double>(nx));
    const int i = std::min(static_cast<int>(std::floor(s)), nx - 1);
    const double a = s - i;
    return (1 - a) * f(i) + a * f(i + 1);
}

class OpenLoopImpl final : public ControllerImpl {
    class Law final : public ControlLaw {
    public:
        double next(int, const Vec&, std::span<const double>) override { return 0.0; }
    };

public:
    Controller::Kind kind() const override { return Controller::Kind::open_loop; }
    std::unique_ptr<ControlLaw> start(const ControlContext&) const override {
        return std::make_unique<Law>();
    }
};

class ScriptedImpl final : public ControllerImpl {
    class Law final : public ControlLaw {
    public:
        explicit Law(const std::vector<double>& v) : v_(v) {}
        double next(int k, const Vec&, std::span<const double>) override {
            return k >= 0 && at(k) < v_.size() ? v_[at(k)] : 0.0;
        }

    private:
        const std::vector<double>& v_;
    };

public:
    explicit ScriptedImpl(std::vector<double> v) : values_(std::move(v)) {}
    Controller::Kind kind() const override { return Controller::Kind::scripted; }
    std::unique_ptr<ControlLaw> start(const ControlContext&) const override {
        return std::make_unique<Law>(values_);
    }

private:
    std::vector<double> values_;
};

void check_grid(const SpaceTimeGrid& grid, const BrownianPath& path) {
    if (grid.nt < 1 || grid.delay_steps < 1) throw InvalidArgument("sim: empty grid");
    if (path.steps() < grid.nt) throw InvalidArgument("sim: Brownian path shorter than the grid");
    if (std::abs(path.dt() - grid.dt) > 1e-12 * grid.dt)
        throw InvalidArgument("sim: Brownian path and grid disagree on dt");
}

void blowup_guard(double value, double limit, const char* what, int k) {
    if (!(std::abs(value) <= limit))
        throw NumericalError(std::string("sim: ") + what + " exceeded the blow-up guard at step " +
                             std::to_string(k));
}

}  // namespace

double ControlSignal::at(int k) const {
    if (k < 0) {
        const int L = static_cast<int>(history.size());
        if (-k > L) throw InvalidArgument("control signal: index before the history window");
        return history[static_cast<std::size_t>(L + k)];
    }
    if (static_cast<std::size_t>(k) >= values.size())
        throw InvalidArgument("control signal: index past the end");
    return values[static_cast<std::size_t>(k)];
}

Controller::Controller(std::shared_ptr<const ControllerImpl> impl) : impl_(std::move(impl)) {
    if (!impl_) throw InvalidArgument("controller: null implementation");
}

Controller Controller::open_loop() { return Controller(std::make_shared<OpenLoopImpl>()); }

Controller Controller::scripted(std::vector<double> values) {
    return Controller(std::make_shared<ScriptedImpl>(std::move(values)));
}

Controller::Kind Controller::kind() const { return impl_->kind(); }

std::unique_ptr<ControlLaw> Controller::start(const ControlContext& context) const {
    return impl_->start(context);
}

std::pair<Vec, Vec> initial_profiles(const SystemParams& params, const SpaceTimeGrid& grid) {
    const int nx = grid.nx;
    Vec u(nx + 1), v(nx + 1);
    for (int i = 0; i <= nx; ++i) {
        u(i) = params.u0(grid.x(i));
        v(i) = params.v0(grid.x(i));
    }
    u(0) = params.q * v(0) + params.M.dot(params.X0);
    return {u, v};
}

std::pair<Vec, Vec> transform_profile(const Vec& u, const Vec& v, const Vec& X,
                                      const KernelSet& ks) {
    const int nx = ks.nx();
    if (u.size() != nx + 1 || v.size() != nx + 1)
        throw InvalidArgument("transform: profile size does not match the kernel grid");
    const double dx = ks.dx();
    const auto& uu = ks.field(KernelName::uu);
    const auto& uv = ks.field(KernelName::uv);
    const auto& vu = ks.field(KernelName::vu);
    const auto& vv = ks.field(KernelName::vv);
    Vec alpha(nx + 1), beta(nx + 1);
    for (int i = 0; i <= nx; ++i) {
        double ia = 0.0, ib = 0.0;
        for (int j = 0; j <= i; ++j) {
            const double w = (i == 0) ? 0.0 : ((j == 0 || j == i) ? 0.5 : 1.0);
            ia += w * (uu.at(i, j) * u(j) + uv.at(i, j) * v(j));
            ib += w * (vu.at(i, j) * u(j) + vv.at(i, j) * v(j));
        }
        alpha(i) = u(i) + dx * ia + ks.gamma_alpha_nodes()[at(i)].dot(X.transpose());
        beta(i) = v(i) + dx * ib + ks.gamma_beta_nodes()[at(i)].dot(X.transpose());
    }
    return {alpha, beta};
}

std::pair<Vec, Vec> invert_profile(const Vec& alpha, const Vec& beta, const Vec& X,
                                   const KernelSet& ks, double tol, int max_iter) {
    const int nx = ks.nx();
    if (alpha.size() != nx + 1 || beta.size() != nx + 1)
        throw InvalidArgument("inverse transform: profile size does not match the kernel grid");
    Vec a0(nx + 1), b0(nx + 1);
    for (int i = 0; i <= nx; ++i) {
        a0(i) = alpha(i) - ks.gamma_alpha_nodes()[at(i)].dot(X.transpose());
        b0(i) = beta(i) - ks.gamma_beta_nodes()[at(i)].dot(X.transpose());
    }
    const Vec zero = Vec::Zero(X.size());
    Vec u = a0, v = b0;
    double change = 0.0;
    for (int it = 0; it < max_iter; ++it) {
        // alpha - u is the Volterra term of the current iterate
        auto [ta, tb] = transform_profile(u, v, zero, ks);
        const Vec un = a0 - (ta - u);
        const Vec vn = b0 - (tb - v);
        change = std::max((un - u).cwiseAbs().maxCoeff(), (vn - v).cwiseAbs().maxCoeff());
        u = un;
        v = vn;
        if (!std::isfinite(change)) throw NumericalError("inverse transform: non-finite iterate");
        if (change < tol) return {u, v};
    }
    throw NonConvergence("inverse transform: fixed point did not converge", change);
}

std::vector<double> initial_control_history(const SystemParams& params, const KernelSet& ks,
                                            const SpaceTimeGrid& grid) {
    auto [u, v] = initial_profiles(params, grid);
    auto [alpha, beta] = transform_profile(u, v, params.X0, ks);
    const int L = grid.delay_steps;
    std::vector<double> h(at(L));
    for (int m = 0; m < L; ++m) h[at(m)] = interpolate_nodes(beta, params.mu * m * grid.dt, grid.dx);
    return h;
}

Trajectory simulate_coupled(const SystemParams& params, const KernelSet& ks,
                            const Controller& controller, const BrownianPath& path,
                            const SpaceTimeGrid& grid, const SimOptions& options) {
    check_grid(grid, path);
    if (ks.nx() != grid.nx) throw InvalidArgument("sim: kernel grid and space grid differ");
    if (std::max(grid.cfl_lambda, grid.cfl_mu) > 1.0 + 1e-12)
        throw InvalidArgument("sim: grid violates the CFL condition");

    const int nx = grid.nx, nt = grid.nt;
    const double dt = grid.dt, dx = grid.dx;
    const double cl = grid.cfl_lambda, cm = grid.cfl_mu;
    const Mat eA = expm(params.A * dt);

    Vec ep(nx + 1), em(nx + 1);
    for (int i = 0; i <= nx; ++i) {
        ep(i) = params.eta_plus(grid.x(i));
        em(i) = params.eta_minus(grid.x(i));
    }
    // distal boundary weights: trapezoid rows of K_vu(1, .), K_vv(1, .)
    Vec wu(nx + 1), wv(nx + 1);
    for (int j = 0; j <= nx; ++j) {
        const double w = (j == 0 || j == nx) ? 0.5 * dx : dx;
        wu(j) = w * ks.field(KernelName::vu).at(nx, j);
        wv(j) = w * ks.field(KernelName::vv).at(nx, j);
    }
    const RowVec gb1 = ks.gamma_beta_nodes().back();
    const RowVec gb0 = ks.gamma_beta_nodes().front();

    auto [u, v] = initial_profiles(params, grid);
    Vec X = params.X0;
    const std::vector<double> history = initial_control_history(params, ks, grid);
    auto law = controller.start(ControlContext{params, grid, history});

    Trajectory tr;
    tr.v_eff_history = history;
    tr.times.resize(at(nt + 1));
    tr.X.resize(at(nt + 1));
    tr.v_in.resize(at(nt + 1));
    tr.v_bs.resize(at(nt + 1));
    tr.v_eff.resize(at(nt + 1));
    tr.beta0.resize(at(nt + 1));
    if (options.record_fields) {
        tr.u_field.emplace(at(nt + 1));
        tr.v_field.emplace(at(nt + 1));
    }

    const auto close_boundary = [&](int k) {
        const double veff = law->next(k, X, path.history(k));
        v(nx) = 0.0;
        const double partial =
            -params.rho * u(nx) - gb1.dot(X.transpose()) - wu.dot(u) - wv.dot(v);
        v(nx) = (params.rho * u(nx) + partial + veff) / (1.0 + wv(nx));
        const double vbs = partial - wv(nx) * v(nx);
        tr.times[at(k)] = grid.time(k);
        tr.X[at(k)] = X;
        tr.v_eff[at(k)] = veff;
        tr.v_bs[at(k)] = vbs;
        tr.v_in[at(k)] = vbs + veff;
        tr.beta0[at(k)] = v(0) + gb0.dot(X.transpose());
        if (options.record_fields) {
            (*tr.u_field)[at(k)] = u;
            (*tr.v_field)[at(k)] = v;
        }
        blowup_guard(X.cwiseAbs().maxCoeff(), options.blowup, "|X|", k);
        blowup_guard(u.cwiseAbs().maxCoeff(), options.blowup, "|u|", k);
        blowup_guard(v.cwiseAbs().maxCoeff(), options.blowup, "|v|", k);
        blowup_guard(veff, options.blowup, "|V_eff|", k);
    };

    close_boundary(0);
    Vec un(nx + 1), vn(nx + 1);
    for (int k = 0; k < nt; ++k) {
        const Vec noise = params.sigma_at(grid.time(k)) * path.increment(k);
        X = eA * (X + params.B * (v(0) * dt) + noise);
        for (int i = 1; i <= nx; ++i) un(i) = u(i) - cl * (u(i) - u(i - 1)) + dt * ep(i) * v(i);
        for (int i = 0; i < nx; ++i) vn(i) = v(i) + cm * (v(i + 1) - v(i)) + dt * em(i) * u(i);
        un(0) = params.q * vn(0) + params.M.dot(X);
        vn(nx) = v(nx);
        u.swap(un);
        v.swap(vn);
        close_boundary(k + 1);
    }
    return tr;
}

Trajectory apply_transform(const Trajectory& trajectory, const KernelSet& ks) {
    if (!trajectory.u_field || !trajectory.v_field)
        throw InvalidArgument("apply_transform: trajectory has no recorded fields");
    Trajectory out = trajectory;
    const std::size_t n = trajectory.u_field->size();
    out.alpha_field.emplace(n);
    out.beta_field.emplace(n);
    for (std::size_t k = 0; k < n; ++k) {
        auto [a, b] = transform_profile((*trajectory.u_field)[k], (*trajectory.v_field)[k],
                                        trajectory.X[k], ks);
        (*out.alpha_field)[k] = std::move(a);
        (*out.beta_field)[k] = std::move(b);
    }
    return out;
}

std::pair<std::vector<Vec>, std::vector<Vec>> invert_transform(
    const std::vector<Vec>& alpha_field, const std::vector<Vec>& beta_field,
    const std::vector<Vec>& X, const KernelSet& ks, double tol, int max_iter) {
    if (alpha_field.size() != beta_field.size() || alpha_field.size() != X.size())
        throw InvalidArgument("invert_transform: field lengths differ");
    std::vector<Vec> u(alpha_field.size()), v(alpha_field.size());
    for (std::size_t k = 0; k < alpha_field.size(); ++k) {
        auto [uk, vk] = invert_profile(alpha_field[k], beta_field[k], X[k], ks, tol, max_iter);
        u[k] = std::move(uk);
        v[k] = std::move(vk);
    }
    return {u, v};
}

double beta_explicit(const SystemParams& params, const KernelSet& ks, const ControlSignal& v_eff,
                     const BrownianPath& path, const SpaceTimeGrid& grid, int k, double x) {
    if (!(x >= 0.0 && x <= 1.0)) throw InvalidArgument("beta_explicit: x outside [0, 1]");
    const double dt = grid.dt;
    const double lag = (1.0 - x) / params.mu / dt;  // transit time in steps
    // delayed read-out, linear between grid values
    const double pos = k - lag;
    const int lo = static_cast<int>(std::floor(pos + 1e-9));
    const double a = std::max(0.0, pos - lo);
    double value = a < 1e-9 ? v_eff.at(lo) : (1 - a) * v_eff.at(lo) + a * v_eff.at(lo + 1);
    const int first = std::max(0, static_cast<int>(std::ceil(pos - 1e-9)));
    for (int j = first; j < k; ++j) {
        const double xi = std::min(1.0, x + params.mu * (k - j) * dt);
        value += ks.gamma_beta(xi).dot(params.sigma_at(grid.time(j)).transpose()) * path.increment(j);
    }
    return value;
}

DelayedSdeModel make_delayed_model(const SystemParams& params, const KernelSet& ks,
                                   const SpaceTimeGrid& grid) {
    DelayedSdeModel m;
    m.A = params.A - params.B * ks.gamma_beta(0.0);
    m.B = params.B;
    m.sigma = params.sigma;
    m.delay_steps = grid.delay_steps;
    m.h = grid.delay();
    m.gamma_beta_lags.resize(at(grid.delay_steps + 1));
    for (int i = 0; i <= grid.delay_steps; ++i)
        m.gamma_beta_lags[at(i)] = ks.gamma_beta(std::min(1.0, params.mu * i * grid.dt));
    m.initial_control_history = initial_control_history(params, ks, grid);
    m.X0 = params.X0;
    return m;
}

namespace {

// scalar part s_k of r_k = B s_k
double drift_scalar(const DelayedSdeModel& model, const std::vector<Vec>& sigma_dw, int k) {
    const int L = model.delay_steps;
    double s = 0.0;
    for (int i = 1; i <= std::min(L, k); ++i)
        s += model.gamma_beta_lags[at(i)].dot(sigma_dw[at(k - i)].transpose());
    return s;
}

}  // namespace

Vec random_drift(const DelayedSdeModel& model, const SpaceTimeGrid& grid,
                 std::span<const double> past_increments, int k) {
    if (static_cast<int>(past_increments.size()) < k)
        throw InvalidArgument("random_drift: not enough increments");
    const int L = model.delay_steps;
    double s = 0.0;
    for (int i = 1; i <= std::min(L, k); ++i) {
        const int j = k - i;
        s += model.gamma_beta_lags[at(i)].dot(model.sigma.vec(grid.time(j)).transpose()) *
             past_increments[at(j)];
    }
    return model.B * s;
}

Trajectory simulate_delayed_sde(const DelayedSdeModel& model, const Controller& controller,
                                const BrownianPath& path, const SpaceTimeGrid& grid,
                                double blowup) {
    check_grid(grid, path);
    if (model.delay_steps != grid.delay_steps)
        throw InvalidArgument("delayed sde: model and grid disagree on the delay");
    if (static_cast<int>(model.initial_control_history.size()) != model.delay_steps)
        throw InvalidArgument("delayed sde: history length must equal the delay steps");
    const int nt = grid.nt, L = model.delay_steps;
    const double dt = grid.dt;
    const Mat eA = expm(model.A * dt);

    // the plant only needs a context for the law; params are not read by built-in laws
    SystemParams shell;
    shell.A = model.A;
    shell.B = model.B;
    shell.M = RowVec::Zero(model.A.rows());
    shell.sigma = model.sigma;
    shell.X0 = model.X0;
    shell.mu = 1.0 / model.h;
    auto law = controller.start(ControlContext{shell, grid, model.initial_control_history});

    Trajectory tr;
    tr.v_eff_history = model.initial_control_history;
    tr.times.resize(at(nt + 1));
    tr.X.resize(at(nt + 1));
    tr.v_in.resize(at(nt + 1));
    tr.v_bs.assign(at(nt + 1), 0.0);
    tr.v_eff.resize(at(nt + 1));
    tr.beta0.resize(at(nt + 1));
    tr.r.emplace(at(nt + 1));

    std::vector<Vec> sigma_dw(at(nt));
    Vec X = model.X0;
    for (int k = 0; k <= nt; ++k) {
        const double veff = law->next(k, X, path.history(k));
        const double delayed = k < L ? model.initial_control_history[at(k)] : tr.v_eff[at(k - L)];
        const double s = drift_scalar(model, sigma_dw, k);
        tr.times[at(k)] = grid.time(k);
        tr.X[at(k)] = X;
        tr.v_eff[at(k)] = veff;
        tr.v_in[at(k)] = veff;
        tr.beta0[at(k)] = delayed + s;
        (*tr.r)[at(k)] = model.B * s;
        blowup_guard(X.cwiseAbs().maxCoeff(), blowup, "|X|", k);
        blowup_guard(veff, blowup, "|V_eff|", k);
        if (k == nt) break;
        sigma_dw[at(k)] = model.sigma.vec(grid.time(k)) * path.increment(k);
        X = eA * (X + model.B * ((delayed + s) * dt) + sigma_dw[at(k)]);
    }
    return tr;
}

}  // namespace hypersde
