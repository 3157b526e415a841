#pragma once

#include <memory>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "hypersde/brownian.hpp"
#include "hypersde/grid.hpp"
#include "hypersde/kernels.hpp"

namespace hypersde {

/// Scalar control signal on the time grid together with its values on the
/// pre-start window [-h, 0). at(k) for -L <= k < 0 reads the history.
struct ControlSignal {
    std::vector<double> history;  // steps -L .. -1, oldest first
    std::vector<double> values;   // steps 0 .. nt

    double at(int k) const;
};

/// One simulated sample path. Every recorded array has nt + 1 entries.
struct Trajectory {
    std::vector<double> times;
    std::vector<Vec> X;
    std::vector<double> v_in;
    std::vector<double> v_bs;
    std::vector<double> v_eff;
    /// Input actually felt by the SDE: beta(t, 0) for the PDE model,
    /// V_eff(t - h) + B^+ r(t) for the delayed model (scalar projection).
    std::vector<double> beta0;
    /// V_eff on [-h, 0), oldest first.
    std::vector<double> v_eff_history;

    std::optional<std::vector<Vec>> u_field;
    std::optional<std::vector<Vec>> v_field;
    std::optional<std::vector<Vec>> alpha_field;
    std::optional<std::vector<Vec>> beta_field;
    /// Random drift of the delayed SDE (delayed model only).
    std::optional<std::vector<Vec>> r;

    int steps() const { return static_cast<int>(times.size()) - 1; }
    ControlSignal control_signal() const { return {v_eff_history, v_eff}; }
};

/// What a control law may see when it starts a path.
struct ControlContext {
    const SystemParams& params;
    const SpaceTimeGrid& grid;
    /// V_eff on [-h, 0), oldest first (delay_steps entries).
    std::span<const double> history;
};

/// Per-path controller state. next() is called once per step in order
/// k = 0, 1, ..., nt; past_increments holds exactly the k increments
/// dW_0 .. dW_{k-1}, so a law cannot look ahead.
class ControlLaw {
public:
    virtual ~ControlLaw() = default;
    virtual double next(int k, const Vec& X, std::span<const double> past_increments) = 0;
};

class ControllerImpl;

/// Immutable, shareable description of a V_eff policy.
class Controller {
public:
    enum class Kind { open_loop, stabilizing_feedback, lq_optimal, scripted };

    explicit Controller(std::shared_ptr<const ControllerImpl> impl);

    static Controller open_loop();
    /// Plays back values[k] at step k (zero beyond the end).
    static Controller scripted(std::vector<double> values);

    Kind kind() const;
    std::unique_ptr<ControlLaw> start(const ControlContext& context) const;

private:
    std::shared_ptr<const ControllerImpl> impl_;
};

class ControllerImpl {
public:
    virtual ~ControllerImpl() = default;
    virtual Controller::Kind kind() const = 0;
    virtual std::unique_ptr<ControlLaw> start(const ControlContext& context) const = 0;
};

/// Initial PDE profiles on the grid with the proximal boundary condition
/// u(0,0) = q v(0,0) + M X0 imposed at the first node.
std::pair<Vec, Vec> initial_profiles(const SystemParams& params, const SpaceTimeGrid& grid);

/// (alpha, beta) of one spatial profile, trapezoidal Volterra integrals.
std::pair<Vec, Vec> transform_profile(const Vec& u, const Vec& v, const Vec& X,
                                      const KernelSet& ks);

/// Inverse of transform_profile by Neumann-series fixed point.
/// Throws NonConvergence after max_iter sweeps.
std::pair<Vec, Vec> invert_profile(const Vec& alpha, const Vec& beta, const Vec& X,
                                   const KernelSet& ks, double tol = 1e-10,
                                   int max_iter = 100);

/// V_eff history beta(0, 1 + mu s), s in [-h, 0), read off the transformed
/// initial data.
std::vector<double> initial_control_history(const SystemParams& params, const KernelSet& ks,
                                            const SpaceTimeGrid& grid);

struct SimOptions {
    bool record_fields = false;
    /// Abort threshold on |X|, |u|, |v|.
    double blowup = 1e12;
};

/// Upwind transport + exponential Euler-Maruyama for the coupled plant with
/// V_in = V_BS + V_eff. ks and grid must share nx.
Trajectory simulate_coupled(const SystemParams& params, const KernelSet& ks,
                            const Controller& controller, const BrownianPath& path,
                            const SpaceTimeGrid& grid, const SimOptions& options = {});

/// Fills alpha_field / beta_field from u_field / v_field / X.
Trajectory apply_transform(const Trajectory& trajectory, const KernelSet& ks);

/// Recovers (u, v) fields from (alpha, beta, X), step by step.
std::pair<std::vector<Vec>, std::vector<Vec>> invert_transform(
    const std::vector<Vec>& alpha_field, const std::vector<Vec>& beta_field,
    const std::vector<Vec>& X, const KernelSet& ks, double tol = 1e-10, int max_iter = 100);

/// beta(t_k, x) by characteristics: V_eff(t - (1-x)/mu) plus the left-point
/// Ito sum of gamma_beta(x + mu (t - s)) sigma(s) dW_s over the transit window.
double beta_explicit(const SystemParams& params, const KernelSet& ks, const ControlSignal& v_eff,
                     const BrownianPath& path, const SpaceTimeGrid& grid, int k, double x);

/// Input-delayed SDE dX = (A X + B V_eff(t - h) + r(t)) dt + sigma dW.
struct DelayedSdeModel {
    Mat A;
    Vec B;
    Profile sigma;
    double h = 0.0;
    int delay_steps = 0;
    /// gamma_beta(mu * i * dt), i = 0 .. delay_steps.
    std::vector<RowVec> gamma_beta_lags;
    /// V_eff on [-h, 0), oldest first.
    std::vector<double> initial_control_history;
    Vec X0;
};

DelayedSdeModel make_delayed_model(const SystemParams& params, const KernelSet& ks,
                                   const SpaceTimeGrid& grid);

/// r(t_k) = B sum_{i=1}^{L} gamma_beta(mu i dt) sigma(t_{k-i}) dW_{k-i}, noise
/// before t = 0 being absent.
Vec random_drift(const DelayedSdeModel& model, const SpaceTimeGrid& grid,
                 std::span<const double> past_increments, int k);

Trajectory simulate_delayed_sde(const DelayedSdeModel& model, const Controller& controller,
                                const BrownianPath& path, const SpaceTimeGrid& grid,
                                double blowup = 1e12);

}  // namespace hypersde
