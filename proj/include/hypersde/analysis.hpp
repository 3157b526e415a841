#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "hypersde/control.hpp"
#include "hypersde/statistics.hpp"

namespace hypersde {

// Shape convention: gamma_beta is a 1 x n row and always enters through the
// rank-one n x n product B gamma_beta(.), so N, g and Gamma are n x n.

/// Drift of the reduced SDE, A - B gamma_beta(0). Equals A when gamma_beta(0) = 0.
Mat reduced_drift(const SystemParams& params, const KernelSet& ks);

/// N(u) = int_{-u}^0 e^{-A tau} B gamma_beta(mu (tau + u)) dtau, 0 <= u <= h.
Mat n_function(const SystemParams& params, const KernelSet& ks, double u, int panels = 256);

/// g(u) = int_0^{h-u} e^{-A tau} B gamma_beta(mu (tau + u)) dtau.
Mat g_function(const SystemParams& params, const KernelSet& ks, double u, int panels = 256);

/// g'(u) by differentiating the bound and the integrand analytically.
Mat g_prime(const SystemParams& params, const KernelSet& ks, double u, int panels = 256);

/// Gamma(u) = B gamma_beta(mu u) + g'(u) - A g(u).
Mat gamma_fn(const SystemParams& params, const KernelSet& ks, double u, int panels = 256);

/// Precomputed e^{Au} + N(u) on a uniform lag grid of the delay window,
/// for repeated minimum-variance evaluations.
class MinimumVariance {
public:
    MinimumVariance(const SystemParams& params, const KernelSet& ks, int panels = 512);

    /// int_{t-h}^t sigma(s)' E(t-s)' W E(t-s) sigma(s) ds with E = e^{A.} + N(.).
    double operator()(double t, const Mat& W) const;
    double operator()(double t) const;

    /// e^{Au} + N(u) at lag node j (u = j h / panels).
    const Mat& window_gain(int j) const { return E_[static_cast<std::size_t>(j)]; }
    int panels() const { return static_cast<int>(E_.size()) - 1; }

private:
    Profile sigma_;
    double h_;
    std::vector<Mat> E_;
};

/// V_min(t) with weight W = I, or W = Q(t) when given. Requires t >= h.
double v_min(const SystemParams& params, const KernelSet& ks, const std::optional<Mat>& W,
             double t);

/// G(t_k) = sum_{j=1}^{min(L,k)} g(j dt) sigma(t_{k-j}) dW_{k-j} for k = 0 .. nt.
std::vector<Vec> rolling_G(const SystemParams& params, const KernelSet& ks,
                           const BrownianPath& path, const SpaceTimeGrid& grid);

/// Same sum for one step from precomputed lags g_lags[j] = g(j dt).
Vec rolling_sum(std::span<const Mat> lags, const Profile& sigma, double dt,
                std::span<const double> past_increments, int k);

enum class PlantModel { coupled, delayed };

/// One Monte Carlo experiment: plant, controller and what to record.
struct RunSpec {
    SystemParams params;
    std::shared_ptr<const KernelSet> ks;
    SpaceTimeGrid grid;
    Controller controller = Controller::open_loop();
    PlantModel plant = PlantModel::coupled;
    /// Cost weights; per-path costs are recorded when present.
    std::optional<LqWeights> weights;
    /// Steps at which X and e^{Ah} Ybar(t - h) are kept for every path.
    std::vector<int> probe_steps;
};

struct VarianceReport {
    std::vector<double> times;
    std::vector<Vec> mean_X;
    std::vector<double> var_X;       // trace of the sample covariance
    std::vector<double> stderr_var;  // delete-a-group jackknife
    std::vector<double> v_min;       // NaN before t = h
    int n_paths = 0;
};

struct PathCost {
    double state = 0.0;    // int_h^T X'QX dt
    double control = 0.0;  // int_0^{T-h} R V^2 dt
    double ybar = 0.0;     // int_0^{T-h} Ybar' Qbar Ybar dt
    double total() const { return state + control; }
};

struct ProbeSamples {
    int step = 0;
    std::vector<Vec> X;          // X(t) per path
    std::vector<Vec> predicted;  // e^{Ah} Ybar(t - h) per path
};

struct MonteCarloResult {
    VarianceReport report;
    /// Ensemble mean of X'QX + R V^2 per step (zero without weights).
    std::vector<double> cost_running;
    std::vector<PathCost> costs;  // path index order; empty without weights
    std::vector<ProbeSamples> probes;
};

/// Runs paths base_seed ^ i, i < n_paths, on `parallelism` threads. Output is
/// bit-identical for every parallelism >= 1.
MonteCarloResult monte_carlo(const RunSpec& setup, int n_paths, std::uint64_t base_seed,
                             int parallelism = 1);

/// Least-squares fit of log |mean_X(t)| against t over [t0, t1]; the slope
/// is the empirical exponential rate.
LinearFit log_mean_fit(const VarianceReport& report, double t0, double t1);

/// Number of steps with var_X < v_min - z * stderr_var (v_min defined).
int bound_violations(const VarianceReport& report, double z = 5.0);

/// Variance split at one probe: V_X(t) versus the variance of the
/// F_{t-h}-measurable part plus V_min(t).
struct DecompositionCheck {
    double t = 0.0;
    double var_X = 0.0;
    double var_predicted = 0.0;
    double v_min = 0.0;
    double std_error = 0.0;  // of var_X - var_predicted
    /// Correlation between the predicted part and the window remainder.
    double correlation = 0.0;
    double correlation_std_error = 0.0;

    double z_score() const;
};

DecompositionCheck variance_decomposition(const ProbeSamples& probe, double t, double v_min);

/// J_R in X-form against the Ybar form plus int_h^T V_min,Q dt.
struct CostCheck {
    double lhs = 0.0;
    double rhs = 0.0;
    double std_error = 0.0;  // of the paired difference
    double z_score() const;
};

CostCheck cost_decomposition_check(const MonteCarloResult& result, const SystemParams& params,
                                   const KernelSet& ks, const LqWeights& weights,
                                   const SpaceTimeGrid& grid);

/// Residuals of the predictor relations along one delayed-SDE path at the
/// given steps (each >= delay_steps and < nt).
struct ArtsteinResiduals {
    std::vector<int> steps;
    /// Y_{k+1} - e^{A dt}(Y_k + (Bbar V_k + r_k) dt): the noise part only.
    std::vector<Vec> predictor;
    /// Y_{k+1} - Y_k - (A Y_k + Bbar V_k + r_k) dt - sigma dW_k.
    std::vector<Vec> predictor_euler;
    /// X_k - e^{Ah} Y_{k-L} - sum_i e^{A i dt} r_{k-i} dt: the noise part only.
    std::vector<Vec> link_drift;
    /// link_drift minus the discrete window Ito sum; zero up to rounding.
    std::vector<Vec> link;
};

ArtsteinResiduals artstein_residuals(const DelayedSdeModel& model, const Trajectory& trajectory,
                                     const BrownianPath& path, const SpaceTimeGrid& grid,
                                     std::span<const int> steps);

/// g(j dt) and Gamma(j dt) for j = 0 .. L, with g(L dt) = 0 imposed.
struct LagTables {
    LagTables(const SystemParams& params, const KernelSet& ks, const SpaceTimeGrid& grid);
    std::vector<Mat> g;
    std::vector<Mat> Gamma;
};

/// Shifted predictor Ybar_k = Y_k + G_k and the one-step residual
///   Ybar_{k+1} - e^{A dt}(Ybar_k + (Bbar V_k + rbar_k) dt + (I + g(0)) sigma dW_k)
/// at the given steps (0 <= k < nt), rbar being the rolling sum of Gamma.
/// The residual is a zero-mean combination of past increments.
std::vector<Vec> ybar_residuals(const LagTables& tables, const DelayedSdeModel& model,
                                const Trajectory& trajectory, const BrownianPath& path,
                                const SpaceTimeGrid& grid, std::span<const int> steps);

/// Predictor sequence Y_k along a recorded trajectory (X and V_eff).
std::vector<Vec> artstein_sequence(const DelayedSdeModel& model, const Trajectory& trajectory,
                                   const SpaceTimeGrid& grid);

}  // namespace hypersde
