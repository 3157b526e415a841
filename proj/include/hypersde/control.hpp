#pragma once

#include <complex>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "hypersde/sim.hpp"

namespace hypersde {

/// Backstepping part of the boundary input:
///   V_BS = -rho u(1) - gamma_beta(1) X - int_0^1 K_vu(1,y) u dy - int_0^1 K_vv(1,y) v dy
/// with trapezoidal integrals on the kernel grid.
double v_bs(const SystemParams& params, const Vec& u, const Vec& v, const Vec& X,
            const KernelSet& ks);

/// Artstein predictor for dX = (A X + B V(t - h) + r) dt + sigma dW on a grid
/// with h = L dt. Holds the last L control values; the integral
/// int_{t-h}^t e^{A(t-s-h)} B V(s) ds is the left-point sum
///   S_k = dt * sum_{i=1}^{L} e^{A(i dt - h)} B V_{k-i},
/// which makes the discrete predictor dynamics exact for the
/// exponential-Euler plant. S is updated in O(1) per push through
///   S_{k+1} = e^{A dt} (S_k + dt (Bbar V_k - B V_{k-L})).
class ArtsteinState {
public:
    /// history: V on [-h, 0), oldest first, exactly L entries.
    ArtsteinState(const Mat& A, const Vec& B, double dt, int delay_steps,
                  std::span<const double> history);

    double h() const { return h_; }
    double dt() const { return dt_; }
    int delay_steps() const { return L_; }
    const Vec& Bbar() const { return Bbar_; }

    /// Y = X + predictor integral over the current buffer.
    Vec predict(const Vec& X) const;
    /// Appends V_k; the oldest value drops out.
    void push(double value);
    /// Buffered value V_{k-i}, 1 <= i <= L, for the next predict().
    double lag(int i) const;
    /// Current predictor integral S_k.
    const Vec& integral() const { return S_; }

private:
    double h_;
    double dt_;
    int L_;
    Vec B_;
    Vec Bbar_;
    Mat expAdt_;
    Vec S_;
    std::vector<double> buffer_;
    std::size_t head_ = 0;  // slot of V_{k-1}
};

Vec artstein_predict(const ArtsteinState& state, const Vec& X);

/// Ackermann placement of the spectrum of A - Bbar K, Bbar = e^{-A h} B.
/// Complex poles must come in conjugate pairs. Throws NotControllable or
/// InvalidArgument.
RowVec stabilizing_gain(const Mat& A, const Vec& B, double h,
                        const std::vector<std::complex<double>>& poles);

/// Default pole set -1, -1.5, -2, ... of length n.
std::vector<std::complex<double>> default_poles(int n);

/// V_eff = -K Y with Y the Artstein prediction under model.A / model.B.
Controller feedback_controller(const RowVec& K, const DelayedSdeModel& model);

/// Weights of the cost E int_h^T X'QX dt + E int_0^{T-h} R V^2 dt.
struct LqWeights {
    std::function<Mat(double)> Q;
    std::function<double(double)> R;

    static LqWeights constant(const Mat& Q, double R);

    /// e^{A'h} Q(t + h) e^{Ah}.
    Mat Qbar(double t, double h, const Mat& expAh) const;
};

/// Riccati data and the phi machinery of the optimal law on the grid
/// t_k = k dt, k = 0 .. K with K dt = T - h.
struct LqSolution {
    double dt = 0.0;
    double h = 0.0;
    int K = 0;
    int L = 0;
    Mat A;
    Vec B;
    Vec Bbar;
    Mat expAh;
    std::function<double(double)> R;
    std::function<Mat(double)> Qbar;

    std::vector<Mat> P;     // P[k] = P(t_k), P[K] = 0
    std::vector<Mat> Pdot;  // Riccati right-hand side at the nodes

    /// g(j dt) and Gamma(j dt), j = 0 .. L.
    std::vector<Mat> g_lags;
    std::vector<Mat> Gamma_lags;

    /// phi kernel F(k, j) = int_{t_k}^{min(t_{k-j}+h, T-h)} Phi(t_k,tau) P(tau)
    /// Gamma(tau - t_{k-j}) dtau for k = 0 .. K, j = 1 .. L, stored flat
    /// (column-major n x n blocks).
    std::vector<double> F_flat;
    /// g(j dt) flat, same layout, j = 0 .. L.
    std::vector<double> g_flat;

    int n() const { return static_cast<int>(A.rows()); }
    Mat phi_kernel(int k, int j) const;

    /// P at any t in [0, T-h] by cubic Hermite interpolation.
    Mat P_at(double t) const;
    Mat Pi_at(double t) const;
};

/// Backward RK4 solve of the Riccati equation from P(T-h) = 0 plus the g,
/// Gamma and phi tables. model supplies A, B, h, the gamma_beta lags and the
/// grid step; gamma_beta is read from ks.
LqSolution solve_lq(const SystemParams& params, const KernelSet& ks,
                    const DelayedSdeModel& model, const LqWeights& weights,
                    const SpaceTimeGrid& grid);

/// Riccati part only (no g / Gamma / phi tables), on K steps of size dt.
LqSolution solve_riccati(const LqWeights& weights, const Mat& A, const Vec& Bbar, double h,
                         double T_minus_h, double dt);

/// Replaces Gamma by the given samples (j = 0 .. L) and rebuilds the phi table.
void set_gamma(LqSolution& lq, std::vector<Mat> gamma_lags);

/// Phi(t, tau) with d/dt Phi = Pi(t) Phi, Phi(tau, tau) = I, by RK4 with
/// steps no longer than dt.
Mat fundamental_matrix(const LqSolution& lq, double t, double tau);

/// phi(t_k) = sum_{j=1}^{min(L,k)} F(k, j) sigma(t_{k-j}) dW_{k-j}.
/// Only increments with index < k are read.
Vec compute_phi(const LqSolution& lq, std::span<const double> past_increments,
                const Profile& sigma, int k);

/// V_eff = -R^{-1} Bbar' (P Ybar + phi) on [0, T-h], zero afterwards.
Controller lq_controller(std::shared_ptr<const LqSolution> lq, const Profile& sigma);

}  // namespace hypersde
