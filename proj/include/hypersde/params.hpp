#pragma once

#include "hypersde/profile.hpp"
#include "hypersde/types.hpp"

namespace hypersde {

/// Constants and profile functions of the coupled transport-PDE / SDE plant
///
///   dX      = (A X + B v(t,0)) dt + sigma(t) dW
///   u_t + lambda u_x = eta_plus(x) v
///   v_t - mu v_x     = eta_minus(x) u
///   u(t,0) = q v(t,0) + M X,   v(t,1) = rho u(t,1) + V_in(t)
///
/// on [0, T] x [0, 1]. n is the SDE dimension; the PDE is scalar.
struct SystemParams {
    double lambda = 1.0;
    double mu = 1.0;
    Profile eta_plus = Profile::constant(0.0);
    Profile eta_minus = Profile::constant(0.0);
    double q = 1.0;
    double rho = 0.0;
    Mat A;      // n x n
    Vec B;      // n x 1
    RowVec M;   // 1 x n
    Profile sigma = Profile::constant(0.0);  // [0,T] -> R^n
    Vec X0;
    Profile u0 = Profile::constant(0.0);
    Profile v0 = Profile::constant(0.0);
    double T = 1.0;

    int n() const { return static_cast<int>(A.rows()); }
    /// Transport time of the v-channel from the actuated boundary to x = 0.
    double delay() const { return 1.0 / mu; }

    Vec sigma_at(double t) const { return sigma.vec(t); }

    /// Throws InvalidArgument on shape mismatches, lambda/mu <= 0, q == 0,
    /// |rho q| >= 1 or T <= 1/mu.
    void validate() const;

    friend bool operator==(const SystemParams&, const SystemParams&);
};

/// Scalar benchmark: A = 0.6, B = 1, sigma = 0.6, X0 = 2, mu = 2, lambda = 1,
/// eta+ = eta- = 0.3, M = rho = 1, q = 0.25, T = 4, zero PDE initial data.
SystemParams fig1_params();

/// Same plant with eta+ = eta- = 0 and M = 0: the PDE no longer sees X.
SystemParams decoupled_params();

}  // namespace hypersde
