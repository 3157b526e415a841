#pragma once

#include "hypersde/params.hpp"

namespace hypersde {

/// Uniform space-time lattice for explicit upwind transport.
///
/// The step is dt = h / delay_steps with h = 1/mu, so the boundary delay is
/// an exact number of steps and nt * dt hits T.
struct SpaceTimeGrid {
    int nx = 0;
    double dx = 0.0;
    double dt = 0.0;
    int nt = 0;
    int delay_steps = 0;
    double cfl_lambda = 0.0;
    double cfl_mu = 0.0;

    double time(int k) const { return k * dt; }
    double x(int i) const { return i * dx; }
    double horizon() const { return nt * dt; }
    double delay() const { return delay_steps * dt; }
};

/// Builds the coarsest CFL-valid grid with nx spatial cells. `time_refinement`
/// multiplies the number of steps per delay window (1 gives CFL = 1 on the
/// faster characteristic family).
SpaceTimeGrid make_grid(const SystemParams& params, int nx, int time_refinement = 1);

}  // namespace hypersde
