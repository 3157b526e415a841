#include "hypersde/grid.hpp"

#include <algorithm>
#include <cmath>

namespace hypersde {

SpaceTimeGrid make_grid(const SystemParams& params, int nx, int time_refinement) {
    if (nx < 2) throw InvalidArgument("grid: nx must be at least 2");
    if (time_refinement < 1) throw InvalidArgument("grid: time_refinement must be positive");
    if (!(params.lambda > 0.0) || !(params.mu > 0.0))
        throw InvalidArgument("grid: transport speeds must be positive");
    if (!(params.T > 0.0)) throw InvalidArgument("grid: horizon must be positive");

    const double ratio = std::max(1.0, params.lambda / params.mu);
    const int base = static_cast<int>(std::ceil(nx * ratio - 1e-9)) * time_refinement;

    // steps per delay window; prefer one that makes T an exact multiple of dt
    int steps = base;
    bool aligned = false;
    for (int s = base; s <= 64 * base; s += time_refinement) {
        const double n = params.T * params.mu * s;
        if (std::abs(n - std::round(n)) <= 1e-9 * n) {
            steps = s;
            aligned = true;
            break;
        }
    }

    SpaceTimeGrid g;
    g.nx = nx;
    g.dx = 1.0 / nx;
    g.delay_steps = steps;
    g.dt = 1.0 / (params.mu * steps);
    const double n = params.T * params.mu * steps;
    g.nt = aligned ? static_cast<int>(std::llround(n)) : static_cast<int>(std::ceil(n));
    g.cfl_lambda = params.lambda * g.dt / g.dx;
    g.cfl_mu = params.mu * g.dt / g.dx;
    return g;
}

}  // namespace hypersde
