#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "driftlab/grid_function.hpp"
#include "driftlab/models.hpp"

namespace driftlab {

// Marginal-law surface C(t,x) = E[(X_t - x)_+] with its structural
// invariants: convex in x with slopes in [-1,0], vanishing beyond the upper
// x-range, matching E[X_t] - x below the lower range, and C + Var_X(t)
// nondecreasing in t.
struct CallSurface {
    GridFunction surface;                    // after convex projection
    std::vector<double> raw;                 // pre-projection estimates (row-major)
    std::vector<double> se;                  // per-node MC standard errors (empty for PDE)
    std::vector<double> mean_curve;          // E[X_t] per t-node
    std::vector<double> adjusted_variation;  // declared Var_X(t) bound per t-node
    double projection_distance = 0.0;        // RMS distance raw -> projected
    double snap_offset = 0.0;                // worst |requested t - snapped t|

    // Re-checks the invariants; tolerances cover Monte Carlo noise at the
    // range edges and in the t-monotonicity comparison.
    void validate(double edge_tol, double monotone_tol) const;
};

// Monte Carlo estimate projected onto the convex cone (pool-adjacent-violators
// on slopes, clamped to [-1,0]). Requested t-nodes snap to the nearest
// partition nodes; a 0 row is prepended when missing.
CallSurface estimate_call_surface(const PathEnsemble& ensemble, std::vector<double> x_nodes,
                                  std::vector<double> t_nodes,
                                  const std::function<double(double)>& variation_bound = {});

namespace serial_ref {
CallSurface estimate_call_surface(const PathEnsemble& ensemble, std::vector<double> x_nodes,
                                  std::vector<double> t_nodes,
                                  const std::function<double(double)>& variation_bound = {});
}  // namespace serial_ref

struct PdeGrid {
    double x_min = -8.0;
    double x_max = 8.0;
    std::size_t nx = 257;  // node count
    double t_max = 1.0;
    std::size_t nt = 256;  // step count
};

// Forward evolution of the call surface, dC/dt = (1/2) sigma^2(t,x) d2C/dx2,
// implicit Euler marching from C(0,x). Requires a driftless continuous model;
// the drift is probed on the grid and rejected if nonzero.
CallSurface call_surface_forward_pde(const ModelSpec& model,
                                     const std::function<double(double)>& initial_call,
                                     const PdeGrid& grid);

// Local volatility recovered from the surface: sigma^2 = 2 dC/dt / d2C/dx2 at
// an interior node. Returns nothing (never a fabricated number) when the
// discrete curvature is at or below the floor or the ratio is negative.
std::optional<double> dupire_sigma(const CallSurface& surface, std::size_t t_index,
                                   std::size_t x_index, double curvature_floor = 1e-8);
std::optional<double> dupire_sigma_at(const CallSurface& surface, double t, double x,
                                      double curvature_floor = 1e-8);

struct DensitySlice {
    double t = 0.0;
    std::vector<double> values;  // nonnegative density at x-nodes
    double clipped_mass = 0.0;   // negative curvature removed by clipping
    double mass = 0.0;           // integral over the grid range
};

// Discrete second x-derivative of the surface at the row governing t.
DensitySlice density(const CallSurface& surface, double t);

struct ConvexPayoff {
    std::function<double(double)> g;
    double lipschitz;
};

// f(t,x) = E[g(X_T) | X_t = x] for a driftless continuous model, solved by
// implicit finite differences on the backward equation
// df/dt + (1/2) sigma^2 d2f/dx2 = 0 with terminal data g. The output is
// checked to be convex in x and nonincreasing in t (within structure_tol);
// violations throw.
GridFunction conditional_expectation_surface(const ModelSpec& model, const ConvexPayoff& payoff,
                                             double maturity, const PdeGrid& grid,
                                             double structure_tol = 1e-9);

// Weighted isotonic regression (pool-adjacent-violators), nondecreasing fit.
std::vector<double> pav_nondecreasing(std::span<const double> values,
                                      std::span<const double> weights);

}  // namespace driftlab
