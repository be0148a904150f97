#pragma once

#include <functional>
#include <span>
#include <vector>

#include "driftlab/grid_function.hpp"
#include "driftlab/models.hpp"
#include "driftlab/stats.hpp"

namespace driftlab {

struct JumpDelta {
    double time;
    double delta;
};

// Partition quadratic covariation of two series sampled on a refinement: the
// cumulative sum of increment products along the chosen coarse nodes, the
// ledger of recorded common jumps (Delta[X,Y] = DeltaX DeltaY), and the
// continuous part (their difference).
struct QVPath {
    std::vector<double> times;
    std::vector<double> qv;
    std::vector<double> jump_ledger;
    std::vector<double> continuous;
};

QVPath qv_partition(std::span<const double> x_values, std::span<const double> y_values,
                    const Partition& fine, std::span<const std::size_t> coarse_nodes,
                    std::span<const JumpDelta> x_jumps = {},
                    std::span<const JumpDelta> y_jumps = {});

// Twice continuously differentiable field with supplied partials.
struct SmoothField {
    std::function<double(double, double)> f;     // f(t,x)
    std::function<double(double, double)> f_t;   // d/dt
    std::function<double(double, double)> f_x;   // d/dx
    std::function<double(double, double)> f_xx;  // d2/dx2
};

// Local-martingale / drift split of Y_t = f(t, X_t) along one path, assembled
// from the explicit drift of the smooth case:
//   dA = (1/2) f_xx d[X]^c + f_x dA^X + f_t dt + jump corrections,
// with d[X]^c = sigma^2 dt (exact for generator models) and per-jump
// correction int_{pre}^{post} (post - x) f_xx(t,x) dx by Gauss quadrature.
struct DriftDecomposition {
    std::vector<double> drift;       // A at partition nodes, A_0 = 0
    std::vector<double> martingale;  // M = Y - A
};
DriftDecomposition ito_decompose_path(const SmoothField& field, const ModelSpec& model,
                                      const Partition& partition,
                                      std::span<const double> path_values,
                                      std::span<const JumpRecord> jumps);

struct ItoDriftResult {
    MeanSE functional;             // E[int theta(t, X_{t-}) dA_t]
    std::vector<double> per_path;  // per-path functional values
};
// theta should already be the left-limit version when one is intended.
ItoDriftResult ito_drift(const SmoothField& field, const PathEnsemble& ensemble,
                         const ModelSpec& model, const SurfaceEval& theta);

namespace serial_ref {
ItoDriftResult ito_drift(const SmoothField& field, const PathEnsemble& ensemble,
                         const ModelSpec& model, const SurfaceEval& theta);
}  // namespace serial_ref

// Compares the partition quadratic variation of Y = f(t, X_t) against
// int f_x(s, X_s)^2 d[X]^c_s + sum (Delta Y_s)^2 across coarsening meshes.
struct QVCheckRow {
    double mesh;
    double lhs_mean, lhs_se;
    double rel_error;
};
struct QVCheckReport {
    std::vector<QVCheckRow> rows;  // coarsest first
    double rhs_mean = 0.0, rhs_se = 0.0;
};
QVCheckReport dirichlet_qv_check(const GridFunction& f, const PathEnsemble& ensemble,
                                 const ModelSpec& model, std::span<const std::size_t> strides);

// Conditional variation estimate: sum over coarse steps of
// E[| E[X_{t_{k+1}} - X_{t_k} | X_{t_k}] |], inner expectations by equal-mass
// binning on the conditioning state. The estimator carries an upward bias of
// order one bin standard error; the cumulative bound is reported, not hidden.
struct BinnedVariationResult {
    std::vector<double> times;
    std::vector<double> estimate;    // cumulative
    std::vector<double> bias_bound;  // cumulative sum of weighted bin SEs
    std::vector<double> se;          // sqrt of cumulative sum of squared weighted bin SEs
    std::size_t n_bins_used = 0;

    double total() const { return estimate.back(); }
};

BinnedVariationResult conditional_variation(const PathEnsemble& ensemble,
                                            std::span<const std::size_t> coarse_nodes,
                                            std::size_t n_bins = 64,
                                            std::size_t min_occupancy = 8);

// Reversed-time conditional variation of a path functional A (values given
// path-major on the ensemble partition): sum over coarse steps of
// E[| E[A_{t_k} - A_{t_{k-1}} | X_{t_k}] |], conditioning on the future-side
// state. Feasible conditioning only, so the estimate is a lower bound for the
// supremum over all future-measurable weights.
BinnedVariationResult reversed_conditional_variation(const PathEnsemble& ensemble,
                                                     std::span<const double> a_values,
                                                     std::span<const std::size_t> coarse_nodes,
                                                     std::size_t n_bins = 64,
                                                     std::size_t min_occupancy = 8);

}  // namespace driftlab
