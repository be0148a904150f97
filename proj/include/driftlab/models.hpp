#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "driftlab/rng.hpp"
#include "driftlab/stats.hpp"

namespace driftlab {

using CoeffFn = std::function<double(double /*t*/, double /*x*/)>;

// Compound-Poisson component with constant rates and fixed displacements.
struct JumpAtom {
    double rate;  // arrivals per unit time
    double size;  // post-jump level is x + size
};

// Jump component given by an intensity and a size kernel with a density:
// arrivals at rate lambda(t,x), post-jump level sampled from a distribution
// with density j(t,x,y)/lambda(t,x).
struct JumpDensity {
    CoeffFn intensity;                                          // lambda(t,x) >= 0
    double intensity_bound;                                     // sup of lambda on the domain
    std::function<double(double, double, double)> density;      // j(t,x,y)
    std::function<double(double, double, Rng&)> sample_target;  // draws y given (t,x)
    CoeffFn mean_displacement;  // kappa(t,x) = int (y-x) j(t,x,y) dy
};

using JumpKernel = std::variant<std::monostate, std::vector<JumpAtom>, JumpDensity>;

// Generator-form model description: the generator applied to the identity
// returns `drift`, so the previsible drift of the simulated process is
// int b(s, X_s) ds. The simulator applies jumps raw and compensates them in
// the continuous increment (effective rate b - kappa).
struct ModelSpec {
    std::string tag;
    CoeffFn drift;  // b(t,x), generator form
    CoeffFn vol;    // sigma(t,x) >= 0
    JumpKernel jumps{};
    std::function<double(Rng&)> initial_law;
    double horizon = 1.0;
    double explosion_bound = 1e6;

    bool has_jumps() const { return !std::holds_alternative<std::monostate>(jumps); }
    double jump_intensity(double t, double x) const;
    double jump_intensity_bound() const;
    // kappa(t,x): expected displacement per unit time due to jumps.
    double jump_mean_displacement(double t, double x) const;
    // Post-jump level given pre-jump state.
    double sample_jump(double t, double x, Rng& rng) const;
};

struct Partition {
    std::vector<double> times;  // 0 = t_0 < t_1 < ... < t_N

    static Partition uniform(double t_max, std::size_t steps);

    std::size_t steps() const { return times.empty() ? 0 : times.size() - 1; }
    double t_max() const { return times.back(); }
    double mesh() const;
    void validate() const;

    // Node indices of a coarser partition whose times form a subset of this
    // one (nearest-node snapping; used to coarsen estimators).
    std::vector<std::size_t> subsample_indices(std::size_t stride) const;
};

struct JumpRecord {
    double time;
    double pre;   // X_{t-}
    double post;  // X_t
};

// Simulated sample paths on a common partition. Node values are stored
// path-major; the ensemble is immutable after construction.
struct PathEnsemble {
    Partition partition;
    std::size_t n_paths = 0;
    std::vector<double> values;  // n_paths x (N+1), path-major
    std::vector<std::vector<JumpRecord>> jumps;
    std::uint64_t seed = 0;
    std::string model_tag;

    double value(std::size_t path, std::size_t node) const {
        return values[path * partition.times.size() + node];
    }
    std::span<const double> path(std::size_t p) const {
        return {values.data() + p * partition.times.size(), partition.times.size()};
    }
    void validate() const;
};

// Euler-Maruyama with left-point coefficients; jumps by thinning against the
// model's intensity bound, at most one accepted jump per cell. Deterministic
// given (model, partition, n_paths, seed): every path draws from its own
// counter-derived stream.
PathEnsemble simulate(const ModelSpec& model, const Partition& partition,
                      std::size_t n_paths, std::uint64_t seed);

namespace serial_ref {
// Single-threaded driver over the same per-path kernel; must agree with
// simulate() bit for bit.
PathEnsemble simulate(const ModelSpec& model, const Partition& partition,
                      std::size_t n_paths, std::uint64_t seed);
}  // namespace serial_ref

// Per-path drift process A_t = int_0^t b(s, X_s) ds by left-point quadrature,
// stored at partition nodes, path-major like the ensemble values.
struct DriftPaths {
    Partition partition;
    std::size_t n_paths = 0;
    std::vector<double> values;

    double value(std::size_t path, std::size_t node) const {
        return values[path * partition.times.size() + node];
    }
    std::span<const double> path(std::size_t p) const {
        return {values.data() + p * partition.times.size(), partition.times.size()};
    }
};

DriftPaths drift_path(const ModelSpec& model, const PathEnsemble& ensemble);

// A twice-differentiable test function with supplied derivatives.
struct C2Function {
    std::function<double(double)> f;
    std::function<double(double)> df;
    std::function<double(double)> d2f;
};

struct QuadratureOptions {
    double y_min = -50.0;
    double y_max = 50.0;
    double tol = 1e-10;
    int max_depth = 40;
};

struct GeneratorValue {
    double value = 0.0;          // L_t f(x)
    double jump_integral = 0.0;  // integral term alone
    double quad_error = 0.0;     // quadrature error estimate (density kernels)
};

class QuadratureError : public std::runtime_error {
public:
    QuadratureError(const std::string& msg, double residual)
        : std::runtime_error(msg), residual_(residual) {}
    double residual() const { return residual_; }

private:
    double residual_;
};

// Applies the model's generator to f at (t,x):
//   (1/2) sigma^2 f'' + b f' + int (f(y) - f(x) - (y-x) f'(x)) j(t,x,y) dy.
// Atom kernels are summed exactly; density kernels use adaptive quadrature on
// [y_min, y_max] and throw QuadratureError if the tolerance is not met.
GeneratorValue generator_apply(const ModelSpec& model, const C2Function& f, double t,
                               double x, const QuadratureOptions& opts = {});

// Adaptive Simpson quadrature (shared with the generator's jump integral).
double adaptive_simpson(const std::function<double(double)>& g, double a, double b,
                        double tol, int max_depth, double* err_estimate = nullptr);

}  // namespace driftlab
