#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "driftlab/models.hpp"

namespace driftlab {

enum class Side { left, right };

// Generic pointwise surface evaluator used wherever a functional accepts an
// arbitrary bounded test function rather than a grid representation.
using SurfaceEval = std::function<double(double /*t*/, double /*x*/)>;

// A surface f(t,x) that is piecewise linear in x between its x-nodes, constant
// beyond the x-range, and right-continuous piecewise constant in t: on
// [s_i, s_{i+1}) the function equals its row at s_i. Every instance has
// one-sided x-derivatives everywhere, a global x-Lipschitz bound, and a purely
// atomic time-variation measure (atoms at the t-nodes), so Lebesgue-Stieltjes
// integrals against d_t f are finite sums.
class GridFunction {
public:
    GridFunction() = default;
    GridFunction(std::vector<double> t_nodes, std::vector<double> x_nodes,
                 std::vector<double> values, double lipschitz_x);

    static GridFunction from_samples(std::vector<double> t_nodes, std::vector<double> x_nodes,
                                     const std::function<double(double, double)>& fn,
                                     double lipschitz_x = -1.0);

    const std::vector<double>& t_nodes() const { return t_nodes_; }
    const std::vector<double>& x_nodes() const { return x_nodes_; }
    double lipschitz_x() const { return lipschitz_x_; }
    std::size_t n_rows() const { return t_nodes_.size(); }
    std::size_t n_cols() const { return x_nodes_.size(); }

    double at(std::size_t row, std::size_t col) const { return values_[row * n_cols() + col]; }
    double& at(std::size_t row, std::size_t col) { return values_[row * n_cols() + col]; }
    std::span<const double> row(std::size_t i) const {
        return {values_.data() + i * n_cols(), n_cols()};
    }

    // Index of the row governing time t (right-continuous convention).
    std::size_t row_at(double t) const;
    // Index of the row giving the left limit at t: the last node strictly
    // before t, with row 0 at t <= s_0 (the convention f^-(0,.) = f(0,.)).
    std::size_t row_left(double t) const;

    double eval(double t, double x) const;
    double eval_row(std::size_t row, double x) const;

    // Slope of x-segment seg (between x-nodes seg and seg+1) in a given row.
    double slope(std::size_t row, std::size_t seg) const;
    double one_sided_x_derivative(double t, double x, Side side) const;
    double derivative_row(std::size_t row, double x, Side side) const;

    // Node-atom representation of f^-: row i of the result holds row i-1, so
    // reading it at the t-nodes gives the left limits used in atom sums. As a
    // function of continuous time it differs from the true left limit on the
    // open intervals (where f^- = f); use row_left() for pointwise left
    // evaluation.
    GridFunction left_limit() const;

    // Total variation of t -> f(t, x_j) over the window (t0, t1]; additive
    // over adjoining windows.
    double t_variation(std::size_t x_index, double t0, double t1) const;

    // Re-checks the class membership invariants: strictly increasing nodes,
    // first t-node at 0, finite values, slope magnitudes within the declared
    // Lipschitz bound. Throws std::logic_error on violation.
    void validate() const;

    double max_abs() const;

private:
    std::vector<double> t_nodes_;
    std::vector<double> x_nodes_;
    std::vector<double> values_;  // row-major, n_rows x n_cols
    double lipschitz_x_ = 0.0;
};

struct SupportBox {
    double t_lo = 0.0, t_hi = 0.0;
    double x_lo = 0.0, x_hi = 0.0;
};

// Member of the compactly supported subclass: vanishes outside a declared box
// with t_lo > 0.
class CompactGridFunction {
public:
    CompactGridFunction() = default;
    CompactGridFunction(GridFunction fn, SupportBox box);

    // Tensor product p_t(i) * p_x(j) of a time staircase and an x-profile.
    static CompactGridFunction tensor(std::vector<double> t_nodes, std::vector<double> t_profile,
                                      std::vector<double> x_nodes, std::vector<double> x_profile);

    const GridFunction& fn() const { return fn_; }
    const SupportBox& box() const { return box_; }

    void validate() const;

private:
    GridFunction fn_;
    SupportBox box_;
};

// One evaluated series Y_t = f(t, X_t) along a path, with its jump ledger.
// Jumps of Y come from the path's recorded x-jumps and from the t-atoms of f;
// each event splits into the x part f(t, X_t) - f(t, X_{t-}) and the t part
// f(t, X_{t-}) - f(t-, X_{t-}).
struct PathSeries {
    std::vector<double> node_values;
    struct Event {
        double time;
        double y_pre, y_post;
        double x_part, t_part;
        bool from_path_jump;
    };
    std::vector<Event> events;
};

PathSeries eval_on_path(const GridFunction& f, std::span<const double> path_values,
                        const Partition& partition, std::span<const JumpRecord> jumps);

// --- Mollification -------------------------------------------------------

// C^2 density proportional to (s(1-s))^3 on (0,1).
struct TimeKernel {
    double density(double s) const;
    double cumulative(double s) const;  // integral from 0 to s
};

// C^2 density proportional to (1-y^2)^3 on [-1,1].
struct SpaceKernel {
    double density(double y) const;
    double cumulative(double y) const;        // integral from -1 to y
    double first_moment_cum(double y) const;  // integral of u*density from -1 to y
};

// theta^n(t,x) = int_0^1 theta(t - s/n, x) kernel(s) ds, evaluated exactly on
// the piecewise-constant-in-t representation.
class TimeMollified {
public:
    TimeMollified(CompactGridFunction theta, TimeKernel kernel, int n);
    double eval(double t, double x) const;
    int n() const { return n_; }
    const CompactGridFunction& base() const { return theta_; }

private:
    CompactGridFunction theta_;
    TimeKernel kernel_;
    int n_;
};

// theta^n(t,x) = int theta(t, x + y/n) kernel(y) dy; twice differentiable in x.
class SpaceMollified {
public:
    SpaceMollified(CompactGridFunction theta, SpaceKernel kernel, int n);
    double eval(double t, double x) const;
    double d_dx(double t, double x) const;
    double d2_dx2(double t, double x) const;
    int n() const { return n_; }

private:
    CompactGridFunction theta_;
    SpaceKernel kernel_;
    int n_;
};

// Throws (naming the minimal admissible n) unless support(theta) stays inside
// (1/n, infinity) in time.
TimeMollified mollify_time(const CompactGridFunction& theta, TimeKernel kernel, int n);
SpaceMollified mollify_space(const CompactGridFunction& theta, SpaceKernel kernel, int n);

// --- Grid alignment ------------------------------------------------------

// Sorted union with near-duplicate collapsing; inputs must be sorted.
std::vector<double> merge_nodes(std::span<const double> a, std::span<const double> b);

// Exact resampling onto a refinement of the function's own grid (the result
// represents the same function when the new grids contain the old nodes).
GridFunction resample(const GridFunction& f, const std::vector<double>& t_nodes,
                      const std::vector<double>& x_nodes);

}  // namespace driftlab
