#pragma once

#include <functional>
#include <vector>

#include "driftlab/grid_function.hpp"
#include "driftlab/models.hpp"
#include "driftlab/stats.hpp"

namespace driftlab {

// Three grid functions resampled onto a common refinement; exact for the
// piecewise representation.
struct AlignedTriple {
    GridFunction f, g, theta;
};
AlignedTriple align(const GridFunction& f, const GridFunction& g, const GridFunction& theta);

// The Stieltjes bilinear pairing of two surfaces against a compactly
// supported test function:
//
//   int f_x g_x d_t(theta) dx
//     - int theta_x^- f_x^- d_t(g) dx - int g_x^- theta_x^- d_t(f) dx
//
// where the superscript minus takes the previous time row. Every term is a
// finite sum over t-atoms of exact x-quadratures; the evaluation order makes
// the value bit-identical under exchanging f and g.
double bilinear_functional(const GridFunction& f, const GridFunction& g,
                           const CompactGridFunction& theta);

// The same functional viewed as a linear map of the middle argument's node
// values: bilinear(f, C, theta) = sum_{i,j} w[i][j] * C(t_nodes[i], x_nodes[j])
// for any surface C sampled on (t_nodes, x_nodes) and treated as a member of
// the grid class. Used to push Monte Carlo noise through the functional one
// path at a time.
struct SurfaceFunctional {
    std::vector<double> t_nodes;
    std::vector<double> x_nodes;
    std::vector<double> weights;  // row-major

    double weight(std::size_t i, std::size_t j) const { return weights[i * x_nodes.size() + j]; }

    // Applies the functional to the call profile of a single path:
    // C_p(t, x) = (X_p(t) - x)_+ with X_p linearly interpolated off-node.
    double apply_call_profile(std::span<const double> path_values,
                              const Partition& partition) const;
    // Applies to an arbitrary surface given by its values on our grid.
    double apply(const GridFunction& surface) const;
};
SurfaceFunctional bilinear_in_second(const GridFunction& f, const CompactGridFunction& theta,
                                     const std::vector<double>& t_nodes,
                                     const std::vector<double>& x_nodes);

// Signed integral over one jump (Definition of the jump functional):
//   int_{x_pre}^{x_post} (f(t,x) - f(t,x_post) + (x_post - x) f_x^-(t,x))
//                        theta_x^-(t,x) dx
// computed in closed form per linear segment.
double jump_functional(const CompactGridFunction& theta, const GridFunction& f, double t,
                       double x_pre, double x_post);

// Sum of the jump functional over one path's recorded jumps.
double path_jump_sum(const CompactGridFunction& theta, const GridFunction& f,
                     std::span<const JumpRecord> jumps);

// Drift functional mu_X(theta) ~ E[ int theta(t, X_{t-}) dA_t ] by left-point
// sums over the partition (previsible evaluation) and a Monte Carlo average.
std::vector<double> per_path_drift_sums(const PathEnsemble& ensemble, const ModelSpec& model,
                                        const SurfaceEval& theta);
MeanSE drift_functional(const PathEnsemble& ensemble, const ModelSpec& model,
                        const SurfaceEval& theta);

namespace serial_ref {
std::vector<double> per_path_drift_sums(const PathEnsemble& ensemble, const ModelSpec& model,
                                        const SurfaceEval& theta);
}  // namespace serial_ref

// Exact x-antiderivative Phi(t,x) = int_{-inf}^x theta_x^-(t,y) f_x^-(t,y) dy
// on the common refinement of theta and f (piecewise linear in x per row).
class SlopeProductAntiderivative {
public:
    SlopeProductAntiderivative(const CompactGridFunction& theta, const GridFunction& f);
    double operator()(double t, double x) const;

private:
    std::vector<double> t_nodes_, x_nodes_;
    std::vector<double> cum_;       // row-major cumulative integral at x-nodes
    std::vector<double> slopeprod_;  // row-major product of slopes per segment
};

// The generalized drift functional: reconstructs the drift of f(t, X_t) from
// the marginal surface, the drift measure of X and the jump ledger,
//   bilinear(f, C)(theta) + mu_X(Phi) + E[sum_t J_t(theta, f)].
struct ReconstructedDrift {
    double total = 0.0;
    double bilinear_term = 0.0;
    MeanSE drift_term;
    MeanSE jump_term;
};
ReconstructedDrift reconstructed_drift(const GridFunction& f, const CompactGridFunction& theta,
                                       const GridFunction& call_surface,
                                       const PathEnsemble& ensemble, const ModelSpec& model);

// A local signed measure on R_+ x R: an absolutely continuous part given by a
// piecewise-constant density on a (t,x) cell grid plus finitely many atomic
// times carrying piecewise-linear x-profiles.
class LocalSignedMeasure {
public:
    struct Atom {
        double t;
        std::vector<double> profile;  // density in x on atom_x_nodes
    };

    LocalSignedMeasure() = default;
    LocalSignedMeasure(std::vector<double> t_edges, std::vector<double> x_edges,
                       std::vector<double> cell_density, std::vector<double> atom_x_nodes = {},
                       std::vector<Atom> atoms = {});

    double cell(std::size_t i, std::size_t j) const {
        return cell_density_[i * (x_edges_.size() - 1) + j];
    }
    const std::vector<double>& t_edges() const { return t_edges_; }
    const std::vector<double>& x_edges() const { return x_edges_; }

    // integral of theta against the measure (theta as grid function).
    double eval(const GridFunction& theta) const;
    // |mu|(theta) for theta >= 0: integral of theta against |density| plus
    // atom absolute masses.
    double variation(const GridFunction& theta) const;
    // Total mass of |mu| over the whole carrier.
    double total_variation() const;

private:
    std::vector<double> t_edges_, x_edges_;
    std::vector<double> cell_density_;
    std::vector<double> atom_x_nodes_;
    std::vector<Atom> atoms_;
};

// Exact integral of theta(row, x) over [a, b] (piecewise linear x-rep).
double integrate_row(const GridFunction& theta, std::size_t row, double a, double b);

}  // namespace driftlab
