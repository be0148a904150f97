#pragma once

#include <map>
#include <string>
#include <vector>

#include "driftlab/calculus.hpp"
#include "driftlab/grid_function.hpp"
#include "driftlab/marginals.hpp"
#include "driftlab/measures.hpp"
#include "driftlab/models.hpp"

namespace driftlab {

struct CheckResult {
    std::string name;
    double statistic = 0.0;
    double tolerance = 0.0;
    double se = 0.0;
    bool pass = false;
};

struct ExperimentReport {
    std::string experiment;
    std::string config_hash;
    std::vector<CheckResult> checks;
    // Wall time is printed but kept out of the canonical JSON so identical
    // configs serialize byte-identically.
    double runtime_seconds = 0.0;

    bool all_pass() const;
    CheckResult& add(const std::string& name, double statistic, double tolerance,
                     double se = 0.0);
};

struct RunConfig {
    std::string model = "bm";
    std::size_t n_paths = 100000;
    std::uint64_t seed = 7;
    std::size_t steps = 256;
    double horizon = 1.0;
    std::string out_dir;  // empty: no artifacts written
    std::map<std::string, double> tolerance_overrides;

    double tol(const std::string& key, double fallback) const {
        auto it = tolerance_overrides.find(key);
        return it == tolerance_overrides.end() ? fallback : it->second;
    }
    std::string canonical_string() const;
    std::string hash() const;
};

// Residual of the backward equation b f_x + (1/2) sigma^2 f_xx + f_t on a
// rectangular window, partials by finite differences (forward in t, central
// in x) from pointwise samples of f.
struct ResidualGrid {
    std::vector<double> t_nodes, x_nodes;
    std::vector<double> values;  // row-major
    double max_abs = 0.0;
};
ResidualGrid backward_residual(const ModelSpec& model, const SurfaceEval& f, double t_lo,
                               double t_hi, double dt, double x_lo, double x_hi, double h);

// Smoothed tensor bumps (staircase ramps in t, trapezoids in x) tiling the
// box at dyadic scales: one bump over the whole box, then 2x2, 4x4, ...
std::vector<CompactGridFunction> theta_basis(double t_lo, double t_hi, double x_lo, double x_hi,
                                             double t_step, int scales = 3);

// Building block for the basis and the suites.
CompactGridFunction make_box_theta(double t0, double t1, double x0, double x1, double t_step,
                                   double x_ramp);
// Left-limit evaluator of a compact grid function.
SurfaceEval left_eval(const CompactGridFunction& theta);

// --- experiment suites ---------------------------------------------------

ExperimentReport gaussian_oracle_suite(const RunConfig& cfg);
ExperimentReport backward_consistency_suite(const RunConfig& cfg);
ExperimentReport martingale_surface_suite(const RunConfig& cfg);
ExperimentReport drift_identity_suite(const RunConfig& cfg);
ExperimentReport occupation_suite(const RunConfig& cfg);
ExperimentReport dirichlet_qv_suite(const RunConfig& cfg);
ExperimentReport symmetry_suite(const RunConfig& cfg);
ExperimentReport variation_suite(const RunConfig& cfg);
ExperimentReport uniqueness_suite(const RunConfig& cfg);

ExperimentReport run_suite(const std::string& name, const RunConfig& cfg);
std::vector<std::string> suite_names();

// Canonical JSON serialization (schema_version 1; excludes runtime).
std::string report_to_json(const ExperimentReport& report);

}  // namespace driftlab
