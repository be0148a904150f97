#include "driftlab/models.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace driftlab {

double ModelSpec::jump_intensity(double t, double x) const {
    if (const auto* atoms = std::get_if<std::vector<JumpAtom>>(&jumps)) {
        double s = 0.0;
        for (const auto& a : *atoms) s += a.rate;
        return s;
    }
    if (const auto* dens = std::get_if<JumpDensity>(&jumps)) return dens->intensity(t, x);
    return 0.0;
}

double ModelSpec::jump_intensity_bound() const {
    if (const auto* atoms = std::get_if<std::vector<JumpAtom>>(&jumps)) {
        double s = 0.0;
        for (const auto& a : *atoms) s += a.rate;
        return s;
    }
    if (const auto* dens = std::get_if<JumpDensity>(&jumps)) return dens->intensity_bound;
    return 0.0;
}

double ModelSpec::jump_mean_displacement(double t, double x) const {
    if (const auto* atoms = std::get_if<std::vector<JumpAtom>>(&jumps)) {
        double s = 0.0;
        for (const auto& a : *atoms) s += a.rate * a.size;
        return s;
    }
    if (const auto* dens = std::get_if<JumpDensity>(&jumps)) return dens->mean_displacement(t, x);
    return 0.0;
}

double ModelSpec::sample_jump(double t, double x, Rng& rng) const {
    if (const auto* atoms = std::get_if<std::vector<JumpAtom>>(&jumps)) {
        const double total = jump_intensity(t, x);
        double u = rng.uniform() * total;
        for (const auto& a : *atoms) {
            u -= a.rate;
            if (u <= 0.0) return x + a.size;
        }
        return x + atoms->back().size;
    }
    const auto& dens = std::get<JumpDensity>(jumps);
    return dens.sample_target(t, x, rng);
}

Partition Partition::uniform(double t_max, std::size_t steps) {
    Partition p;
    p.times.resize(steps + 1);
    for (std::size_t k = 0; k <= steps; ++k)
        p.times[k] = t_max * static_cast<double>(k) / static_cast<double>(steps);
    p.times.front() = 0.0;
    p.times.back() = t_max;
    return p;
}

double Partition::mesh() const {
    double m = 0.0;
    for (std::size_t k = 1; k < times.size(); ++k) m = std::max(m, times[k] - times[k - 1]);
    return m;
}

void Partition::validate() const {
    if (times.size() < 2) throw std::invalid_argument("partition needs at least two nodes");
    if (times.front() != 0.0) throw std::invalid_argument("partition must start at t = 0");
    for (std::size_t k = 1; k < times.size(); ++k) {
        if (!(times[k] > times[k - 1]))
            throw std::invalid_argument("partition times must be strictly increasing");
        if (!std::isfinite(times[k])) throw std::invalid_argument("partition times must be finite");
    }
}

std::vector<std::size_t> Partition::subsample_indices(std::size_t stride) const {
    std::vector<std::size_t> idx;
    const std::size_t n = times.size() - 1;
    for (std::size_t k = 0; k <= n; k += stride) idx.push_back(k);
    if (idx.back() != n) idx.push_back(n);
    return idx;
}

void PathEnsemble::validate() const {
    partition.validate();
    if (values.size() != n_paths * partition.times.size())
        throw std::logic_error("ensemble value buffer has the wrong size");
    const double t_end = partition.t_max();
    for (double v : values)
        if (!std::isfinite(v)) throw std::logic_error("non-finite path value in ensemble");
    for (const auto& path_jumps : jumps) {
        for (const auto& j : path_jumps) {
            if (!(j.time > 0.0 && j.time <= t_end))
                throw std::logic_error("jump time outside (0, t_N]");
            if (j.pre == j.post) throw std::logic_error("recorded jump with zero displacement");
            if (!std::isfinite(j.pre) || !std::isfinite(j.post))
                throw std::logic_error("non-finite jump record");
        }
    }
}

namespace {

[[noreturn]] void abort_state(const char* what, double t, double x) {
    std::ostringstream os;
    os << what << " at (t=" << t << ", x=" << x << ")";
    throw std::runtime_error(os.str());
}

// One Euler-Maruyama path with thinned jumps. Continuous models draw exactly
// one normal per step so that the draw sequence matches plain Euler.
void simulate_path(const ModelSpec& model, const Partition& partition, Rng& rng,
                   double* out_values, std::vector<JumpRecord>& out_jumps) {
    const std::size_t n_steps = partition.steps();
    const bool jumpy = model.has_jumps();
    const double lambda_bar = jumpy ? model.jump_intensity_bound() : 0.0;

    double x = model.initial_law(rng);
    if (!std::isfinite(x)) abort_state("non-finite initial value", 0.0, x);
    out_values[0] = x;

    for (std::size_t k = 0; k < n_steps; ++k) {
        const double t = partition.times[k];
        const double dt = partition.times[k + 1] - t;
        // Effective continuous rate: generator drift minus the jump
        // compensator, so raw jumps plus continuous part drift at b.
        const double b = model.drift(t, x) - (jumpy ? model.jump_mean_displacement(t, x) : 0.0);
        const double sig = model.vol(t, x);
        if (!std::isfinite(b) || !std::isfinite(sig)) abort_state("non-finite coefficient", t, x);
        if (sig < 0.0) abort_state("negative volatility", t, x);

        bool jumped = false;
        if (jumpy) {
            const double p_cand = lambda_bar * dt;
            if (p_cand > 1.0)
                throw std::runtime_error(
                    "intensity bound times mesh exceeds 1; refine the partition");
            if (rng.uniform() < p_cand) {
                const double lam = model.jump_intensity(t, x);
                if (lam > lambda_bar * (1.0 + 1e-12)) abort_state("intensity bound exceeded", t, x);
                if (rng.uniform() < lam / lambda_bar) {
                    const double tau = t + rng.uniform() * dt;
                    // Diffuse to the jump time, jump, then diffuse the rest of
                    // the cell, coefficients frozen at the left node.
                    const double dt1 = tau - t;
                    const double dt2 = partition.times[k + 1] - tau;
                    double x_pre = x + b * dt1 + sig * std::sqrt(dt1) * rng.normal();
                    const double x_post = model.sample_jump(tau, x_pre, rng);
                    if (!std::isfinite(x_post)) abort_state("non-finite jump target", tau, x_pre);
                    if (x_post != x_pre) out_jumps.push_back({tau, x_pre, x_post});
                    x = x_post + b * dt2 + sig * std::sqrt(dt2) * rng.normal();
                    jumped = true;
                }
            }
        }
        if (!jumped) x = x + b * dt + sig * std::sqrt(dt) * rng.normal();

        if (!std::isfinite(x)) abort_state("non-finite state", partition.times[k + 1], x);
        if (std::abs(x) > model.explosion_bound)
            abort_state("state explosion guard tripped", partition.times[k + 1], x);
        out_values[k + 1] = x;
    }
}

PathEnsemble make_ensemble(const ModelSpec& model, const Partition& partition,
                           std::size_t n_paths, std::uint64_t seed) {
    if (n_paths < 1) throw std::invalid_argument("n_paths must be >= 1");
    partition.validate();
    if (partition.t_max() > model.horizon + 1e-12)
        throw std::invalid_argument("partition extends past the model horizon");

    PathEnsemble e;
    e.partition = partition;
    e.n_paths = n_paths;
    e.values.resize(n_paths * partition.times.size());
    e.jumps.resize(n_paths);
    e.seed = seed;
    e.model_tag = model.tag;
    return e;
}

}  // namespace

PathEnsemble simulate(const ModelSpec& model, const Partition& partition, std::size_t n_paths,
                      std::uint64_t seed) {
    PathEnsemble e = make_ensemble(model, partition, n_paths, seed);
    const std::size_t n_nodes = partition.times.size();

    std::exception_ptr failure;
#pragma omp parallel for schedule(static)
    for (long long p = 0; p < static_cast<long long>(n_paths); ++p) {
        if (failure) continue;
        try {
            Rng rng(seed, static_cast<std::uint64_t>(p));
            simulate_path(model, partition, rng, e.values.data() + p * n_nodes,
                          e.jumps[p]);
        } catch (...) {
#pragma omp critical
            if (!failure) failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);
    return e;
}

namespace serial_ref {

PathEnsemble simulate(const ModelSpec& model, const Partition& partition, std::size_t n_paths,
                      std::uint64_t seed) {
    PathEnsemble e = make_ensemble(model, partition, n_paths, seed);
    const std::size_t n_nodes = partition.times.size();
    for (std::size_t p = 0; p < n_paths; ++p) {
        Rng rng(seed, p);
        simulate_path(model, partition, rng, e.values.data() + p * n_nodes, e.jumps[p]);
    }
    return e;
}

}  // namespace serial_ref

DriftPaths drift_path(const ModelSpec& model, const PathEnsemble& ensemble) {
    if (ensemble.model_tag != model.tag)
        throw std::invalid_argument("ensemble was generated from model '" + ensemble.model_tag +
                                    "', not '" + model.tag + "'");
    DriftPaths d;
    d.partition = ensemble.partition;
    d.n_paths = ensemble.n_paths;
    const std::size_t n_nodes = ensemble.partition.times.size();
    d.values.resize(ensemble.n_paths * n_nodes);

#pragma omp parallel for schedule(static)
    for (long long p = 0; p < static_cast<long long>(ensemble.n_paths); ++p) {
        double acc = 0.0;
        double* out = d.values.data() + p * n_nodes;
        out[0] = 0.0;
        for (std::size_t k = 0; k + 1 < n_nodes; ++k) {
            const double t = ensemble.partition.times[k];
            const double dt = ensemble.partition.times[k + 1] - t;
            acc += model.drift(t, ensemble.value(p, k)) * dt;
            out[k + 1] = acc;
        }
    }
    return d;
}

double adaptive_simpson(const std::function<double(double)>& g, double a, double b, double tol,
                        int max_depth, double* err_estimate) {
    struct Rec {
        const std::function<double(double)>& f;
        double worst = 0.0;
        bool converged = true;

        double go(double a, double b, double fa, double fm, double fb, double whole, double tol,
                  int depth) {
            const double m = 0.5 * (a + b);
            const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
            const double flm = f(lm), frm = f(rm);
            const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
            const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
            const double delta = left + right - whole;
            if (std::abs(delta) <= 15.0 * tol || depth <= 0) {
                if (depth <= 0 && std::abs(delta) > 15.0 * tol) {
                    converged = false;
                    worst = std::max(worst, std::abs(delta) / 15.0);
                }
                return left + right + delta / 15.0;
            }
            return go(a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
                   go(m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
        }
    };

    Rec rec{g};
    const double fa = g(a), fb = g(b), fm = g(0.5 * (a + b));
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    const double result = rec.go(a, b, fa, fm, fb, whole, tol, max_depth);
    if (err_estimate) *err_estimate = rec.worst;
    if (!rec.converged)
        throw QuadratureError("adaptive quadrature did not converge within depth budget",
                              rec.worst);
    return result;
}

GeneratorValue generator_apply(const ModelSpec& model, const C2Function& f, double t, double x,
                               const QuadratureOptions& opts) {
    GeneratorValue r;
    const double sig = model.vol(t, x);
    const double fx = f.f(x), dfx = f.df(x);
    r.value = 0.5 * sig * sig * f.d2f(x) + model.drift(t, x) * dfx;

    if (const auto* atoms = std::get_if<std::vector<JumpAtom>>(&model.jumps)) {
        double s = 0.0;
        for (const auto& a : *atoms) {
            const double y = x + a.size;
            s += a.rate * (f.f(y) - fx - (y - x) * dfx);
        }
        r.jump_integral = s;
    } else if (const auto* dens = std::get_if<JumpDensity>(&model.jumps)) {
        auto integrand = [&](double y) {
            return (f.f(y) - fx - (y - x) * dfx) * dens->density(t, x, y);
        };
        r.jump_integral =
            adaptive_simpson(integrand, opts.y_min, opts.y_max, opts.tol, opts.max_depth,
                             &r.quad_error);
    }
    r.value += r.jump_integral;
    return r;
}

}  // namespace driftlab
