#include "driftlab/marginals.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "driftlab/stats.hpp"

namespace driftlab {

namespace {

constexpr std::size_t kBlock = 1024;

// Snap requested times to partition nodes; returns (node index, snapped time).
struct SnappedTimes {
    std::vector<std::size_t> node_index;
    std::vector<double> times;
    double worst_offset = 0.0;
};

SnappedTimes snap_times(const Partition& partition, std::vector<double> requested) {
    std::sort(requested.begin(), requested.end());
    SnappedTimes out;
    for (double t : requested) {
        auto it = std::lower_bound(partition.times.begin(), partition.times.end(), t);
        std::size_t k = static_cast<std::size_t>(it - partition.times.begin());
        if (k == partition.times.size()) k--;
        if (k > 0 && std::abs(partition.times[k - 1] - t) < std::abs(partition.times[k] - t)) k--;
        if (!out.node_index.empty() && out.node_index.back() == k) continue;
        out.worst_offset = std::max(out.worst_offset, std::abs(partition.times[k] - t));
        out.node_index.push_back(k);
        out.times.push_back(partition.times[k]);
    }
    if (out.node_index.empty() || out.node_index.front() != 0) {
        out.node_index.insert(out.node_index.begin(), 0);
        out.times.insert(out.times.begin(), 0.0);
    }
    return out;
}

// Row of Monte Carlo means/SEs of (X(t_k) - x_j)_+ over the ensemble, plus the
// mean of X(t_k) itself (appended at index nx). Deterministic blockwise
// pairwise accumulation.
void mc_call_row(const PathEnsemble& e, std::size_t node, std::span<const double> x_nodes,
                 double* mean_out, double* se_out, double* state_mean_out) {
    const std::size_t nx = x_nodes.size();
    const std::size_t n = e.n_paths;
    const std::size_t n_blocks = (n + kBlock - 1) / kBlock;
    std::vector<double> block_sums((nx + 1) * n_blocks, 0.0);
    for (std::size_t b = 0; b < n_blocks; ++b) {
        const std::size_t lo = b * kBlock, hi = std::min(n, lo + kBlock);
        for (std::size_t p = lo; p < hi; ++p) {
            const double xv = e.value(p, node);
            for (std::size_t j = 0; j < nx; ++j) {
                const double h = xv - x_nodes[j];
                if (h > 0.0) block_sums[j * n_blocks + b] += h;
            }
            block_sums[nx * n_blocks + b] += xv;
        }
    }
    for (std::size_t j = 0; j <= nx; ++j) {
        const double s = pairwise_sum({block_sums.data() + j * n_blocks, n_blocks});
        const double m = s / static_cast<double>(n);
        if (j < nx)
            mean_out[j] = m;
        else
            *state_mean_out = m;
    }
    // second pass for standard errors
    std::fill(block_sums.begin(), block_sums.end(), 0.0);
    for (std::size_t b = 0; b < n_blocks; ++b) {
        const std::size_t lo = b * kBlock, hi = std::min(n, lo + kBlock);
        for (std::size_t p = lo; p < hi; ++p) {
            const double xv = e.value(p, node);
            for (std::size_t j = 0; j < nx; ++j) {
                const double h = std::max(xv - x_nodes[j], 0.0);
                block_sums[j * n_blocks + b] += sq(h - mean_out[j]);
            }
        }
    }
    for (std::size_t j = 0; j < nx; ++j) {
        const double ss = pairwise_sum({block_sums.data() + j * n_blocks, n_blocks});
        se_out[j] = n > 1 ? std::sqrt(ss / (static_cast<double>(n - 1) * static_cast<double>(n)))
                          : 0.0;
    }
}

struct ProjectedRow {
    std::vector<double> values;
    double sq_dist = 0.0;
};

// L2 projection of a row onto {convex in x, slopes in [-1,0]}: isotonic
// regression on slopes with segment-length weights, clamped, then anchored to
// preserve the mean level.
ProjectedRow project_convex(std::span<const double> raw, std::span<const double> x_nodes) {
    const std::size_t nx = x_nodes.size();
    std::vector<double> slopes(nx - 1), weights(nx - 1);
    for (std::size_t s = 0; s + 1 < nx; ++s) {
        weights[s] = x_nodes[s + 1] - x_nodes[s];
        slopes[s] = (raw[s + 1] - raw[s]) / weights[s];
    }
    std::vector<double> iso = pav_nondecreasing(slopes, weights);
    for (double& v : iso) v = std::clamp(v, -1.0, 0.0);

    std::vector<double> cum(nx, 0.0);
    for (std::size_t s = 0; s + 1 < nx; ++s) cum[s + 1] = cum[s] + iso[s] * weights[s];
    double anchor = 0.0;
    for (std::size_t j = 0; j < nx; ++j) anchor += raw[j] - cum[j];
    anchor /= static_cast<double>(nx);

    ProjectedRow out;
    out.values.resize(nx);
    for (std::size_t j = 0; j < nx; ++j) {
        out.values[j] = anchor + cum[j];
        out.sq_dist += sq(out.values[j] - raw[j]);
    }
    return out;
}

CallSurface build_call_surface(const PathEnsemble& ensemble, std::vector<double> x_nodes,
                               std::vector<double> t_nodes,
                               const std::function<double(double)>& variation_bound,
                               bool parallel) {
    if (ensemble.n_paths == 0) throw std::invalid_argument("empty ensemble");
    SnappedTimes snap = snap_times(ensemble.partition, std::move(t_nodes));
    const std::size_t nt = snap.times.size(), nx = x_nodes.size();

    CallSurface cs;
    cs.raw.resize(nt * nx);
    cs.se.resize(nt * nx);
    cs.mean_curve.resize(nt);
    cs.snap_offset = snap.worst_offset;

    if (parallel) {
#pragma omp parallel for schedule(dynamic)
        for (long long i = 0; i < static_cast<long long>(nt); ++i)
            mc_call_row(ensemble, snap.node_index[i], x_nodes, cs.raw.data() + i * nx,
                        cs.se.data() + i * nx, &cs.mean_curve[i]);
    } else {
        for (std::size_t i = 0; i < nt; ++i)
            mc_call_row(ensemble, snap.node_index[i], x_nodes, cs.raw.data() + i * nx,
                        cs.se.data() + i * nx, &cs.mean_curve[i]);
    }

    std::vector<double> proj(nt * nx);
    double sq_dist = 0.0;
    for (std::size_t i = 0; i < nt; ++i) {
        ProjectedRow r = project_convex({cs.raw.data() + i * nx, nx}, x_nodes);
        std::copy(r.values.begin(), r.values.end(), proj.begin() + i * nx);
        sq_dist += r.sq_dist;
    }
    cs.projection_distance = std::sqrt(sq_dist / static_cast<double>(nt * nx));

    cs.adjusted_variation.resize(nt, 0.0);
    if (variation_bound)
        for (std::size_t i = 0; i < nt; ++i) cs.adjusted_variation[i] = variation_bound(snap.times[i]);

    cs.surface = GridFunction(std::move(snap.times), std::move(x_nodes), std::move(proj), 1.0);
    return cs;
}

void thomas_solve(std::span<const double> lower, std::span<const double> diag,
                  std::span<const double> upper, std::span<double> rhs) {
    const std::size_t n = diag.size();
    std::vector<double> c(n), d(n);
    c[0] = upper[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for (std::size_t i = 1; i < n; ++i) {
        const double m = diag[i] - lower[i] * c[i - 1];
        c[i] = upper[i] / m;
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / m;
    }
    rhs[n - 1] = d[n - 1];
    for (std::size_t i = n - 1; i-- > 0;) rhs[i] = d[i] - c[i] * rhs[i + 1];
}

void require_driftless_continuous(const ModelSpec& model, const PdeGrid& grid) {
    if (model.has_jumps())
        throw std::invalid_argument("PDE surface requires a continuous (jump-free) model");
    const double h = (grid.x_max - grid.x_min) / 8.0;
    for (int i = 0; i <= 8; ++i)
        for (int m = 0; m <= 4; ++m)
            if (model.drift(grid.t_max * m / 4.0, grid.x_min + h * i) != 0.0)
                throw std::invalid_argument("PDE surface requires a driftless model");
}

}  // namespace

std::vector<double> pav_nondecreasing(std::span<const double> values,
                                      std::span<const double> weights) {
    struct Block {
        double wsum, mean;
        std::size_t count;
    };
    std::vector<Block> stack;
    stack.reserve(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        Block b{weights[i], values[i], 1};
        while (!stack.empty() && stack.back().mean >= b.mean) {
            const Block& p = stack.back();
            b.mean = (p.wsum * p.mean + b.wsum * b.mean) / (p.wsum + b.wsum);
            b.wsum += p.wsum;
            b.count += p.count;
            stack.pop_back();
        }
        stack.push_back(b);
    }
    std::vector<double> out;
    out.reserve(values.size());
    for (const Block& b : stack) out.insert(out.end(), b.count, b.mean);
    return out;
}

CallSurface estimate_call_surface(const PathEnsemble& ensemble, std::vector<double> x_nodes,
                                  std::vector<double> t_nodes,
                                  const std::function<double(double)>& variation_bound) {
    return build_call_surface(ensemble, std::move(x_nodes), std::move(t_nodes), variation_bound,
                              /*parallel=*/true);
}

namespace serial_ref {
CallSurface estimate_call_surface(const PathEnsemble& ensemble, std::vector<double> x_nodes,
                                  std::vector<double> t_nodes,
                                  const std::function<double(double)>& variation_bound) {
    return build_call_surface(ensemble, std::move(x_nodes), std::move(t_nodes), variation_bound,
                              /*parallel=*/false);
}
}  // namespace serial_ref

void CallSurface::validate(double edge_tol, double monotone_tol) const {
    surface.validate();
    const auto& x = surface.x_nodes();
    const std::size_t nt = surface.n_rows(), nx = surface.n_cols();
    for (std::size_t i = 0; i < nt; ++i) {
        for (std::size_t s = 0; s + 1 < nx; ++s) {
            const double sl = surface.slope(i, s);
            if (sl < -1.0 - 1e-12 || sl > 1e-12)
                throw std::logic_error("call surface slope outside [-1, 0]");
            if (s > 0 && surface.slope(i, s - 1) > sl + 1e-12)
                throw std::logic_error("call surface not convex in x");
        }
        if (std::abs(surface.at(i, nx - 1)) > edge_tol)
            throw std::logic_error("call surface does not vanish at the upper x-range");
        if (std::abs(surface.at(i, 0) + x[0] - mean_curve[i]) > edge_tol)
            throw std::logic_error("call surface lower-edge intercept mismatch");
    }
    for (std::size_t j = 0; j < nx; ++j)
        for (std::size_t i = 1; i < nt; ++i) {
            const double adjusted = surface.at(i, j) + adjusted_variation[i];
            const double prev = surface.at(i - 1, j) + adjusted_variation[i - 1];
            if (adjusted < prev - monotone_tol)
                throw std::logic_error("call surface + variation not nondecreasing in t");
        }
}

CallSurface call_surface_forward_pde(const ModelSpec& model,
                                     const std::function<double(double)>& initial_call,
                                     const PdeGrid& grid) {
    if (grid.nx < 5 || grid.nt < 1)
        throw std::invalid_argument("PDE grid too coarse; refine to at least 5 x-nodes");
    require_driftless_continuous(model, grid);

    const std::size_t nx = grid.nx;
    const double h = (grid.x_max - grid.x_min) / static_cast<double>(nx - 1);
    const double dt = grid.t_max / static_cast<double>(grid.nt);

    std::vector<double> x(nx);
    for (std::size_t j = 0; j < nx; ++j) x[j] = grid.x_min + h * static_cast<double>(j);

    std::vector<double> t_nodes(grid.nt + 1);
    for (std::size_t m = 0; m <= grid.nt; ++m) t_nodes[m] = dt * static_cast<double>(m);
    t_nodes.back() = grid.t_max;

    std::vector<double> values((grid.nt + 1) * nx);
    double c_min = 0.0, c_max = 0.0;
    for (std::size_t j = 0; j < nx; ++j) {
        values[j] = initial_call(x[j]);
        c_min = std::min(c_min, values[j]);
        c_max = std::max(c_max, values[j]);
    }

    const std::size_t ni = nx - 2;  // interior unknowns
    std::vector<double> lower(ni), diag(ni), upper(ni), rhs(ni);
    double nu_max = 0.0;
    for (std::size_t m = 0; m < grid.nt; ++m) {
        const double t_next = t_nodes[m + 1];
        const double* prev = values.data() + m * nx;
        double* next = values.data() + (m + 1) * nx;
        next[0] = prev[0];
        next[nx - 1] = prev[nx - 1];
        for (std::size_t j = 1; j + 1 < nx; ++j) {
            const double sig = model.vol(t_next, x[j]);
            const double nu = 0.5 * sig * sig * dt / (h * h);
            nu_max = std::max(nu_max, nu);
            lower[j - 1] = -nu;
            diag[j - 1] = 1.0 + 2.0 * nu;
            upper[j - 1] = -nu;
            rhs[j - 1] = prev[j];
        }
        rhs[0] += (0.5 * sq(model.vol(t_next, x[1])) * dt / (h * h)) * next[0];
        rhs[ni - 1] += (0.5 * sq(model.vol(t_next, x[nx - 2])) * dt / (h * h)) * next[nx - 1];
        thomas_solve(lower, diag, upper, {rhs.data(), ni});
        for (std::size_t j = 1; j + 1 < nx; ++j) next[j] = rhs[j - 1];
    }
    if (nu_max > 1e6) {
        std::ostringstream os;
        os << "diffusion number " << nu_max
           << " is badly unbalanced; refine the x-grid or coarsen the time grid";
        throw std::invalid_argument(os.str());
    }

    // Maximum principle: the solution must stay between the initial extremes.
    for (double v : values)
        if (v < c_min - 1e-9 || v > c_max + 1e-9)
            throw std::logic_error("forward PDE violated the maximum principle");

    CallSurface cs;
    cs.raw = values;
    cs.mean_curve.assign(grid.nt + 1, initial_call(grid.x_min) + grid.x_min);
    cs.adjusted_variation.assign(grid.nt + 1, 0.0);

    std::vector<double> proj((grid.nt + 1) * nx);
    double sq_dist = 0.0;
    for (std::size_t i = 0; i <= grid.nt; ++i) {
        ProjectedRow r = project_convex({values.data() + i * nx, nx}, x);
        std::copy(r.values.begin(), r.values.end(), proj.begin() + i * nx);
        sq_dist += r.sq_dist;
    }
    cs.projection_distance = std::sqrt(sq_dist / static_cast<double>((grid.nt + 1) * nx));
    cs.surface = GridFunction(std::move(t_nodes), std::move(x), std::move(proj), 1.0);
    return cs;
}

std::optional<double> dupire_sigma(const CallSurface& cs, std::size_t t_index,
                                   std::size_t x_index, double curvature_floor) {
    const GridFunction& C = cs.surface;
    if (t_index == 0 || t_index + 1 >= C.n_rows() || x_index == 0 ||
        x_index + 1 >= C.n_cols())
        throw std::invalid_argument("local volatility recovery needs an interior grid point");
    const auto& t = C.t_nodes();
    const auto& x = C.x_nodes();
    const double ct =
        (C.at(t_index + 1, x_index) - C.at(t_index - 1, x_index)) / (t[t_index + 1] - t[t_index - 1]);
    const double h1 = x[x_index] - x[x_index - 1];
    const double h2 = x[x_index + 1] - x[x_index];
    const double cxx = 2.0 / (h1 + h2) *
                       ((C.at(t_index, x_index + 1) - C.at(t_index, x_index)) / h2 -
                        (C.at(t_index, x_index) - C.at(t_index, x_index - 1)) / h1);
    if (cxx <= curvature_floor) return std::nullopt;
    const double s2 = 2.0 * ct / cxx;
    if (!(s2 >= 0.0) || !std::isfinite(s2)) return std::nullopt;
    return std::sqrt(s2);
}

std::optional<double> dupire_sigma_at(const CallSurface& cs, double t, double x,
                                      double curvature_floor) {
    const GridFunction& C = cs.surface;
    auto nearest = [](const std::vector<double>& v, double q) {
        auto it = std::lower_bound(v.begin(), v.end(), q);
        std::size_t k = static_cast<std::size_t>(it - v.begin());
        if (k == v.size()) k--;
        if (k > 0 && std::abs(v[k - 1] - q) < std::abs(v[k] - q)) k--;
        return k;
    };
    return dupire_sigma(cs, nearest(C.t_nodes(), t), nearest(C.x_nodes(), x), curvature_floor);
}

DensitySlice density(const CallSurface& cs, double t) {
    const GridFunction& C = cs.surface;
    const std::size_t row = C.row_at(t);
    const auto& x = C.x_nodes();
    const std::size_t nx = C.n_cols();
    DensitySlice out;
    out.t = C.t_nodes()[row];
    out.values.assign(nx, 0.0);
    for (std::size_t j = 1; j + 1 < nx; ++j) {
        const double h1 = x[j] - x[j - 1], h2 = x[j + 1] - x[j];
        const double p = 2.0 / (h1 + h2) *
                         ((C.at(row, j + 1) - C.at(row, j)) / h2 -
                          (C.at(row, j) - C.at(row, j - 1)) / h1);
        const double w = 0.5 * (x[j + 1] - x[j - 1]);
        if (p < 0.0) {
            out.clipped_mass += -p * w;
        } else {
            out.values[j] = p;
            out.mass += p * w;
        }
    }
    return out;
}

GridFunction conditional_expectation_surface(const ModelSpec& model, const ConvexPayoff& payoff,
                                             double maturity, const PdeGrid& grid,
                                             double structure_tol) {
    if (grid.nx < 5 || grid.nt < 1)
        throw std::invalid_argument("PDE grid too coarse; refine to at least 5 x-nodes");
    require_driftless_continuous(model, grid);

    const std::size_t nx = grid.nx;
    const double h = (grid.x_max - grid.x_min) / static_cast<double>(nx - 1);
    const double dt = maturity / static_cast<double>(grid.nt);

    std::vector<double> x(nx), t_nodes(grid.nt + 1);
    for (std::size_t j = 0; j < nx; ++j) x[j] = grid.x_min + h * static_cast<double>(j);
    for (std::size_t m = 0; m <= grid.nt; ++m) t_nodes[m] = dt * static_cast<double>(m);
    t_nodes.back() = maturity;

    std::vector<double> values((grid.nt + 1) * nx);
    for (std::size_t j = 0; j < nx; ++j) values[grid.nt * nx + j] = payoff.g(x[j]);

    const std::size_t ni = nx - 2;
    std::vector<double> lower(ni), diag(ni), upper(ni), rhs(ni);
    for (std::size_t m = grid.nt; m-- > 0;) {
        const double t_now = t_nodes[m];
        const double* later = values.data() + (m + 1) * nx;
        double* now = values.data() + m * nx;
        now[0] = later[0];
        now[nx - 1] = later[nx - 1];
        for (std::size_t j = 1; j + 1 < nx; ++j) {
            const double sig = model.vol(t_now, x[j]);
            const double nu = 0.5 * sig * sig * dt / (h * h);
            lower[j - 1] = -nu;
            diag[j - 1] = 1.0 + 2.0 * nu;
            upper[j - 1] = -nu;
            rhs[j - 1] = later[j];
        }
        rhs[0] += (0.5 * sq(model.vol(t_now, x[1])) * dt / (h * h)) * now[0];
        rhs[ni - 1] += (0.5 * sq(model.vol(t_now, x[nx - 2])) * dt / (h * h)) * now[nx - 1];
        thomas_solve(lower, diag, upper, {rhs.data(), ni});
        for (std::size_t j = 1; j + 1 < nx; ++j) now[j] = rhs[j - 1];
    }

    // Structural checks: convex in x per row, nonincreasing in t per column.
    const double scale = std::max(1.0, std::abs(payoff.lipschitz));
    for (std::size_t m = 0; m <= grid.nt; ++m)
        for (std::size_t j = 1; j + 1 < nx; ++j) {
            const double curv = values[m * nx + j - 1] - 2.0 * values[m * nx + j] +
                                values[m * nx + j + 1];
            if (curv < -structure_tol * scale)
                throw std::logic_error("conditional expectation surface lost convexity in x");
        }
    for (std::size_t j = 0; j < nx; ++j)
        for (std::size_t m = 0; m < grid.nt; ++m)
            if (values[m * nx + j] < values[(m + 1) * nx + j] - structure_tol * scale)
                throw std::logic_error("conditional expectation surface not nonincreasing in t");

    return GridFunction(std::move(t_nodes), std::move(x), std::move(values), payoff.lipschitz);
}

}  // namespace driftlab
