#include "driftlab/measures.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace driftlab {

namespace {

bool near(double u, double v) {
    return std::abs(u - v) <= 1e-12 * std::max({1.0, std::abs(u), std::abs(v)});
}

void require_contains(const std::vector<double>& big, const std::vector<double>& sub,
                      const char* what) {
    for (double s : sub) {
        auto it = std::lower_bound(big.begin(), big.end(), s - 1e-12);
        if (it == big.end() || !near(*it, s))
            throw std::invalid_argument(std::string("surface grid must contain all ") + what +
                                        " nodes of the paired functions");
    }
}

}  // namespace

AlignedTriple align(const GridFunction& f, const GridFunction& g, const GridFunction& theta) {
    std::vector<double> t = merge_nodes(f.t_nodes(), g.t_nodes());
    t = merge_nodes(t, theta.t_nodes());
    std::vector<double> x = merge_nodes(f.x_nodes(), g.x_nodes());
    x = merge_nodes(x, theta.x_nodes());
    return {resample(f, t, x), resample(g, t, x), resample(theta, t, x)};
}

double bilinear_functional(const GridFunction& f, const GridFunction& g,
                           const CompactGridFunction& theta) {
    AlignedTriple a = align(f, g, theta.fn());
    const GridFunction& F = a.f;
    const GridFunction& G = a.g;
    const GridFunction& T = a.theta;
    const auto& x = F.x_nodes();
    const std::size_t nt = F.n_rows(), nseg = x.size() - 1;

    double term1 = 0.0, term2 = 0.0, term3 = 0.0;
    for (std::size_t i = 1; i < nt; ++i) {
        for (std::size_t s = 0; s < nseg; ++s) {
            const double len = x[s + 1] - x[s];
            const double f2 = F.slope(i, s);
            const double g2 = G.slope(i, s);
            const double dth = 0.5 * ((T.at(i, s) - T.at(i - 1, s)) +
                                      (T.at(i, s + 1) - T.at(i - 1, s + 1)));
            term1 += f2 * g2 * dth * len;

            const double th2m = T.slope(i - 1, s);
            const double f2m = F.slope(i - 1, s);
            const double g2m = G.slope(i - 1, s);
            const double dg = 0.5 * ((G.at(i, s) - G.at(i - 1, s)) +
                                     (G.at(i, s + 1) - G.at(i - 1, s + 1)));
            const double df = 0.5 * ((F.at(i, s) - F.at(i - 1, s)) +
                                     (F.at(i, s + 1) - F.at(i - 1, s + 1)));
            term2 += th2m * f2m * dg * len;
            term3 += g2m * th2m * df * len;
        }
    }
    return term1 - (term2 + term3);
}

double SurfaceFunctional::apply_call_profile(std::span<const double> path_values,
                                             const Partition& partition) const {
    const std::size_t nx = x_nodes.size();
    double acc = 0.0;
    for (std::size_t i = 0; i < t_nodes.size(); ++i) {
        const double t = t_nodes[i];
        auto it = std::upper_bound(partition.times.begin(), partition.times.end(), t);
        std::size_t k = static_cast<std::size_t>(it - partition.times.begin());
        double xv;
        if (k == 0)
            xv = path_values[0];
        else if (k >= partition.times.size())
            xv = path_values[partition.times.size() - 1];
        else {
            const double w =
                (t - partition.times[k - 1]) / (partition.times[k] - partition.times[k - 1]);
            xv = path_values[k - 1] + w * (path_values[k] - path_values[k - 1]);
        }
        const double* wrow = weights.data() + i * nx;
        double row_acc = 0.0;
        for (std::size_t j = 0; j < nx; ++j) {
            const double hinge = xv - x_nodes[j];
            if (hinge > 0.0) row_acc += wrow[j] * hinge;
        }
        acc += row_acc;
    }
    return acc;
}

double SurfaceFunctional::apply(const GridFunction& surface) const {
    double acc = 0.0;
    for (std::size_t i = 0; i < t_nodes.size(); ++i) {
        const std::size_t row = surface.row_at(t_nodes[i]);
        for (std::size_t j = 0; j < x_nodes.size(); ++j)
            acc += weight(i, j) * surface.eval_row(row, x_nodes[j]);
    }
    return acc;
}

SurfaceFunctional bilinear_in_second(const GridFunction& f, const CompactGridFunction& theta,
                                     const std::vector<double>& t_nodes,
                                     const std::vector<double>& x_nodes) {
    require_contains(t_nodes, f.t_nodes(), "time");
    require_contains(t_nodes, theta.fn().t_nodes(), "time");
    require_contains(x_nodes, f.x_nodes(), "x");
    require_contains(x_nodes, theta.fn().x_nodes(), "x");

    const GridFunction F = resample(f, t_nodes, x_nodes);
    const GridFunction T = resample(theta.fn(), t_nodes, x_nodes);
    const std::size_t nt = t_nodes.size(), nx = x_nodes.size(), nseg = nx - 1;

    SurfaceFunctional out;
    out.t_nodes = t_nodes;
    out.x_nodes = x_nodes;
    out.weights.assign(nt * nx, 0.0);
    auto w = [&](std::size_t i, std::size_t j) -> double& { return out.weights[i * nx + j]; };

    for (std::size_t i = 1; i < nt; ++i) {
        for (std::size_t s = 0; s < nseg; ++s) {
            const double len = x_nodes[s + 1] - x_nodes[s];
            // term 1: f_x C_x against the theta atom; the segment length
            // cancels against the slope denominator.
            const double f2 = F.slope(i, s);
            const double dth = 0.5 * ((T.at(i, s) - T.at(i - 1, s)) +
                                      (T.at(i, s + 1) - T.at(i - 1, s + 1)));
            w(i, s + 1) += f2 * dth;
            w(i, s) -= f2 * dth;

            // term 2: - theta_x^- f_x^- against the C atom.
            const double c2 = T.slope(i - 1, s) * F.slope(i - 1, s) * 0.5 * len;
            w(i, s) -= c2;
            w(i, s + 1) -= c2;
            w(i - 1, s) += c2;
            w(i - 1, s + 1) += c2;

            // term 3: - C_x^- theta_x^- against the f atom.
            const double df = 0.5 * ((F.at(i, s) - F.at(i - 1, s)) +
                                     (F.at(i, s + 1) - F.at(i - 1, s + 1)));
            const double c3 = T.slope(i - 1, s) * df;
            w(i - 1, s + 1) -= c3;
            w(i - 1, s) += c3;
        }
    }
    return out;
}

double jump_functional(const CompactGridFunction& theta, const GridFunction& f, double t,
                       double x_pre, double x_post) {
    if (x_pre == x_post) return 0.0;
    const double lo = std::min(x_pre, x_post), hi = std::max(x_pre, x_post);
    const double sign = x_post >= x_pre ? 1.0 : -1.0;

    const std::size_t f_row = f.row_at(t);
    const std::size_t f_lrow = f.row_left(t);
    const GridFunction& th = theta.fn();
    const std::size_t th_lrow = th.row_left(t);
    const double f_post = f.eval_row(f_row, x_post);

    std::vector<double> cuts{lo, hi};
    for (double xn : f.x_nodes())
        if (xn > lo && xn < hi) cuts.push_back(xn);
    for (double xn : th.x_nodes())
        if (xn > lo && xn < hi) cuts.push_back(xn);
    std::sort(cuts.begin(), cuts.end());

    auto integrand = [&](double x, double f2m, double th2m) {
        return (f.eval_row(f_row, x) - f_post + (x_post - x) * f2m) * th2m;
    };

    double acc = 0.0;
    for (std::size_t l = 0; l + 1 < cuts.size(); ++l) {
        const double a = cuts[l], b = cuts[l + 1];
        if (b <= a) continue;
        const double mid = 0.5 * (a + b);
        const double th2m = th.derivative_row(th_lrow, mid, Side::right);
        if (th2m == 0.0) continue;
        const double f2m = f.derivative_row(f_lrow, mid, Side::right);
        acc += 0.5 * (b - a) * (integrand(a, f2m, th2m) + integrand(b, f2m, th2m));
    }
    return sign * acc;
}

double path_jump_sum(const CompactGridFunction& theta, const GridFunction& f,
                     std::span<const JumpRecord> jumps) {
    double acc = 0.0;
    for (const auto& j : jumps) acc += jump_functional(theta, f, j.time, j.pre, j.post);
    return acc;
}

std::vector<double> per_path_drift_sums(const PathEnsemble& ensemble, const ModelSpec& model,
                                        const SurfaceEval& theta) {
    std::vector<double> out(ensemble.n_paths);
    const auto& times = ensemble.partition.times;
#pragma omp parallel for schedule(static)
    for (long long p = 0; p < static_cast<long long>(ensemble.n_paths); ++p) {
        double acc = 0.0;
        for (std::size_t k = 0; k + 1 < times.size(); ++k) {
            const double t = times[k];
            const double x = ensemble.value(p, k);
            const double th = theta(t, x);
            if (th != 0.0) acc += th * model.drift(t, x) * (times[k + 1] - t);
        }
        out[p] = acc;
    }
    return out;
}

MeanSE drift_functional(const PathEnsemble& ensemble, const ModelSpec& model,
                        const SurfaceEval& theta) {
    auto sums = per_path_drift_sums(ensemble, model, theta);
    return mean_se(sums);
}

namespace serial_ref {
std::vector<double> per_path_drift_sums(const PathEnsemble& ensemble, const ModelSpec& model,
                                        const SurfaceEval& theta) {
    std::vector<double> out(ensemble.n_paths);
    const auto& times = ensemble.partition.times;
    for (std::size_t p = 0; p < ensemble.n_paths; ++p) {
        double acc = 0.0;
        for (std::size_t k = 0; k + 1 < times.size(); ++k) {
            const double t = times[k];
            const double x = ensemble.value(p, k);
            const double th = theta(t, x);
            if (th != 0.0) acc += th * model.drift(t, x) * (times[k + 1] - t);
        }
        out[p] = acc;
    }
    return out;
}
}  // namespace serial_ref

SlopeProductAntiderivative::SlopeProductAntiderivative(const CompactGridFunction& theta,
                                                       const GridFunction& f) {
    t_nodes_ = merge_nodes(theta.fn().t_nodes(), f.t_nodes());
    x_nodes_ = merge_nodes(theta.fn().x_nodes(), f.x_nodes());
    const GridFunction T = resample(theta.fn(), t_nodes_, x_nodes_);
    const GridFunction F = resample(f, t_nodes_, x_nodes_);
    const std::size_t nt = t_nodes_.size(), nx = x_nodes_.size();
    slopeprod_.assign(nt * (nx - 1), 0.0);
    cum_.assign(nt * nx, 0.0);
    for (std::size_t i = 0; i < nt; ++i) {
        double acc = 0.0;
        cum_[i * nx] = 0.0;
        for (std::size_t s = 0; s + 1 < nx; ++s) {
            const double prod = T.slope(i, s) * F.slope(i, s);
            slopeprod_[i * (nx - 1) + s] = prod;
            acc += prod * (x_nodes_[s + 1] - x_nodes_[s]);
            cum_[i * nx + s + 1] = acc;
        }
    }
}

double SlopeProductAntiderivative::operator()(double t, double x) const {
    // Left limit in t: last node strictly before t (row 0 at or before the
    // first node).
    auto it = std::lower_bound(t_nodes_.begin(), t_nodes_.end(), t);
    std::size_t r = it == t_nodes_.begin() ? 0 : static_cast<std::size_t>(it - t_nodes_.begin()) - 1;
    const std::size_t nx = x_nodes_.size();
    if (x <= x_nodes_.front()) return 0.0;
    if (x >= x_nodes_.back()) return cum_[r * nx + nx - 1];
    auto xi = std::upper_bound(x_nodes_.begin(), x_nodes_.end(), x);
    const std::size_t s = static_cast<std::size_t>(xi - x_nodes_.begin()) - 1;
    return cum_[r * nx + s] + slopeprod_[r * (nx - 1) + s] * (x - x_nodes_[s]);
}

ReconstructedDrift reconstructed_drift(const GridFunction& f, const CompactGridFunction& theta,
                                       const GridFunction& call_surface,
                                       const PathEnsemble& ensemble, const ModelSpec& model) {
    ReconstructedDrift r;
    r.bilinear_term = bilinear_functional(f, call_surface, theta);

    SlopeProductAntiderivative phi(theta, f);
    r.drift_term = drift_functional(ensemble, model, [&](double t, double x) { return phi(t, x); });

    std::vector<double> jump_sums(ensemble.n_paths);
#pragma omp parallel for schedule(static)
    for (long long p = 0; p < static_cast<long long>(ensemble.n_paths); ++p)
        jump_sums[p] = path_jump_sum(theta, f, ensemble.jumps[p]);
    r.jump_term = mean_se(jump_sums);

    r.total = r.bilinear_term + r.drift_term.mean + r.jump_term.mean;
    return r;
}

// --- LocalSignedMeasure ---------------------------------------------------

LocalSignedMeasure::LocalSignedMeasure(std::vector<double> t_edges, std::vector<double> x_edges,
                                       std::vector<double> cell_density,
                                       std::vector<double> atom_x_nodes, std::vector<Atom> atoms)
    : t_edges_(std::move(t_edges)),
      x_edges_(std::move(x_edges)),
      cell_density_(std::move(cell_density)),
      atom_x_nodes_(std::move(atom_x_nodes)),
      atoms_(std::move(atoms)) {
    if (cell_density_.size() != (t_edges_.size() - 1) * (x_edges_.size() - 1))
        throw std::invalid_argument("cell density shape mismatch");
    for (const auto& a : atoms_)
        if (a.profile.size() != atom_x_nodes_.size())
            throw std::invalid_argument("atom profile shape mismatch");
}

double integrate_row(const GridFunction& theta, std::size_t row, double a, double b) {
    if (b <= a) return 0.0;
    std::vector<double> cuts{a, b};
    for (double xn : theta.x_nodes())
        if (xn > a && xn < b) cuts.push_back(xn);
    std::sort(cuts.begin(), cuts.end());
    double acc = 0.0;
    for (std::size_t l = 0; l + 1 < cuts.size(); ++l)
        acc += 0.5 * (cuts[l + 1] - cuts[l]) *
               (theta.eval_row(row, cuts[l]) + theta.eval_row(row, cuts[l + 1]));
    return acc;
}

namespace {

// integral over [a,b] of theta(row,.) times the linear function through
// (a,pa), (b,pb); exact via Simpson on each linear piece of theta.
double integrate_row_times_linear(const GridFunction& theta, std::size_t row, double a, double b,
                                  double pa, double pb) {
    if (b <= a) return 0.0;
    std::vector<double> cuts{a, b};
    for (double xn : theta.x_nodes())
        if (xn > a && xn < b) cuts.push_back(xn);
    std::sort(cuts.begin(), cuts.end());
    auto lin = [&](double x) { return pa + (pb - pa) * (x - a) / (b - a); };
    double acc = 0.0;
    for (std::size_t l = 0; l + 1 < cuts.size(); ++l) {
        const double u = cuts[l], v = cuts[l + 1], m = 0.5 * (u + v);
        acc += (v - u) / 6.0 *
               (theta.eval_row(row, u) * lin(u) + 4.0 * theta.eval_row(row, m) * lin(m) +
                theta.eval_row(row, v) * lin(v));
    }
    return acc;
}

}  // namespace

double LocalSignedMeasure::eval(const GridFunction& theta) const {
    double acc = 0.0;
    const std::size_t ncx = x_edges_.size() - 1;
    for (std::size_t i = 0; i + 1 < t_edges_.size(); ++i) {
        std::vector<double> tcuts{t_edges_[i], t_edges_[i + 1]};
        for (double tn : theta.t_nodes())
            if (tn > t_edges_[i] && tn < t_edges_[i + 1]) tcuts.push_back(tn);
        std::sort(tcuts.begin(), tcuts.end());
        for (std::size_t j = 0; j < ncx; ++j) {
            const double d = cell(i, j);
            if (d == 0.0) continue;
            for (std::size_t l = 0; l + 1 < tcuts.size(); ++l) {
                const std::size_t row = theta.row_at(0.5 * (tcuts[l] + tcuts[l + 1]));
                acc += d * (tcuts[l + 1] - tcuts[l]) *
                       integrate_row(theta, row, x_edges_[j], x_edges_[j + 1]);
            }
        }
    }
    for (const auto& atom : atoms_) {
        const std::size_t row = theta.row_at(atom.t);
        for (std::size_t s = 0; s + 1 < atom_x_nodes_.size(); ++s)
            acc += integrate_row_times_linear(theta, row, atom_x_nodes_[s], atom_x_nodes_[s + 1],
                                              atom.profile[s], atom.profile[s + 1]);
    }
    return acc;
}

double LocalSignedMeasure::variation(const GridFunction& theta) const {
    double acc = 0.0;
    const std::size_t ncx = x_edges_.size() - 1;
    for (std::size_t i = 0; i + 1 < t_edges_.size(); ++i) {
        std::vector<double> tcuts{t_edges_[i], t_edges_[i + 1]};
        for (double tn : theta.t_nodes())
            if (tn > t_edges_[i] && tn < t_edges_[i + 1]) tcuts.push_back(tn);
        std::sort(tcuts.begin(), tcuts.end());
        for (std::size_t j = 0; j < ncx; ++j) {
            const double d = std::abs(cell(i, j));
            if (d == 0.0) continue;
            for (std::size_t l = 0; l + 1 < tcuts.size(); ++l) {
                const std::size_t row = theta.row_at(0.5 * (tcuts[l] + tcuts[l + 1]));
                acc += d * (tcuts[l + 1] - tcuts[l]) *
                       integrate_row(theta, row, x_edges_[j], x_edges_[j + 1]);
            }
        }
    }
    for (const auto& atom : atoms_) {
        const std::size_t row = theta.row_at(atom.t);
        for (std::size_t s = 0; s + 1 < atom_x_nodes_.size(); ++s) {
            double a = atom_x_nodes_[s], b = atom_x_nodes_[s + 1];
            double pa = atom.profile[s], pb = atom.profile[s + 1];
            if (pa * pb < 0.0) {
                // split at the sign change so |profile| stays linear per piece
                const double root = a + (b - a) * pa / (pa - pb);
                acc += integrate_row_times_linear(theta, row, a, root, std::abs(pa), 0.0);
                acc += integrate_row_times_linear(theta, row, root, b, 0.0, std::abs(pb));
            } else {
                acc += integrate_row_times_linear(theta, row, a, b, std::abs(pa), std::abs(pb));
            }
        }
    }
    return acc;
}

double LocalSignedMeasure::total_variation() const {
    double acc = 0.0;
    const std::size_t ncx = x_edges_.size() - 1;
    for (std::size_t i = 0; i + 1 < t_edges_.size(); ++i)
        for (std::size_t j = 0; j < ncx; ++j)
            acc += std::abs(cell(i, j)) * (t_edges_[i + 1] - t_edges_[i]) *
                   (x_edges_[j + 1] - x_edges_[j]);
    for (const auto& atom : atoms_) {
        for (std::size_t s = 0; s + 1 < atom_x_nodes_.size(); ++s) {
            const double a = atom_x_nodes_[s], b = atom_x_nodes_[s + 1];
            const double pa = atom.profile[s], pb = atom.profile[s + 1];
            if (pa * pb < 0.0) {
                const double root = a + (b - a) * pa / (pa - pb);
                acc += 0.5 * (root - a) * std::abs(pa) + 0.5 * (b - root) * std::abs(pb);
            } else {
                acc += 0.5 * (b - a) * (std::abs(pa) + std::abs(pb));
            }
        }
    }
    return acc;
}

}  // namespace driftlab
