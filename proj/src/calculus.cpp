#include "driftlab/calculus.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace driftlab {

namespace {

// 10-point Gauss-Legendre on [-1,1].
constexpr double kGLx[10] = {-0.9739065285171717, -0.8650633666889845, -0.6794095682990244,
                             -0.4333953941292472, -0.1488743389816312, 0.1488743389816312,
                             0.4333953941292472,  0.6794095682990244,  0.8650633666889845,
                             0.9739065285171717};
constexpr double kGLw[10] = {0.0666713443086881, 0.1494513491505806, 0.2190863625159820,
                             0.2692667193099963, 0.2955242247147529, 0.2955242247147529,
                             0.2692667193099963, 0.2190863625159820, 0.1494513491505806,
                             0.0666713443086881};

double jump_correction(const SmoothField& field, double t, double pre, double post) {
    // int_{pre}^{post} (post - x) f_xx(t, x) dx, orientation-signed.
    const double mid = 0.5 * (pre + post), half = 0.5 * (post - pre);
    double acc = 0.0;
    for (int q = 0; q < 10; ++q) {
        const double x = mid + half * kGLx[q];
        acc += kGLw[q] * (post - x) * field.f_xx(t, x);
    }
    return acc * half;
}

}  // namespace

QVPath qv_partition(std::span<const double> x_values, std::span<const double> y_values,
                    const Partition& fine, std::span<const std::size_t> coarse_nodes,
                    std::span<const JumpDelta> x_jumps, std::span<const JumpDelta> y_jumps) {
    if (x_values.size() != fine.times.size() || y_values.size() != fine.times.size())
        throw std::invalid_argument("series must be sampled on the fine partition");
    QVPath out;
    out.times.reserve(coarse_nodes.size());
    out.qv.reserve(coarse_nodes.size());

    double acc = 0.0;
    std::size_t prev = coarse_nodes.front();
    out.times.push_back(fine.times[prev]);
    out.qv.push_back(0.0);
    for (std::size_t c = 1; c < coarse_nodes.size(); ++c) {
        const std::size_t k = coarse_nodes[c];
        acc += (x_values[k] - x_values[prev]) * (y_values[k] - y_values[prev]);
        out.times.push_back(fine.times[k]);
        out.qv.push_back(acc);
        prev = k;
    }

    // Ledger of common jump times (sorted inputs assumed).
    out.jump_ledger.assign(out.times.size(), 0.0);
    std::size_t i = 0, j = 0;
    std::vector<std::pair<double, double>> products;
    while (i < x_jumps.size() && j < y_jumps.size()) {
        if (x_jumps[i].time < y_jumps[j].time)
            ++i;
        else if (y_jumps[j].time < x_jumps[i].time)
            ++j;
        else {
            products.emplace_back(x_jumps[i].time, x_jumps[i].delta * y_jumps[j].delta);
            ++i;
            ++j;
        }
    }
    double led = 0.0;
    std::size_t pi = 0;
    for (std::size_t c = 0; c < out.times.size(); ++c) {
        while (pi < products.size() && products[pi].first <= out.times[c]) led += products[pi++].second;
        out.jump_ledger[c] = led;
    }
    out.continuous.resize(out.times.size());
    for (std::size_t c = 0; c < out.times.size(); ++c)
        out.continuous[c] = out.qv[c] - out.jump_ledger[c];
    return out;
}

DriftDecomposition ito_decompose_path(const SmoothField& field, const ModelSpec& model,
                                      const Partition& partition,
                                      std::span<const double> path_values,
                                      std::span<const JumpRecord> jumps) {
    const std::size_t n_nodes = partition.times.size();
    DriftDecomposition d;
    d.drift.assign(n_nodes, 0.0);
    d.martingale.assign(n_nodes, 0.0);

    std::size_t ji = 0;
    double a = 0.0;
    d.martingale[0] = field.f(partition.times[0], path_values[0]);
    for (std::size_t k = 0; k + 1 < n_nodes; ++k) {
        const double t = partition.times[k];
        const double dt = partition.times[k + 1] - t;
        const double x = path_values[k];
        const double sig = model.vol(t, x);
        a += (0.5 * sig * sig * field.f_xx(t, x) + model.drift(t, x) * field.f_x(t, x) +
              field.f_t(t, x)) *
             dt;
        while (ji < jumps.size() && jumps[ji].time <= partition.times[k + 1]) {
            a += jump_correction(field, jumps[ji].time, jumps[ji].pre, jumps[ji].post);
            ++ji;
        }
        d.drift[k + 1] = a;
        d.martingale[k + 1] =
            field.f(partition.times[k + 1], path_values[k + 1]) - a;
    }
    return d;
}

namespace {

double ito_functional_one_path(const SmoothField& field, const ModelSpec& model,
                               const Partition& partition, std::span<const double> path_values,
                               std::span<const JumpRecord> jumps, const SurfaceEval& theta) {
    double acc = 0.0;
    for (std::size_t k = 0; k + 1 < partition.times.size(); ++k) {
        const double t = partition.times[k];
        const double x = path_values[k];
        const double th = theta(t, x);
        if (th != 0.0) {
            const double sig = model.vol(t, x);
            acc += th *
                   (0.5 * sig * sig * field.f_xx(t, x) + model.drift(t, x) * field.f_x(t, x) +
                    field.f_t(t, x)) *
                   (partition.times[k + 1] - t);
        }
    }
    for (const auto& j : jumps) {
        const double th = theta(j.time, j.pre);
        if (th != 0.0) acc += th * jump_correction(field, j.time, j.pre, j.post);
    }
    return acc;
}

}  // namespace

namespace {

void require_c2(const SmoothField& field) {
    if (!field.f || !field.f_t || !field.f_x || !field.f_xx)
        throw std::invalid_argument(
            "smooth-route drift needs f with all partial derivatives supplied");
}

// Locate a non-finite derivative evaluation along the path for the abort
// message; called only after a non-finite accumulation was detected.
[[noreturn]] void abort_bad_derivative(const SmoothField& field, const Partition& partition,
                                       std::span<const double> path_values) {
    for (std::size_t k = 0; k < partition.times.size(); ++k) {
        const double t = partition.times[k];
        const double x = path_values[k];
        if (!std::isfinite(field.f(t, x)) || !std::isfinite(field.f_t(t, x)) ||
            !std::isfinite(field.f_x(t, x)) || !std::isfinite(field.f_xx(t, x))) {
            throw std::runtime_error("derivative evaluation failed at (t=" +
                                     std::to_string(t) + ", x=" + std::to_string(x) + ")");
        }
    }
    throw std::runtime_error("non-finite drift accumulation along a path");
}

}  // namespace

ItoDriftResult ito_drift(const SmoothField& field, const PathEnsemble& ensemble,
                         const ModelSpec& model, const SurfaceEval& theta) {
    require_c2(field);
    ItoDriftResult r;
    r.per_path.resize(ensemble.n_paths);
#pragma omp parallel for schedule(static)
    for (long long p = 0; p < static_cast<long long>(ensemble.n_paths); ++p)
        r.per_path[p] = ito_functional_one_path(field, model, ensemble.partition,
                                                ensemble.path(p), ensemble.jumps[p], theta);
    for (std::size_t p = 0; p < ensemble.n_paths; ++p)
        if (!std::isfinite(r.per_path[p]))
            abort_bad_derivative(field, ensemble.partition, ensemble.path(p));
    r.functional = mean_se(r.per_path);
    return r;
}

namespace serial_ref {
ItoDriftResult ito_drift(const SmoothField& field, const PathEnsemble& ensemble,
                         const ModelSpec& model, const SurfaceEval& theta) {
    require_c2(field);
    ItoDriftResult r;
    r.per_path.resize(ensemble.n_paths);
    for (std::size_t p = 0; p < ensemble.n_paths; ++p)
        r.per_path[p] = ito_functional_one_path(field, model, ensemble.partition,
                                                ensemble.path(p), ensemble.jumps[p], theta);
    r.functional = mean_se(r.per_path);
    return r;
}
}  // namespace serial_ref

QVCheckReport dirichlet_qv_check(const GridFunction& f, const PathEnsemble& ensemble,
                                 const ModelSpec& model, std::span<const std::size_t> strides) {
    const std::size_t n = ensemble.n_paths;
    const Partition& part = ensemble.partition;
    QVCheckReport rep;

    // Right side, mesh-free: int f_x(s,X_s)^2 sigma^2 ds + sum (Delta Y)^2.
    std::vector<double> rhs(n);
    std::vector<std::vector<double>> y_series(n);
    std::vector<std::vector<PathSeries::Event>> y_events(n);
#pragma omp parallel for schedule(static)
    for (long long p = 0; p < static_cast<long long>(n); ++p) {
        PathSeries ys = eval_on_path(f, ensemble.path(p), part, ensemble.jumps[p]);
        double acc = 0.0;
        for (std::size_t k = 0; k + 1 < part.times.size(); ++k) {
            const double t = part.times[k];
            const double x = ensemble.value(p, k);
            const double fx = f.one_sided_x_derivative(t, x, Side::right);
            const double sig = model.vol(t, x);
            acc += fx * fx * sig * sig * (part.times[k + 1] - t);
        }
        for (const auto& e : ys.events) acc += sq(e.y_post - e.y_pre);
        rhs[p] = acc;
        y_series[p] = std::move(ys.node_values);
        y_events[p] = std::move(ys.events);
    }
    MeanSE rhs_stat = mean_se(rhs);
    rep.rhs_mean = rhs_stat.mean;
    rep.rhs_se = rhs_stat.se;

    for (std::size_t stride : strides) {
        auto nodes = part.subsample_indices(stride);
        std::vector<double> lhs(n);
#pragma omp parallel for schedule(static)
        for (long long p = 0; p < static_cast<long long>(n); ++p) {
            double acc = 0.0;
            for (std::size_t c = 1; c < nodes.size(); ++c)
                acc += sq(y_series[p][nodes[c]] - y_series[p][nodes[c - 1]]);
            lhs[p] = acc;
        }
        MeanSE s = mean_se(lhs);
        QVCheckRow row;
        row.mesh = part.mesh() * static_cast<double>(stride);
        row.lhs_mean = s.mean;
        row.lhs_se = s.se;
        row.rel_error = rep.rhs_mean != 0.0 ? std::abs(s.mean - rep.rhs_mean) / rep.rhs_mean
                                            : std::abs(s.mean);
        rep.rows.push_back(row);
    }
    return rep;
}

namespace {

struct BinStats {
    double weighted_abs_mean = 0.0;   // sum_b w_b |mean_b|
    double weighted_se_sum = 0.0;     // sum_b w_b se_b
    double weighted_se_sq_sum = 0.0;  // sum_b (w_b se_b)^2
};

// Equal-mass bins over `key`, statistics of `delta` within each bin.
BinStats binned_abs_conditional_mean(std::span<const double> key, std::span<const double> delta,
                                     std::span<const std::size_t> order, std::size_t n_bins) {
    const std::size_t n = key.size();
    BinStats out;
    std::size_t start = 0;
    for (std::size_t b = 0; b < n_bins; ++b) {
        const std::size_t end = (b + 1 == n_bins) ? n : (n * (b + 1)) / n_bins;
        const std::size_t cnt = end - start;
        if (cnt == 0) continue;
        double s = 0.0;
        for (std::size_t i = start; i < end; ++i) s += delta[order[i]];
        const double mean = s / static_cast<double>(cnt);
        double ss = 0.0;
        for (std::size_t i = start; i < end; ++i) ss += sq(delta[order[i]] - mean);
        const double sd = cnt > 1 ? std::sqrt(ss / static_cast<double>(cnt - 1)) : 0.0;
        const double w = static_cast<double>(cnt) / static_cast<double>(n);
        const double se = sd / std::sqrt(static_cast<double>(cnt));
        out.weighted_abs_mean += w * std::abs(mean);
        out.weighted_se_sum += w * se;
        out.weighted_se_sq_sum += sq(w * se);
        start = end;
    }
    return out;
}

BinnedVariationResult binned_variation(const PathEnsemble& ensemble,
                                       std::span<const double> series_values,
                                       std::span<const std::size_t> coarse_nodes,
                                       std::size_t n_bins, std::size_t min_occupancy,
                                       bool condition_on_future) {
    const std::size_t n = ensemble.n_paths;
    const std::size_t n_nodes = ensemble.partition.times.size();
    while (n_bins > 1 && n / n_bins < min_occupancy) n_bins /= 2;

    BinnedVariationResult out;
    out.n_bins_used = n_bins;
    out.times.push_back(ensemble.partition.times[coarse_nodes.front()]);
    out.estimate.push_back(0.0);
    out.bias_bound.push_back(0.0);
    out.se.push_back(0.0);

    std::vector<double> key(n), delta(n);
    std::vector<std::size_t> order(n);
    double est = 0.0, bias = 0.0, var = 0.0;
    for (std::size_t c = 1; c < coarse_nodes.size(); ++c) {
        const std::size_t k_prev = coarse_nodes[c - 1];
        const std::size_t k_next = coarse_nodes[c];
        const std::size_t k_cond = condition_on_future ? k_next : k_prev;
        for (std::size_t p = 0; p < n; ++p) {
            key[p] = ensemble.value(p, k_cond);
            delta[p] = series_values[p * n_nodes + k_next] - series_values[p * n_nodes + k_prev];
        }
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::sort(order.begin(), order.end(),
                  [&](std::size_t a, std::size_t b) { return key[a] < key[b]; });
        BinStats bs = binned_abs_conditional_mean(key, delta, order, n_bins);
        est += bs.weighted_abs_mean;
        bias += bs.weighted_se_sum;
        var += bs.weighted_se_sq_sum;
        out.times.push_back(ensemble.partition.times[k_next]);
        out.estimate.push_back(est);
        out.bias_bound.push_back(bias);
        out.se.push_back(std::sqrt(var));
    }
    return out;
}

}  // namespace

BinnedVariationResult conditional_variation(const PathEnsemble& ensemble,
                                            std::span<const std::size_t> coarse_nodes,
                                            std::size_t n_bins, std::size_t min_occupancy) {
    return binned_variation(ensemble, ensemble.values, coarse_nodes, n_bins, min_occupancy,
                            /*condition_on_future=*/false);
}

BinnedVariationResult reversed_conditional_variation(const PathEnsemble& ensemble,
                                                     std::span<const double> a_values,
                                                     std::span<const std::size_t> coarse_nodes,
                                                     std::size_t n_bins,
                                                     std::size_t min_occupancy) {
    return binned_variation(ensemble, a_values, coarse_nodes, n_bins, min_occupancy,
                            /*condition_on_future=*/true);
}

}  // namespace driftlab
