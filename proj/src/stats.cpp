#include "driftlab/stats.hpp"

namespace driftlab {

namespace {
constexpr std::size_t kLeafSize = 64;

double pairwise_sum_rec(const double* v, std::size_t n) {
    if (n <= kLeafSize) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += v[i];
        return s;
    }
    const std::size_t half = n / 2;
    return pairwise_sum_rec(v, half) + pairwise_sum_rec(v + half, n - half);
}
}  // namespace

double pairwise_sum(std::span<const double> v) {
    return pairwise_sum_rec(v.data(), v.size());
}

MeanSE mean_se(std::span<const double> v) {
    MeanSE r;
    r.n = v.size();
    if (r.n == 0) return r;
    r.mean = pairwise_sum(v) / static_cast<double>(r.n);
    if (r.n == 1) return r;
    std::vector<double> dev2(r.n);
    for (std::size_t i = 0; i < r.n; ++i) dev2[i] = sq(v[i] - r.mean);
    const double var = pairwise_sum(dev2) / static_cast<double>(r.n - 1);
    r.sd = std::sqrt(var);
    r.se = r.sd / std::sqrt(static_cast<double>(r.n));
    return r;
}

namespace serial_ref {

double kahan_sum(std::span<const double> v) {
    double s = 0.0, c = 0.0;
    for (double x : v) {
        const double y = x - c;
        const double t = s + y;
        c = (t - s) - y;
        s = t;
    }
    return s;
}

}  // namespace serial_ref
}  // namespace driftlab
