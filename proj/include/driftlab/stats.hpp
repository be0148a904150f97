#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace driftlab {

// Pairwise (cascade) summation with a fixed recursion tree. The tree depends
// only on the element count, so serial and OpenMP callers that fill the same
// buffer get bit-identical totals.
double pairwise_sum(std::span<const double> v);

struct MeanSE {
    double mean = 0.0;
    double se = 0.0;  // standard error of the mean
    double sd = 0.0;
    std::size_t n = 0;
};

// Two-pass mean / standard error using pairwise sums throughout.
MeanSE mean_se(std::span<const double> v);

namespace serial_ref {
// Straight left-to-right Kahan sum, kept as an independent numerical check
// against the pairwise kernel.
double kahan_sum(std::span<const double> v);
}  // namespace serial_ref

inline double sq(double x) { return x * x; }

// Standard normal density and CDF.
inline double norm_pdf(double z) {
    return std::exp(-0.5 * z * z) * 0.3989422804014326779;
}
inline double norm_cdf(double z) {
    return 0.5 * std::erfc(-z * 0.7071067811865475244);
}

// E[(X - x)_+] for X ~ N(0, t); the closed-form call profile of Brownian
// motion started at 0.
inline double bm_call_value(double t, double x) {
    if (t <= 0.0) return x < 0.0 ? -x : 0.0;
    const double s = std::sqrt(t);
    return s * norm_pdf(x / s) - x * norm_cdf(-x / s);
}

// Var[(X - x)_+] for X ~ N(0, t), for exact standard errors of the Monte
// Carlo call estimator.
inline double bm_call_variance(double t, double x) {
    if (t <= 0.0) return 0.0;
    const double a = x / std::sqrt(t);
    const double m1 = bm_call_value(t, x);
    const double m2 = (t + x * x) * norm_cdf(-a) - std::sqrt(t) * x * norm_pdf(a);
    return std::max(0.0, m2 - m1 * m1);
}

}  // namespace driftlab
