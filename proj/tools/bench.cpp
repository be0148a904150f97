// Timing comparison of the OpenMP kernels against their serial references.

#include <chrono>
#include <cstdio>
#include <functional>

#include <omp.h>

#include "driftlab/calculus.hpp"
#include "driftlab/marginals.hpp"
#include "driftlab/measures.hpp"
#include "driftlab/reference_models.hpp"

using namespace driftlab;

namespace {

double time_of(const std::function<void()>& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void row(const char* name, double serial, double parallel) {
    std::printf("%-28s %10.3f s %10.3f s %8.2fx\n", name, serial, parallel, serial / parallel);
}

}  // namespace

int main() {
    std::printf("threads: %d\n", omp_get_max_threads());
    std::printf("%-28s %12s %12s %9s\n", "kernel", "serial", "openmp", "speedup");

    const std::size_t n_paths = 40000;
    ModelSpec model = models::bm_jump();
    Partition part = Partition::uniform(1.0, 512);

    PathEnsemble e;
    {
        const double ts = time_of([&] { e = serial_ref::simulate(model, part, n_paths, 7); });
        PathEnsemble ep;
        const double tp = time_of([&] { ep = simulate(model, part, n_paths, 7); });
        row("simulate", ts, tp);
        if (ep.values != e.values) std::printf("  WARNING: parallel != serial\n");
    }

    std::vector<double> x_nodes, t_nodes;
    for (int j = -16; j <= 16; ++j) x_nodes.push_back(0.25 * j);
    for (int i = 1; i <= 16; ++i) t_nodes.push_back(i / 16.0);
    {
        CallSurface a, b;
        const double ts =
            time_of([&] { a = serial_ref::estimate_call_surface(e, x_nodes, t_nodes); });
        const double tp = time_of([&] { b = estimate_call_surface(e, x_nodes, t_nodes); });
        row("call surface", ts, tp);
        if (a.raw != b.raw) std::printf("  WARNING: parallel != serial\n");
    }

    auto theta = [](double, double x) { return std::abs(x) < 2.0 ? 1.0 : 0.0; };
    {
        std::vector<double> a, b;
        const double ts = time_of([&] { a = serial_ref::per_path_drift_sums(e, model, theta); });
        const double tp = time_of([&] { b = per_path_drift_sums(e, model, theta); });
        row("drift functional", ts, tp);
        if (a != b) std::printf("  WARNING: parallel != serial\n");
    }

    SmoothField field{[](double, double x) { return std::sin(x); },
                      [](double, double) { return 0.0; },
                      [](double, double x) { return std::cos(x); },
                      [](double, double x) { return -std::sin(x); }};
    {
        ItoDriftResult a, b;
        const double ts = time_of([&] { a = serial_ref::ito_drift(field, e, model, theta); });
        const double tp = time_of([&] { b = ito_drift(field, e, model, theta); });
        row("drift of f(t, X)", ts, tp);
        if (a.per_path != b.per_path) std::printf("  WARNING: parallel != serial\n");
    }
    return 0;
}
