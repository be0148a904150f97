#include <doctest.h>

#include <cmath>

#include "driftlab/marginals.hpp"
#include "driftlab/reference_models.hpp"
#include "driftlab/stats.hpp"

using namespace driftlab;

namespace {
ModelSpec frozen_at(double c) {
    ModelSpec m;
    m.tag = "frozen";
    m.drift = [](double, double) { return 0.0; };
    m.vol = [](double, double) { return 0.0; };
    m.initial_law = [c](Rng&) { return c; };
    return m;
}

std::vector<double> linspace(double a, double b, std::size_t n) {
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i)
        v[i] = a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1);
    return v;
}
}  // namespace

TEST_CASE("pool-adjacent-violators") {
    std::vector<double> v{3.0, 1.0, 2.0};
    std::vector<double> w{1.0, 1.0, 1.0};
    auto iso = pav_nondecreasing(v, w);
    CHECK(iso == std::vector<double>{2.0, 2.0, 2.0});

    std::vector<double> sorted{-1.0, 0.0, 2.0};
    CHECK(pav_nondecreasing(sorted, w) == sorted);
}

TEST_CASE("degenerate marginal gives the exact hinge after projection") {
    PathEnsemble e = simulate(frozen_at(0.7), Partition::uniform(1.0, 8), 50, 1);
    std::vector<double> xn = linspace(-2.0, 2.0, 17);
    CallSurface cs = estimate_call_surface(e, xn, {0.5, 1.0});
    for (std::size_t i = 0; i < cs.surface.n_rows(); ++i)
        for (std::size_t j = 0; j < xn.size(); ++j)
            CHECK(cs.surface.at(i, j) == doctest::Approx(std::max(0.7 - xn[j], 0.0)));
    CHECK(cs.projection_distance <= 1e-12);
    cs.validate(1e-9, 1e-9);
}

TEST_CASE("projection output is convex with slopes in [-1, 0] for jumpy data") {
    PathEnsemble e = simulate(models::bm_jump(), Partition::uniform(1.0, 64), 3000, 2);
    CallSurface cs = estimate_call_surface(e, linspace(-4.0, 6.0, 41),
                                           {0.25, 0.5, 0.75, 1.0},
                                           [](double t) { return 0.5 * t; });
    cs.validate(0.05, 0.05);
    CHECK(cs.snap_offset == 0.0);
    CHECK(!e.jumps.empty());
}

TEST_CASE("requested times snap to the nearest node with reported offset") {
    PathEnsemble e = simulate(frozen_at(0.0), Partition::uniform(1.0, 10), 4, 1);
    CallSurface cs = estimate_call_surface(e, linspace(-1.0, 1.0, 5), {0.33});
    CHECK(cs.surface.t_nodes().back() == doctest::Approx(0.3));
    CHECK(cs.snap_offset == doctest::Approx(0.03));
}

TEST_CASE("empty ensemble is rejected") {
    PathEnsemble e;
    e.partition = Partition::uniform(1.0, 2);
    CHECK_THROWS_AS(estimate_call_surface(e, {-1.0, 1.0}, {1.0}), std::invalid_argument);
}

TEST_CASE("forward PDE surface") {
    SUBCASE("no diffusion freezes the initial profile") {
        ModelSpec still = frozen_at(0.0);
        CallSurface cs = call_surface_forward_pde(
            still, [](double x) { return std::max(-x, 0.0); }, {-4.0, 4.0, 33, 1.0, 16});
        for (std::size_t i = 0; i < cs.surface.n_rows(); ++i)
            for (std::size_t j = 0; j < cs.surface.n_cols(); ++j)
                CHECK(cs.surface.at(i, j) ==
                      doctest::Approx(std::max(-cs.surface.x_nodes()[j], 0.0)));
    }
    SUBCASE("nondecreasing in t and convex at a coarse grid") {
        CallSurface cs = call_surface_forward_pde(
            models::bm(), [](double x) { return std::max(-x, 0.0); },
            {-6.0, 6.0, 121, 1.0, 64});
        const GridFunction& C = cs.surface;
        for (std::size_t j = 0; j < C.n_cols(); ++j)
            for (std::size_t i = 1; i < C.n_rows(); ++i)
                CHECK(C.at(i, j) >= C.at(i - 1, j) - 1e-10);
        for (std::size_t i = 0; i < C.n_rows(); ++i)
            for (std::size_t s = 1; s + 1 < C.n_cols(); ++s)
                CHECK(C.slope(i, s) >= C.slope(i, s - 1) - 1e-10);
    }
    SUBCASE("matches the closed form at a moderate grid") {
        CallSurface cs = call_surface_forward_pde(
            models::bm(), [](double x) { return std::max(-x, 0.0); },
            {-8.0, 8.0, 161, 1.0, 128});
        double worst = 0.0;
        for (std::size_t i = 0; i < cs.surface.n_rows(); ++i) {
            const double t = cs.surface.t_nodes()[i];
            if (t < 0.25) continue;
            for (std::size_t j = 0; j < cs.surface.n_cols(); ++j) {
                const double x = cs.surface.x_nodes()[j];
                if (std::abs(x) > std::sqrt(t)) continue;
                const double exact = bm_call_value(t, x);
                worst = std::max(worst, std::abs(cs.surface.at(i, j) - exact) / exact);
            }
        }
        CHECK(worst <= 0.02);
    }
    SUBCASE("drifted models are rejected") {
        CHECK_THROWS_AS(
            call_surface_forward_pde(models::drifted_bm(),
                                     [](double x) { return std::max(-x, 0.0); },
                                     {-4.0, 4.0, 33, 1.0, 16}),
            std::invalid_argument);
    }
    SUBCASE("jump models are rejected") {
        CHECK_THROWS_AS(
            call_surface_forward_pde(models::bm_jump(),
                                     [](double x) { return std::max(-x, 0.0); },
                                     {-4.0, 4.0, 33, 1.0, 16}),
            std::invalid_argument);
    }
}

TEST_CASE("local volatility recovery") {
    SUBCASE("round trip through the forward PDE with state-dependent volatility") {
        ModelSpec tv = models::tanh_vol();
        CallSurface cs = call_surface_forward_pde(
            tv, [](double x) { return std::max(-x, 0.0); }, {-4.0, 4.0, 321, 1.0, 512});
        double worst = 0.0;
        for (std::size_t i = 0; i < cs.surface.n_rows(); ++i) {
            const double t = cs.surface.t_nodes()[i];
            if (t < 0.25 || i + 1 >= cs.surface.n_rows()) continue;
            for (std::size_t j = 0; j < cs.surface.n_cols(); ++j) {
                const double x = cs.surface.x_nodes()[j];
                if (std::abs(x) > 0.5 * std::sqrt(t)) continue;
                auto sig = dupire_sigma(cs, i, j);
                REQUIRE(sig.has_value());
                worst = std::max(worst, std::abs(*sig - tv.vol(t, x)) / tv.vol(t, x));
            }
        }
        CHECK(worst <= 0.03);
    }
    SUBCASE("flat regions return the undefined marker, never a number") {
        ModelSpec still = frozen_at(0.0);
        CallSurface cs = call_surface_forward_pde(
            still, [](double x) { return std::max(-x, 0.0); }, {-4.0, 4.0, 33, 1.0, 16});
        CHECK(!dupire_sigma(cs, 8, 4).has_value());
    }
    SUBCASE("boundary points are not interior") {
        CallSurface cs = call_surface_forward_pde(
            models::bm(), [](double x) { return std::max(-x, 0.0); },
            {-4.0, 4.0, 33, 1.0, 16});
        CHECK_THROWS_AS(dupire_sigma(cs, 0, 5), std::invalid_argument);
        CHECK_THROWS_AS(dupire_sigma(cs, 3, 0), std::invalid_argument);
    }
}

TEST_CASE("density slices") {
    SUBCASE("degenerate law concentrates on the nearest node") {
        PathEnsemble e = simulate(frozen_at(0.52), Partition::uniform(1.0, 4), 100, 1);
        std::vector<double> xn = linspace(-2.0, 2.0, 17);  // h = 0.25
        CallSurface cs = estimate_call_surface(e, xn, {1.0});
        DensitySlice d = density(cs, 1.0);
        // unit atom at the node nearest 0.52 (x = 0.5)
        double mass_near = 0.0;
        for (std::size_t j = 0; j < xn.size(); ++j)
            if (std::abs(xn[j] - 0.5) <= 0.26) mass_near += d.values[j] * 0.25;
        CHECK(d.mass == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(mass_near == doctest::Approx(1.0).epsilon(1e-9));
    }
    SUBCASE("closed-form surface reproduces the normal density within the grid bound") {
        std::vector<double> xn = linspace(-5.0, 5.0, 41);  // h = 0.25
        CallSurface cs;
        cs.surface = GridFunction::from_samples({0.0, 1.0}, xn, [](double t, double x) {
            return bm_call_value(std::max(t, 1.0), x);  // the t=1 row is what we read
        });
        cs.mean_curve = {0.0, 0.0};
        cs.adjusted_variation = {0.0, 0.0};
        DensitySlice d = density(cs, 1.0);
        // discretization bound h^2 max|p''|/12 with max|p''| = 2 phi(sqrt(3))... below 0.5
        const double bound = 0.25 * 0.25 * 0.5 / 12.0 + 1e-6;
        for (std::size_t j = 1; j + 1 < xn.size(); ++j)
            CHECK(std::abs(d.values[j] - norm_pdf(xn[j])) <= bound);
        CHECK(d.clipped_mass == 0.0);
        // total mass sits inside [1 - tail(grid), 1]
        CHECK(d.mass <= 1.0 + 1e-9);
        CHECK(d.mass >= 1.0 - 2.0 * norm_cdf(-4.75) - 1e-3);
    }
}

TEST_CASE("conditional expectation surfaces") {
    PdeGrid grid{-8.0, 8.0, 257, 1.0, 256};
    SUBCASE("linear payoffs reproduce the martingale identity") {
        GridFunction f = conditional_expectation_surface(models::bm(),
                                                         {[](double x) { return x; }, 1.0},
                                                         1.0, grid);
        for (std::size_t i = 0; i < f.n_rows(); i += 64)
            for (std::size_t j = 0; j < f.n_cols(); j += 16)
                CHECK(f.at(i, j) == doctest::Approx(f.x_nodes()[j]).epsilon(1e-10));
    }
    SUBCASE("constant payoffs stay constant") {
        GridFunction f = conditional_expectation_surface(models::bm(),
                                                         {[](double) { return 2.5; }, 0.0},
                                                         1.0, grid);
        CHECK(f.at(0, 100) == doctest::Approx(2.5).epsilon(1e-12));
        CHECK(f.at(200, 30) == doctest::Approx(2.5).epsilon(1e-12));
    }
    SUBCASE("call payoff matches the closed form in the interior") {
        GridFunction f = conditional_expectation_surface(
            models::bm(), {[](double x) { return std::max(x, 0.0); }, 1.0}, 1.0, grid);
        double worst = 0.0;
        for (std::size_t i = 0; i < f.n_rows(); ++i) {
            const double t = f.t_nodes()[i];
            if (t > 0.75) continue;
            for (std::size_t j = 0; j < f.n_cols(); ++j) {
                const double x = f.x_nodes()[j];
                if (std::abs(x) > 1.5 * std::sqrt(1.0 - t)) continue;
                const double tau = 1.0 - t;
                const double d = x / std::sqrt(tau);
                const double exact = std::sqrt(tau) * norm_pdf(d) + x * norm_cdf(d);
                worst = std::max(worst, std::abs(f.at(i, j) - exact) / exact);
            }
        }
        CHECK(worst <= 0.01);
    }
    SUBCASE("tower property against a Monte Carlo mean") {
        GridFunction f = conditional_expectation_surface(
            models::bm(), {[](double x) { return std::max(x, 0.0); }, 1.0}, 1.0, grid);
        PathEnsemble e = simulate(models::bm(), Partition::uniform(1.0, 64), 50000, 3);
        std::vector<double> payoff(e.n_paths);
        for (std::size_t p = 0; p < e.n_paths; ++p)
            payoff[p] = std::max(e.value(p, 64), 0.0);
        MeanSE m = mean_se(payoff);
        CHECK(std::abs(f.eval(0.0, 0.0) - m.mean) <= 3.0 * m.se + 1e-3);
    }
}

TEST_CASE("raw call surface is nondecreasing in t up to noise for martingales") {
    const std::size_t n = 20000;
    PathEnsemble e = simulate(models::bm(), Partition::uniform(1.0, 16), n, 5);
    std::vector<double> xn = linspace(-2.0, 2.0, 9);
    // per-x increments of the per-path hinge between consecutive quarter nodes
    for (double x : xn) {
        for (std::size_t k = 4; k <= 12; k += 4) {
            std::vector<double> inc(n);
            for (std::size_t p = 0; p < n; ++p)
                inc[p] = std::max(e.value(p, k + 4) - x, 0.0) -
                         std::max(e.value(p, k) - x, 0.0);
            MeanSE m = mean_se(inc);
            CHECK(m.mean >= -3.0 * m.se);
        }
    }
}
