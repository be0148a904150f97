#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "driftlab/models.hpp"
#include "driftlab/reference_models.hpp"
#include "driftlab/stats.hpp"

using namespace driftlab;

namespace {
ModelSpec compensated_poisson() {
    // generator drift 0 with unit jumps: the simulated process is the
    // compensated Poisson martingale N_t - t
    ModelSpec m;
    m.tag = "compensated_poisson";
    m.drift = [](double, double) { return 0.0; };
    m.vol = [](double, double) { return 0.0; };
    m.jumps = std::vector<JumpAtom>{{1.0, 1.0}};
    m.initial_law = [](Rng&) { return 0.0; };
    return m;
}
}  // namespace

TEST_CASE("partition basics") {
    Partition p = Partition::uniform(1.0, 4);
    CHECK(p.times.size() == 5);
    CHECK(p.mesh() == doctest::Approx(0.25));
    p.validate();

    Partition bad;
    bad.times = {0.0, 0.5, 0.5};
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    Partition bad2;
    bad2.times = {0.1, 0.5};
    CHECK_THROWS_AS(bad2.validate(), std::invalid_argument);
}

TEST_CASE("single driftless path starts at zero with no jumps") {
    PathEnsemble e = simulate(models::bm(), Partition::uniform(1.0, 1024), 1, 3);
    CHECK(e.value(0, 0) == 0.0);
    CHECK(e.jumps[0].empty());
    e.validate();
}

TEST_CASE("brownian increments have the step variance") {
    const std::size_t n = 4000, steps = 64;
    PathEnsemble e = simulate(models::bm(), Partition::uniform(1.0, steps), n, 11);
    std::vector<double> sq_inc;
    sq_inc.reserve(n * steps);
    for (std::size_t p = 0; p < n; ++p)
        for (std::size_t k = 0; k < steps; ++k)
            sq_inc.push_back(sq(e.value(p, k + 1) - e.value(p, k)));
    MeanSE m = mean_se(sq_inc);
    const double h = 1.0 / steps;
    CHECK(std::abs(m.mean - h) <= 3.0 * m.se);
}

TEST_CASE("deterministic unit drift hits the nodes exactly") {
    PathEnsemble e = simulate(models::pure_drift(), Partition::uniform(1.0, 256), 2, 5);
    for (std::size_t k = 0; k <= 256; ++k)
        CHECK(e.value(0, k) == e.partition.times[k]);
    CHECK(e.jumps[0].empty());
}

TEST_CASE("jump count matches the Poisson rate") {
    const std::size_t n = 100000;
    PathEnsemble e = simulate(compensated_poisson(), Partition::uniform(1.0, 256), n, 17);
    std::vector<double> counts(n);
    for (std::size_t p = 0; p < n; ++p) counts[p] = static_cast<double>(e.jumps[p].size());
    MeanSE m = mean_se(counts);
    // Poisson(1) count oracle: mean 1, sd 1
    CHECK(std::abs(m.mean - 1.0) <= 3.0 / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("reproducibility is bit exact and matches the serial driver") {
    Partition part = Partition::uniform(1.0, 64);
    PathEnsemble a = simulate(models::bm_jump(), part, 500, 99);
    PathEnsemble b = simulate(models::bm_jump(), part, 500, 99);
    CHECK(a.values == b.values);
    REQUIRE(a.jumps.size() == b.jumps.size());
    for (std::size_t p = 0; p < a.jumps.size(); ++p) {
        REQUIRE(a.jumps[p].size() == b.jumps[p].size());
        for (std::size_t j = 0; j < a.jumps[p].size(); ++j) {
            CHECK(a.jumps[p][j].time == b.jumps[p][j].time);
            CHECK(a.jumps[p][j].post == b.jumps[p][j].post);
        }
    }
    PathEnsemble c = serial_ref::simulate(models::bm_jump(), part, 500, 99);
    CHECK(a.values == c.values);
}

TEST_CASE("martingale and weak-convergence sanity") {
    const std::size_t n = 50000;
    PathEnsemble e = simulate(models::bm(), Partition::uniform(1.0, 64), n, 23);
    std::vector<double> xt(n), xt2(n);
    for (std::size_t p = 0; p < n; ++p) {
        xt[p] = e.value(p, 64);
        xt2[p] = sq(e.value(p, 64));
    }
    MeanSE m = mean_se(xt);
    CHECK(std::abs(m.mean) <= 3.0 * m.se);
    MeanSE v = mean_se(xt2);
    CHECK(std::abs(v.mean - 1.0) <= 3.0 * v.se);
}

TEST_CASE("jump bookkeeping: raw counter increments equal the jump ledger") {
    PathEnsemble e = simulate(models::jump_counter(), Partition::uniform(1.0, 256), 200, 31);
    for (std::size_t p = 0; p < e.n_paths; ++p) {
        std::size_t ji = 0;
        for (std::size_t k = 0; k < 256; ++k) {
            double jumped = 0.0;
            while (ji < e.jumps[p].size() && e.jumps[p][ji].time <= e.partition.times[k + 1]) {
                jumped += e.jumps[p][ji].post - e.jumps[p][ji].pre;
                ++ji;
            }
            CHECK(e.value(p, k + 1) - e.value(p, k) == jumped);
        }
        for (const auto& j : e.jumps[p]) CHECK(j.post - j.pre == 1.0);
    }
}

TEST_CASE("simulation aborts on bad states") {
    ModelSpec bad = models::bm();
    bad.tag = "bad";
    bad.drift = [](double t, double) { return t > 0.5 ? std::nan("") : 0.0; };
    CHECK_THROWS_WITH_AS(simulate(bad, Partition::uniform(1.0, 8), 1, 1) /* */,
                         doctest::Contains("non-finite"), std::runtime_error);

    ModelSpec explode = models::bm();
    explode.tag = "explode";
    explode.drift = [](double, double x) { return 1e4 * (1.0 + x * x); };
    explode.explosion_bound = 100.0;
    CHECK_THROWS_WITH_AS(simulate(explode, Partition::uniform(1.0, 64), 1, 1),
                         doctest::Contains("explosion"), std::runtime_error);

    CHECK_THROWS_AS(simulate(models::bm(), Partition::uniform(1.0, 8), 0, 1),
                    std::invalid_argument);
    CHECK_THROWS_AS(simulate(models::bm(), Partition::uniform(2.0, 8), 1, 1),
                    std::invalid_argument);
}

TEST_CASE("thinning guards") {
    // intensity above the declared bound at visited states
    ModelSpec m = models::bm();
    m.tag = "hot_intensity";
    m.jumps = JumpDensity{[](double, double) { return 2.0; },
                          1.0,
                          [](double, double, double) { return 0.0; },
                          [](double, double x, Rng&) { return x + 1.0; },
                          [](double, double) { return 2.0; }};
    CHECK_THROWS_WITH_AS(simulate(m, Partition::uniform(1.0, 512), 64, 2),
                         doctest::Contains("intensity bound"), std::runtime_error);

    // bound times mesh above one: misconfigured partition
    ModelSpec fast = models::bm();
    fast.tag = "fast_jumps";
    fast.jumps = std::vector<JumpAtom>{{10.0, 1.0}};
    CHECK_THROWS_WITH_AS(simulate(fast, Partition::uniform(1.0, 4), 8, 2),
                         doctest::Contains("refine"), std::runtime_error);
}

TEST_CASE("drift paths") {
    Partition part = Partition::uniform(1.0, 256);
    SUBCASE("martingale model has zero drift path") {
        PathEnsemble e = simulate(models::bm(), part, 16, 3);
        DriftPaths a = drift_path(models::bm(), e);
        for (double v : a.values) CHECK(v == 0.0);
    }
    SUBCASE("unit drift integrates to t exactly") {
        PathEnsemble e = simulate(models::drifted_bm(), part, 4, 3);
        DriftPaths a = drift_path(models::drifted_bm(), e);
        for (std::size_t k = 0; k <= 256; ++k)
            CHECK(a.value(2, k) == doctest::Approx(part.times[k]).epsilon(1e-14));
    }
    SUBCASE("mean reversion agrees with an independent quadrature per path") {
        ModelSpec mr = models::mean_revert();
        Partition fine = Partition::uniform(1.0, 4096);
        PathEnsemble e = simulate(mr, fine, 64, 7);
        DriftPaths a = drift_path(mr, e);
        for (std::size_t p = 0; p < e.n_paths; ++p) {
            // trapezoidal oracle on the same samples; for uniform steps the
            // two rules differ by (h/2)(X_T - X_0) exactly
            double trap = 0.0;
            for (std::size_t k = 0; k + 1 < fine.times.size(); ++k)
                trap += -0.5 * (e.value(p, k) + e.value(p, k + 1)) *
                        (fine.times[k + 1] - fine.times[k]);
            CHECK(std::abs(a.value(p, 4096) - trap) <= 10.0 * fine.mesh());
        }
    }
    SUBCASE("tag mismatch is rejected") {
        PathEnsemble e = simulate(models::bm(), part, 2, 3);
        CHECK_THROWS_AS(drift_path(models::drifted_bm(), e), std::invalid_argument);
    }
}

TEST_CASE("generator application") {
    C2Function identity{[](double x) { return x; }, [](double) { return 1.0; },
                        [](double) { return 0.0; }};
    C2Function square{[](double x) { return x * x; }, [](double x) { return 2.0 * x; },
                      [](double) { return 2.0; }};

    SUBCASE("identity returns the drift for any kernel") {
        ModelSpec m = models::bm_jump();
        GeneratorValue g = generator_apply(m, identity, 0.3, 0.7);
        CHECK(g.value == doctest::Approx(m.drift(0.3, 0.7)).epsilon(1e-14));
        CHECK(g.jump_integral == 0.0);
    }
    SUBCASE("square without jumps") {
        ModelSpec m = models::drifted_bm();
        GeneratorValue g = generator_apply(m, square, 0.2, 1.5);
        CHECK(g.value == doctest::Approx(1.0 + 2.0 * 1.5).epsilon(1e-14));
    }
    SUBCASE("square with unit jumps adds one") {
        ModelSpec m = models::bm();
        m.jumps = std::vector<JumpAtom>{{1.0, 1.0}};
        GeneratorValue g = generator_apply(m, square, 0.2, 1.5);
        // closed-form piecewise integration oracle: sigma^2 + 2 b x + 1
        CHECK(g.jump_integral == doctest::Approx(1.0).epsilon(1e-14));
        CHECK(g.value == doctest::Approx(1.0 + 0.0 + 1.0).epsilon(1e-14));
    }
    SUBCASE("gaussian jump density by quadrature matches the moment formula") {
        const double mj = 0.3, sj = 0.2, lam = 1.5;
        ModelSpec m = models::bm();
        m.jumps = JumpDensity{
            [lam](double, double) { return lam; }, lam,
            [=](double, double x, double y) {
                return lam * norm_pdf((y - x - mj) / sj) / sj;
            },
            [=](double, double x, Rng& rng) { return x + mj + sj * rng.normal(); },
            [=](double, double) { return lam * mj; }};
        QuadratureOptions opts;
        opts.y_min = -10.0;
        opts.y_max = 10.0;
        GeneratorValue g = generator_apply(m, square, 0.1, 0.4, opts);
        CHECK(g.jump_integral == doctest::Approx(lam * (mj * mj + sj * sj)).epsilon(1e-8));
    }
    SUBCASE("quadrature failure carries a residual estimate") {
        ModelSpec m = models::bm();
        m.jumps = JumpDensity{[](double, double) { return 1.0; }, 1.0,
                              [](double, double, double y) {
                                  return std::abs(std::sin(50.0 * y)) / 0.6366;
                              },
                              [](double, double x, Rng&) { return x; },
                              [](double, double) { return 0.0; }};
        QuadratureOptions opts;
        opts.tol = 1e-14;
        opts.max_depth = 3;
        try {
            generator_apply(m, square, 0.1, 0.4, opts);
            FAIL("expected quadrature error");
        } catch (const QuadratureError& qe) {
            CHECK(qe.residual() > 0.0);
        }
    }
}
