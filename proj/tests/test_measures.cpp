#include <doctest.h>

#include <cmath>
#include <random>

#include "driftlab/measures.hpp"
#include "driftlab/reference_models.hpp"
#include "driftlab/verify.hpp"

using namespace driftlab;

namespace {

CompactGridFunction random_staircase(std::mt19937_64& gen) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> tn{0.0, 0.2, 0.4, 0.6, 0.8};
    std::vector<double> xn{-2.0, -1.0, -0.3, 0.6, 1.4, 2.0};
    std::vector<double> vals(tn.size() * xn.size(), 0.0);
    for (std::size_t i = 1; i + 1 < tn.size(); ++i)
        for (std::size_t j = 1; j + 1 < xn.size(); ++j) vals[i * xn.size() + j] = u(gen);
    double lip = 0.0;
    for (std::size_t i = 0; i < tn.size(); ++i)
        for (std::size_t s = 0; s + 1 < xn.size(); ++s)
            lip = std::max(lip, std::abs((vals[i * xn.size() + s + 1] - vals[i * xn.size() + s]) /
                                         (xn[s + 1] - xn[s])));
    GridFunction g(tn, xn, std::move(vals), lip);
    return CompactGridFunction(std::move(g), {0.2, 0.8, -2.0, 2.0});
}

double simpson2d(const std::function<double(double, double)>& f, double t0, double t1,
                 double x0, double x1, int nt, int nx) {
    double acc = 0.0;
    const double dt = (t1 - t0) / nt;
    auto inner = [&](double t) {
        double s = 0.0;
        const double dx = (x1 - x0) / nx;
        for (int j = 0; j < nx; ++j) {
            const double a = x0 + j * dx, b = a + dx;
            s += (b - a) / 6.0 * (f(t, a) + 4.0 * f(t, 0.5 * (a + b)) + f(t, b));
        }
        return s;
    };
    for (int i = 0; i < nt; ++i) {
        const double a = t0 + i * dt, b = a + dt;
        acc += (b - a) / 6.0 * (inner(a) + 4.0 * inner(0.5 * (a + b)) + inner(b));
    }
    return acc;
}

}  // namespace

TEST_CASE("bilinear functional: time-constant arguments telescope to zero") {
    GridFunction f({0.0}, {-3.0, 0.0, 3.0}, {-1, 0.5, 2}, 1.0);
    GridFunction g({0.0}, {-3.0, 1.0, 3.0}, {2, 0.3, -1}, 1.0);
    CompactGridFunction theta = CompactGridFunction::tensor(
        {0.0, 0.25, 0.5, 0.75}, {0.0, 0.6, 1.0, 0.0}, {-2.0, -1.0, 1.0, 2.0},
        {0.0, 1.0, 1.0, 0.0});
    CHECK(std::abs(bilinear_functional(f, g, theta)) <= 1e-14);
}

TEST_CASE("bilinear functional is linear in the test function on shared grids") {
    std::mt19937_64 gen(33);
    CompactGridFunction f = random_staircase(gen);
    CompactGridFunction g = random_staircase(gen);
    CompactGridFunction t1 = random_staircase(gen);
    CompactGridFunction t2 = random_staircase(gen);
    const double a = 2.25;
    // a*t1 + t2 on the shared grid
    std::vector<double> vals(t1.fn().n_rows() * t1.fn().n_cols());
    for (std::size_t i = 0; i < t1.fn().n_rows(); ++i)
        for (std::size_t j = 0; j < t1.fn().n_cols(); ++j)
            vals[i * t1.fn().n_cols() + j] = a * t1.fn().at(i, j) + t2.fn().at(i, j);
    CompactGridFunction combo(
        GridFunction(t1.fn().t_nodes(), t1.fn().x_nodes(), std::move(vals),
                     a * t1.fn().lipschitz_x() + t2.fn().lipschitz_x()),
        t1.box());
    const double lhs = bilinear_functional(f.fn(), g.fn(), combo);
    const double rhs = a * bilinear_functional(f.fn(), g.fn(), t1) +
                       bilinear_functional(f.fn(), g.fn(), t2);
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("bilinear functional is bit-symmetric under swapping the surfaces") {
    std::mt19937_64 gen(5);
    for (int trial = 0; trial < 20; ++trial) {
        CompactGridFunction a = random_staircase(gen);
        CompactGridFunction b = random_staircase(gen);
        CompactGridFunction theta = random_staircase(gen);
        const double ab = bilinear_functional(a.fn(), b.fn(), theta);
        const double ba = bilinear_functional(b.fn(), a.fn(), theta);
        CHECK(ab == ba);  // bit-level
    }
}

TEST_CASE("bilinear functional matches the smooth-density quadrature oracle") {
    // smooth f, g with analytic partials; the grid value must approach
    // int theta (f_t g_xx + g_t f_xx) dt dx at first order in the t-mesh
    auto f = [](double t, double x) { return (1.0 + 0.5 * t) * std::sin(x); };
    auto f_t = [](double t, double x) { (void)t; return 0.5 * std::sin(x); };
    auto f_xx = [](double t, double x) { return -(1.0 + 0.5 * t) * std::sin(x); };
    auto g = [](double t, double x) { return (1.0 + t * t) * std::cos(x); };
    auto g_t = [](double t, double x) { return 2.0 * t * std::cos(x); };
    auto g_xx = [](double t, double x) { return -(1.0 + t * t) * std::cos(x); };

    CompactGridFunction theta = CompactGridFunction::tensor(
        {0.0, 0.25, 0.375, 0.625, 0.75}, {0.0, 0.5, 1.0, 0.5, 0.0},
        {-2.0, -1.5, 1.5, 2.0}, {0.0, 1.0, 1.0, 0.0});
    auto theta_eval = [&](double t, double x) { return theta.fn().eval(t, x); };

    const double oracle = simpson2d(
        [&](double t, double x) {
            return theta_eval(t, x) * (f_t(t, x) * g_xx(t, x) + g_t(t, x) * f_xx(t, x));
        },
        0.0, 0.75, -2.0, 2.0, 384, 384);

    double prev_err = 0.0;
    for (int level = 0; level < 2; ++level) {
        const double ts = 1.0 / (32 << level), h = 1.0 / (8 << level);
        std::vector<double> tn, xn;
        for (double t = 0.0; t <= 1.0 + 1e-12; t += ts) tn.push_back(t);
        for (double x = -3.0; x <= 3.0 + 1e-12; x += h) xn.push_back(x);
        GridFunction fg = GridFunction::from_samples(tn, xn, f);
        GridFunction gg = GridFunction::from_samples(tn, xn, g);
        const double v = bilinear_functional(fg, gg, theta);
        const double err = std::abs(v - oracle);
        if (level == 0) {
            prev_err = err;
            CHECK(err <= 0.02);  // first-order error at the coarse mesh
        } else {
            CHECK(err <= 0.7 * prev_err);  // decays under refinement
        }
    }
}

TEST_CASE("linear time-independent surfaces are annihilated for every test function") {
    // For f = a x + b constant in t, the functional reduces to
    // a (int C_x d_t theta - int theta_x^- d_t C), which vanishes by discrete
    // integration by parts in t and x. This must hold to rounding for any
    // middle surface, making it a sharp check of the quadrature's structure.
    GridFunction lin({0.0}, {-3.0, 3.0}, {-2.6, 3.4}, 1.0);  // slope 1, offset 0.4
    std::mt19937_64 gen(44);
    for (int trial = 0; trial < 20; ++trial) {
        CompactGridFunction c = random_staircase(gen);
        CompactGridFunction theta = random_staircase(gen);
        const double v = bilinear_functional(lin, c.fn(), theta);
        CHECK(std::abs(v) <= 1e-13);
    }
}

TEST_CASE("left-row convention: constant-path quadratic variation identity") {
    // For a constant path X = 0 the call profile is the hinge (-x)_+ and the
    // generalized drift of f reduces to the bilinear term, which must equal
    // -(1/2) sum_t (Delta_t f(t,0))^2 exactly. Getting any of the left-row
    // evaluations wrong breaks this at order one.
    GridFunction C({0.0}, {-3.0, 0.0, 3.0}, {3, 0, 0}, 1.0);

    std::mt19937_64 gen(12);
    for (int trial = 0; trial < 25; ++trial) {
        CompactGridFunction f = random_staircase(gen);
        const GridFunction& fg = f.fn();
        double sum_sq = 0.0;
        for (std::size_t i = 1; i < fg.n_rows(); ++i)
            sum_sq += sq(fg.eval_row(i, 0.0) - fg.eval_row(i - 1, 0.0));
        const double lhs = bilinear_functional(fg, C, f);
        CHECK(lhs == doctest::Approx(-0.5 * sum_sq).epsilon(1e-12));
    }
}

TEST_CASE("jump functional") {
    CompactGridFunction theta = CompactGridFunction::tensor(
        {0.0, 0.25, 0.75}, {0.0, 1.0, 0.0}, {-1.0, 0.0, 2.0, 3.0}, {0.0, 0.0, 2.0, 0.0});
    // theta slope is 1 on (0, 2) in every nonzero row

    SUBCASE("degenerate jump is zero") {
        GridFunction f({0.0}, {-1.0, 1.0}, {0, 1}, 1.0);
        CHECK(jump_functional(theta, f, 0.5, 0.7, 0.7) == 0.0);
    }
    SUBCASE("linear surfaces produce no jump correction") {
        GridFunction f({0.0}, {-3.0, 3.0}, {-3, 3}, 1.0);
        CHECK(jump_functional(theta, f, 0.5, -0.5, 1.5) == 0.0);
    }
    SUBCASE("hinge against a unit-slope window: closed-form value") {
        GridFunction f({0.0}, {-1.0, 1.0, 3.0}, {0, 0, 2}, 1.0);  // (x-1)_+
        CHECK(jump_functional(theta, f, 0.5, 0.0, 2.0) == doctest::Approx(-1.0).epsilon(1e-13));
    }
    SUBCASE("magnitude bound from the Lipschitz constants") {
        std::mt19937_64 gen(3);
        std::uniform_real_distribution<double> u(-2.0, 2.0);
        GridFunction f({0.0}, {-1.0, 1.0, 3.0}, {0, 0, 2}, 1.0);
        for (int k = 0; k < 100; ++k) {
            const double a = u(gen), b = u(gen);
            const double bound =
                f.lipschitz_x() * theta.fn().lipschitz_x() * sq(b - a) + 1e-12;
            CHECK(std::abs(jump_functional(theta, f, 0.5, a, b)) <= bound);
        }
    }
    SUBCASE("ensemble jump sums are finite and obey the per-jump bound") {
        GridFunction f({0.0}, {-1.0, 1.0, 3.0}, {0, 0, 2}, 1.0);
        PathEnsemble e = simulate(models::bm_jump(), Partition::uniform(1.0, 128), 2000, 41);
        const double per_jump =
            f.lipschitz_x() * theta.fn().lipschitz_x() * sq(0.5) + 1e-12;
        double total_abs = 0.0;
        for (std::size_t p = 0; p < e.n_paths; ++p) {
            double path_abs = 0.0;
            for (const auto& j : e.jumps[p])
                path_abs += std::abs(jump_functional(theta, f, j.time, j.pre, j.post));
            CHECK(path_abs <= per_jump * static_cast<double>(e.jumps[p].size()));
            total_abs += path_abs;
        }
        CHECK(std::isfinite(total_abs));
    }
}

TEST_CASE("drift functional") {
    Partition part = Partition::uniform(1.0, 128);
    auto box = [](double t, double x) {
        return (t < 1.0 && std::abs(x) < 10.0) ? 1.0 : 0.0;
    };
    SUBCASE("martingale models produce exact zeros") {
        PathEnsemble e = simulate(models::bm(), part, 100, 2);
        auto sums = per_path_drift_sums(e, models::bm(), box);
        for (double v : sums) CHECK(v == 0.0);
    }
    SUBCASE("unit drift on a full box gives one within three standard errors") {
        PathEnsemble e = simulate(models::drifted_bm(), part, 20000, 2);
        MeanSE m = drift_functional(e, models::drifted_bm(), box);
        CHECK(std::abs(m.mean - 1.0) <= 3.0 * m.se + 1e-9);
    }
    SUBCASE("linearity in the test function on a fixed ensemble") {
        PathEnsemble e = simulate(models::drifted_bm(), part, 500, 2);
        auto th1 = [](double t, double x) { return std::sin(x) * (t < 0.8 ? 1.0 : 0.0); };
        auto th2 = [](double t, double x) { return std::cos(x + t); };
        const double a = -1.7;
        MeanSE lhs = drift_functional(
            e, models::drifted_bm(),
            [&](double t, double x) { return a * th1(t, x) + th2(t, x); });
        MeanSE r1 = drift_functional(e, models::drifted_bm(), th1);
        MeanSE r2 = drift_functional(e, models::drifted_bm(), th2);
        CHECK(lhs.mean == doctest::Approx(a * r1.mean + r2.mean).epsilon(1e-12));
    }
    SUBCASE("parallel and serial drivers agree bitwise") {
        PathEnsemble e = simulate(models::drifted_bm(), part, 2000, 9);
        auto th = [](double t, double x) { return std::sin(3 * x + t); };
        CHECK(per_path_drift_sums(e, models::drifted_bm(), th) ==
              serial_ref::per_path_drift_sums(e, models::drifted_bm(), th));
    }
}

TEST_CASE("surface-functional weights reproduce the direct bilinear value") {
    std::mt19937_64 gen(8);
    CompactGridFunction f = random_staircase(gen);
    CompactGridFunction theta = random_staircase(gen);
    CompactGridFunction c = random_staircase(gen);

    std::vector<double> tn = merge_nodes(f.fn().t_nodes(), theta.fn().t_nodes());
    std::vector<double> xn = merge_nodes(f.fn().x_nodes(), theta.fn().x_nodes());
    SurfaceFunctional w = bilinear_in_second(f.fn(), theta, tn, xn);

    const double direct = bilinear_functional(f.fn(), c.fn(), theta);
    const double via_weights = w.apply(c.fn());
    CHECK(via_weights == doctest::Approx(direct).epsilon(1e-12));

    SUBCASE("per-path application averages to the functional of the raw surface") {
        PathEnsemble e = simulate(models::bm(), Partition::uniform(1.0, 10), 400, 4);
        std::vector<double> per_path(e.n_paths);
        for (std::size_t p = 0; p < e.n_paths; ++p)
            per_path[p] = w.apply_call_profile(e.path(p), e.partition);
        // surface grid must contain the weight nodes for the identity
        CallSurface cs = estimate_call_surface(e, xn, tn);
        GridFunction raw(cs.surface.t_nodes(), cs.surface.x_nodes(), cs.raw, 1.0);
        CHECK(mean_se(per_path).mean == doctest::Approx(w.apply(raw)).epsilon(1e-10));
    }
}

TEST_CASE("generalized drift functional") {
    Partition part = Partition::uniform(1.0, 128);
    CompactGridFunction theta = make_box_theta(0.25, 0.75, -2.5, 2.5, 1.0 / 32.0, 0.5);
    std::vector<double> tn, xn;
    for (double t = 0.0; t <= 1.0 + 1e-12; t += 1.0 / 32.0) tn.push_back(t);
    for (double x = -4.0; x <= 4.0 + 1e-12; x += 1.0 / 16.0) xn.push_back(x);
    GridFunction f = GridFunction::from_samples(tn, xn, [](double t, double x) {
        const double u = x / 2.0;
        if (u <= -1.0 || u >= 1.0) return 0.0;
        const double w = 1.0 - u * u;
        return (1.0 + t * (1.0 - t)) * w * w * w;
    });

    SUBCASE("continuous martingale: drift and jump terms vanish identically") {
        PathEnsemble e = simulate(models::bm(), part, 4000, 6);
        CallSurface cs = estimate_call_surface(e, xn, tn);
        ReconstructedDrift r = reconstructed_drift(f, theta, cs.surface, e, models::bm());
        CHECK(r.drift_term.mean == 0.0);
        CHECK(r.jump_term.mean == 0.0);
        CHECK(r.total == r.bilinear_term);
    }
    SUBCASE("zero surface gives zero") {
        PathEnsemble e = simulate(models::drifted_bm(), part, 200, 6);
        CallSurface cs = estimate_call_surface(e, xn, tn);
        GridFunction zero(tn, xn, std::vector<double>(tn.size() * xn.size(), 0.0), 0.0);
        ReconstructedDrift r = reconstructed_drift(zero, theta, cs.surface, e,
                                                   models::drifted_bm());
        CHECK(r.total == 0.0);
    }
    SUBCASE("agrees with the smooth-route drift under unit drift") {
        // coarse version of the identity suite, via the public operation
        const std::size_t n = 20000;
        PathEnsemble e = simulate(models::drifted_bm(), part, n, 6);
        CallSurface cs = estimate_call_surface(e, xn, tn);
        ReconstructedDrift r =
            reconstructed_drift(f, theta, cs.surface, e, models::drifted_bm());
        SmoothField field{
            [](double t, double x) {
                const double u = x / 2.0;
                if (u <= -1.0 || u >= 1.0) return 0.0;
                const double w = 1.0 - u * u;
                return (1.0 + t * (1.0 - t)) * w * w * w;
            },
            [](double t, double x) {
                const double u = x / 2.0;
                if (u <= -1.0 || u >= 1.0) return 0.0;
                const double w = 1.0 - u * u;
                return (1.0 - 2.0 * t) * w * w * w;
            },
            [](double t, double x) {
                const double u = x / 2.0;
                if (u <= -1.0 || u >= 1.0) return 0.0;
                const double w = 1.0 - u * u;
                return -(1.0 + t * (1.0 - t)) * 3.0 * u * w * w;
            },
            [](double t, double x) {
                const double u = x / 2.0;
                if (u <= -1.0 || u >= 1.0) return 0.0;
                const double w = 1.0 - u * u;
                return (1.0 + t * (1.0 - t)) * 1.5 * w * (5.0 * u * u - 1.0);
            }};
        ItoDriftResult ito = ito_drift(field, e, models::drifted_bm(), left_eval(theta));
        const double combined =
            std::sqrt(sq(ito.functional.se) + sq(r.drift_term.se)) + 1e-12;
        CHECK(std::abs(ito.functional.mean - r.total) <= 3.0 * combined + 5e-3);
    }
}

TEST_CASE("local signed measures") {
    // density -1 on the unit box [0,1]x[0,1]
    LocalSignedMeasure mu({0.0, 1.0}, {0.0, 1.0}, {-1.0});
    GridFunction one({0.0}, {-1.0, 2.0}, {1, 1}, 0.0);

    SUBCASE("evaluation and variation of a constant density") {
        CHECK(mu.eval(one) == doctest::Approx(-1.0));
        CHECK(mu.variation(one) == doctest::Approx(1.0));
        CHECK(mu.total_variation() == doctest::Approx(1.0));
    }
    SUBCASE("zero measure evaluates to zero") {
        LocalSignedMeasure zero({0.0, 1.0}, {0.0, 1.0}, {0.0});
        CHECK(zero.eval(one) == 0.0);
        CHECK(zero.variation(one) == 0.0);
    }
    SUBCASE("atoms with sign changes") {
        LocalSignedMeasure atomic({0.0, 1.0}, {0.0, 1.0}, {0.0}, {-1.0, 0.0, 1.0},
                                  {{0.5, {-2.0, 0.0, 2.0}}});
        // profile integrates to 0 but has absolute mass 2
        CHECK(atomic.eval(one) == doctest::Approx(0.0));
        CHECK(atomic.variation(one) == doctest::Approx(2.0));
    }
    SUBCASE("randomized test functions never exceed the variation") {
        LocalSignedMeasure mixed({0.0, 0.5, 1.0}, {-1.0, 0.0, 1.0}, {0.7, -1.2, 0.4, 2.0},
                                 {-1.0, 0.0, 1.0}, {{0.25, {1.0, -3.0, 0.5}}});
        // theta: a nonnegative tent in x, constant in t
        GridFunction theta({0.0}, {-1.0, 0.0, 1.0}, {0.2, 1.0, 0.1}, 1.0);
        const double bound = mixed.variation(theta);
        std::mt19937_64 gen(19);
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        for (int k = 0; k < 100; ++k) {
            // psi = g . theta with |g| <= 1 at the nodes dominates pointwise
            std::vector<double> vals{0.2 * u(gen), 1.0 * u(gen), 0.1 * u(gen)};
            double lip = std::max(std::abs(vals[1] - vals[0]), std::abs(vals[2] - vals[1]));
            GridFunction psi({0.0}, {-1.0, 0.0, 1.0}, vals, lip);
            CHECK(std::abs(mixed.eval(psi)) <= bound + 1e-12);
        }
    }
}
