#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "smlab/time_change.hpp"

using namespace smlab;
using Catch::Approx;

TEST_CASE("Cantor function values on ternary rationals") {
    CHECK(cantor(0.0) == 0.0);
    CHECK(cantor(1.0) == 1.0);
    CHECK(cantor(0.5) == 0.5);
    CHECK(cantor(0.25) == 1.0 / 3.0);
    CHECK(cantor(0.75) == 2.0 / 3.0);
    CHECK(cantor(1.0 / 3.0) == Approx(0.5).epsilon(1e-9));
    CHECK(cantor(2.0 / 3.0) == Approx(0.5).epsilon(1e-9));
    CHECK(cantor(1.0 / 9.0) == Approx(0.25).epsilon(1e-9));
    CHECK(cantor(0.4) == 0.5);  // inside the middle third
    CHECK(cantor(1e-300) == Approx(0.0).margin(1e-100));
    CHECK_THROWS_AS(cantor(-0.1), RangeError);
    CHECK_THROWS_AS(cantor(1.5), RangeError);
    CHECK_THROWS_AS(cantor(0.5, 0), ArgumentError);
}

TEST_CASE("Cantor function: monotone, symmetric, self-similar") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> xs(2000);
    for (double& x : xs) x = u(rng);
    std::sort(xs.begin(), xs.end());
    for (std::size_t i = 1; i < xs.size(); ++i) CHECK(cantor(xs[i]) >= cantor(xs[i - 1]));
    for (std::size_t i = 0; i < xs.size(); i += 10) {
        const double x = xs[i];
        CHECK(cantor(x) + cantor(1.0 - x) == Approx(1.0).margin(1e-12));
        CHECK(cantor(x / 3.0) == Approx(cantor(x) / 2.0).margin(1e-12));
        CHECK(cantor(2.0 / 3.0 + x / 3.0) == Approx(0.5 + cantor(x) / 2.0).margin(1e-12));
    }
}

TEST_CASE("inverse of c(t) + t") {
    CHECK(inverse_cantor_plus_identity(0.0) == 0.0);
    CHECK(inverse_cantor_plus_identity(2.0) == 1.0);
    CHECK(inverse_cantor_plus_identity(1.0) == Approx(0.5).margin(1e-15));
    CHECK(inverse_cantor_plus_identity(5.0 / 6.0) == Approx(1.0 / 3.0).margin(1e-15));
    for (double u = 0.01; u < 2.0; u += 0.0731) {
        const double t = inverse_cantor_plus_identity(u);
        CHECK(cantor(t) + t == Approx(u).margin(1e-12));
    }
    CHECK_THROWS_AS(inverse_cantor_plus_identity(2.5), RangeError);
}

TEST_CASE("clock construction and interpolation") {
    const auto g = share(TimeGrid::uniform(1.0, 4));
    const Clock c(g, {0.0, 1.0, 1.5, 3.0, 4.0}, ClockKind::deterministic);
    CHECK(c(0.125) == 0.5);
    CHECK(c(0.5) == 1.5);
    CHECK(c(2.0) == 4.0);
    CHECK_THROWS_AS(Clock(g, {0.0, 1.0, 1.0, 2.0, 3.0}), ArgumentError);
    CHECK_THROWS_AS(Clock(g, {0.0, 1.0}), ArgumentError);

    CHECK(make_clock("identity", g).values() == g->times());
    CHECK(make_clock("affine:2", g)[4] == 2.0);
    CHECK(make_clock("cantor_plus_t", g)[2] == 1.0);
    CHECK(make_clock("cantor_plus_t", g).kind() == ClockKind::cantor);
    CHECK_THROWS_AS(make_clock("affine:0", g), ArgumentError);
    CHECK_THROWS_AS(make_clock("affine:x", g), ArgumentError);
    CHECK_THROWS_AS(make_clock("from_characteristics", g), ArgumentError);
    CHECK_THROWS_AS(make_clock("sideways", g), ArgumentError);
    CHECK_THROWS_AS(make_clock("cantor_plus_t", share(TimeGrid::uniform(2.0, 4))), RangeError);
}

TEST_CASE("clock from characteristics: V = t + Var(A) + N") {
    const auto g = share(TimeGrid::uniform(1.0, 256));
    std::vector<double> a(g->size()), n(g->size());
    for (std::size_t k = 0; k < g->size(); ++k) {
        a[k] = cantor((*g)[k]) + (*g)[k];
        n[k] = (*g)[k];
    }
    const auto A = scalar_path(g, a), N = scalar_path(g, n);
    const auto V = build_clock(A, N);
    CHECK(V.kind() == ClockKind::sum_of_characteristics);
    for (std::size_t k = 0; k < g->size(); ++k) CHECK(V[k] == Approx(cantor((*g)[k]) + 3.0 * (*g)[k]).margin(1e-12));

    // a decreasing A still adds its variation
    std::vector<double> down(g->size());
    for (std::size_t k = 0; k < g->size(); ++k) down[k] = -(*g)[k];
    CHECK(build_clock(scalar_path(g, down), N).end() == Approx(3.0));

    n[10] = n[9] - 1e-3;
    CHECK_THROWS_AS(build_clock(A, scalar_path(g, n)), ArgumentError);
    CHECK_THROWS_AS(build_clock(A, scalar_path(share(TimeGrid::uniform(2.0, 256)), a)), ArgumentError);
}

TEST_CASE("local characteristics reproduce A and N") {
    const auto m = make_model("drifted_bm", {.drift = 0.7});
    const auto p = simulate(m, share(TimeGrid::uniform(1.0, 1000)), 3, 1)[0];
    const auto [A, N] = semimartingale_parts(m, p);
    CHECK(A.values.back() == Approx(0.7));
    const auto qv = quadratic_variation(scalar_path(p.grid, [&] {
        std::vector<double> w(p.size());
        for (std::size_t k = 0; k < p.size(); ++k) w[k] = p.value(k) - A.values[k];
        return w;
    }()));
    CHECK(N.values.back() == Approx(qv.values.back()).epsilon(1e-10));
    const auto lc = local_characteristics(A, N);
    const auto A2 = lc.reconstruct_A(), N2 = lc.reconstruct_N();
    for (std::size_t k = 0; k < p.size(); ++k) {
        CHECK(A2.values[k] == Approx(A.values[k]).margin(1e-12));
        CHECK(N2.values[k] == Approx(N.values[k]).margin(1e-12));
    }
    for (double c2 : lc.c_squared) CHECK(c2 >= 0.0);
}

TEST_CASE("inverse clock and left sampling") {
    const auto g = share(TimeGrid::uniform(1.0, 10));
    const auto V = make_clock("affine:2", g);
    CHECK(inverse_clock(V, 1.0) == Approx(0.5));
    CHECK(inverse_clock(V, 0.0) == 0.0);
    CHECK(inverse_clock(V, 0.3) == Approx(0.15));
    for (std::size_t k = 0; k + 1 < g->size(); ++k) CHECK(inverse_clock(V, V[k]) == (*g)[k]);
    CHECK_THROWS_AS(inverse_clock(V, 2.0), RangeError);
    CHECK_THROWS_AS(inverse_clock(V, -0.1), RangeError);

    CHECK(left_index(*g, 0.35) == 3);
    CHECK(left_index(*g, 0.4 - 1e-13) == 4);
    const auto p = scalar_path(g, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10});
    CHECK(sample_linear(p, 0.35) == Approx(3.5));
    CHECK(sample_linear(p, 1.0) == 10.0);
    const auto s = sample_left(p, share(TimeGrid({0.0, 0.26, 0.99})));
    CHECK(s.values == std::vector<double>{0, 2, 9});
}

TEST_CASE("time change by V = 2t halves the quadratic variation") {
    const std::size_t K = 20000;
    const auto g = share(TimeGrid::uniform(1.0, K));
    const auto W = simulate(make_model("bm"), g, 44, 1)[0];
    const auto X = time_change_path(W, make_clock("affine:2", g), g);
    CHECK(X.value(K) == W.value(K / 2));
    const double qv = quadratic_variation(X).values.back();
    CHECK(std::abs(qv - 0.5) < 5.0 * std::sqrt(2.0 * 0.5 / (K / 2.0)));
    CHECK_THROWS_AS(time_change_path(W, make_clock("affine:2", g), share(TimeGrid::uniform(3.0, 4))), RangeError);
}

TEST_CASE("extended driver") {
    const auto g = share(TimeGrid::uniform(1.0, 8));
    const auto Y = simulate(make_model("bm"), g, 1, 1)[0];
    const auto aux = simulate(make_model("bm"), g, 2, 1)[0];
    const std::vector<double> ones(8, 1.0), zeros(9, 0.0);
    const auto w1 = extend_driver(Y, ones, aux);
    for (std::size_t k = 0; k < g->size(); ++k) CHECK(w1.value(k) == Approx(Y.value(k)).margin(1e-15));
    const auto w0 = extend_driver(Y, zeros, aux);
    for (std::size_t k = 0; k < g->size(); ++k) CHECK(w0.value(k) == Approx(aux.value(k)).margin(1e-15));
    std::vector<double> twos(8, 2.0);
    CHECK(extend_driver(Y, twos, aux).value(8) == Approx(Y.value(8) / 2.0));
    CHECK_THROWS_AS(extend_driver(Y, std::vector<double>(3, 1.0), aux), ArgumentError);
}

TEST_CASE("duality is exact for the identity clock") {
    const auto g = share(TimeGrid::uniform(1.0, 512));
    const auto m = make_model("bounded_elliptic");
    const auto r = duality_check(m, make_clock("identity", g), 9);
    CHECK(r.roundtrip_max_err == 0.0);
    CHECK(r.residual_h1 == 0.0);
    CHECK(r.residual_hz == 0.0);
    CHECK(r.qv_consistency < 0.2);
    CHECK(r.steps == 512);

    const auto a = duality_check(m, make_clock("affine:3", g), 9);
    CHECK(a.roundtrip_max_err < 1e-12);
    CHECK(a.residual_h1 < 1e-12);
    CHECK(a.residual_hz < 1e-12);
}

TEST_CASE("duality rejects external clocks and nonzero start") {
    const auto g = share(TimeGrid::uniform(1.0, 4));
    std::vector<double> v{0.0, 1.0, 2.0, 3.0, 4.0};
    CHECK_THROWS_AS(duality_check(make_model("bm"), Clock(g, v), 1), UnsupportedError);
    for (double& x : v) x += 1.0;
    CHECK_THROWS_AS(duality_check(make_model("bm"), Clock(g, v, ClockKind::deterministic), 1), ArgumentError);
}

TEST_CASE("duality ladder levels and averaging") {
    const auto m = make_model("bm");
    auto identity = [](GridPtr g) { return make_clock("identity", g); };
    const std::vector<std::size_t> levels{64, 256};
    const auto reps = duality_ladder(m, identity, 1.0, levels, 3, 2);
    REQUIRE(reps.size() == 2);
    CHECK(reps[1].steps == 256);
    for (const auto& r : reps) CHECK(r.residual_hz == 0.0);
    const std::vector<std::size_t> bad{64, 100};
    CHECK_THROWS_AS(duality_ladder(m, identity, 1.0, bad, 3), ArgumentError);
}

TEST_CASE("Cantor example setup and outcome") {
    const auto setup = make_cantor_setup(1.0, 256);
    CHECK(setup.t_grid->back() == Approx(0.5).margin(1e-15));
    CHECK(setup.u_grid->back() == 1.0);
    double mass = 0.0;
    for (std::size_t j = 0; j < setup.c_values.size(); ++j) {
        CHECK(setup.c_values[j] >= 0.0);
        CHECK(setup.c_values[j] <= 1.0 + 1e-12);
        mass += setup.c_values[j] * setup.c_values[j] * setup.u_grid->dt(j);
    }
    CHECK(mass == Approx(setup.t_grid->back()).epsilon(1e-12));

    const auto a = run_cantor_example(setup, 5, 3), b = run_cantor_example(setup, 5, 3);
    CHECK(a.x.values == b.x.values);
    CHECK(a.driver.values == b.driver.values);
    CHECK(a.x.value(0) == 0.0);
    CHECK(a.x_minus_drift == a.x.values.back() - 1.0);
    CHECK_THROWS_AS(make_cantor_setup(2.5, 8), RangeError);
}
