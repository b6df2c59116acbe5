#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <sstream>

#include "smlab/path_analysis.hpp"

using namespace smlab;
using Catch::Approx;

namespace {
SamplePath path_of(std::vector<double> v) {
    const auto n = v.size() - 1;
    return scalar_path(share(TimeGrid::uniform(1.0, n)), std::move(v));
}
}  // namespace

TEST_CASE("quadratic and total variation of a hand-made path") {
    const auto p = path_of({0.0, 1.0, 3.0, 2.0});
    const auto qv = quadratic_variation(p);
    CHECK(qv.values == std::vector<double>{0.0, 1.0, 5.0, 6.0});
    const auto tv = running_total_variation(p);
    CHECK(tv.values == std::vector<double>{0.0, 1.0, 3.0, 4.0});
    CHECK(total_variation(p) == 4.0);
    const std::vector<double> raw{2.0, -1.0, 0.5};
    CHECK(total_variation(raw) == 4.5);
    CHECK_THROWS_AS(quadratic_variation(p, 1), ArgumentError);
    CHECK_THROWS_AS(total_variation(std::vector<double>{1.0}), ArgumentError);
}

TEST_CASE("two-dimensional variations use the trace and Euclidean norm") {
    SamplePath p(share(TimeGrid::uniform(1.0, 1)), 2);
    p.value(1, 0) = 3.0;
    p.value(1, 1) = 4.0;
    CHECK(quadratic_variation(p).values.back() == 25.0);
    CHECK(quadratic_variation(p, 1).values.back() == 16.0);
    CHECK(total_variation(p) == 5.0);
}

TEST_CASE("variations are nondecreasing and QV of Brownian motion is near T") {
    const auto ens = simulate(make_model("bm"), share(TimeGrid::uniform(1.0, 20000)), 17, 4);
    for (const auto& p : ens.paths) {
        const auto qv = quadratic_variation(p);
        const auto tv = running_total_variation(p);
        for (std::size_t k = 1; k < p.size(); ++k) {
            CHECK(qv.values[k] >= qv.values[k - 1]);
            CHECK(tv.values[k] >= tv.values[k - 1]);
        }
        // Var(sum dW^2) = 2 dt, five standard deviations
        CHECK(std::abs(qv.values.back() - 1.0) < 5.0 * std::sqrt(2.0 / 20000));
        // TV grows like sqrt(2K/pi)
        CHECK(tv.values.back() > 50.0);
    }
}

TEST_CASE("discrete Ito identity: sum W dW = (W_T^2 - [W]_T) / 2") {
    const auto ens = simulate(make_model("bm"), share(TimeGrid::uniform(1.0, 5000)), 3, 5);
    for (const auto& p : ens.paths) {
        const auto I = ito_integral(p, p);
        const auto qv = quadratic_variation(p);
        for (std::size_t k : {std::size_t{1}, std::size_t{100}, std::size_t{5000}}) {
            const double w = p.value(k);
            CHECK(std::abs(I.values[k] - 0.5 * (w * w - qv.values[k])) < 1e-12);
        }
    }
}

TEST_CASE("constant integrands are exact and the sum is linear") {
    const auto p = path_of({0.3, 1.7, -0.2, 0.9, 0.1});
    const std::vector<double> ones(5, 1.0);
    const auto I = ito_integral(ones, p);
    for (std::size_t k = 0; k < p.size(); ++k) CHECK(I.values[k] == p.value(k) - p.value(0));
    const std::vector<double> g{1.0, 2.0, -1.0, 0.5};  // K entries accepted
    const auto J = ito_integral(g, p);
    double ref = 0.0;
    for (std::size_t k = 0; k < 4; ++k) {
        ref += g[k] * (p.value(k + 1) - p.value(k));
        CHECK(J.values[k + 1] == Approx(ref).epsilon(1e-14));
    }
    CHECK_THROWS_AS(ito_integral(std::vector<double>(3, 1.0), p), ArgumentError);
    const auto other = scalar_path(share(TimeGrid::uniform(2.0, 4)), std::vector<double>(5, 1.0));
    CHECK_THROWS_AS(ito_integral(other, p), ArgumentError);
}

TEST_CASE("local time oracle") {
    const auto p = path_of({0.0, 0.005, 0.5, 0.0, 2.0});
    const auto lt = local_time_oracle(p, 0.0, 0.01);
    // steps 0, 1 and 3 start inside the band; dt = 0.25, scale 50
    CHECK(lt.values == std::vector<double>{0.0, 12.5, 25.0, 25.0, 37.5});
    const auto wide = local_time_oracle(p, 0.0, 100.0);
    CHECK(wide.values.back() == Approx(1.0 / 200.0));
    CHECK_THROWS_AS(local_time_oracle(p, 0.0, 0.0), ArgumentError);

    // E L_1^0 = sqrt(2/pi) for Brownian motion
    const auto ens = simulate(make_model("bm"), share(TimeGrid::uniform(1.0, 10000)), 8, 400);
    std::vector<double> ends;
    for (const auto& q : ens.paths) ends.push_back(local_time_oracle(q, 0.0, 0.02).values.back());
    const auto est = mean_and_error(ends);
    CHECK(std::abs(est.mean - std::sqrt(2.0 / std::numbers::pi)) < 4.0 * est.standard_error + 0.02);
}

TEST_CASE("mean and standard error") {
    const std::vector<double> xs{1.0, 2.0, 3.0, 4.0};
    const auto e = mean_and_error(xs);
    CHECK(e.mean == 2.5);
    CHECK(e.standard_error == Approx(std::sqrt(5.0 / 3.0) / 2.0));
    CHECK(mean_and_error(std::vector<double>{7.0}).standard_error == 0.0);
}

TEST_CASE("path statistics CSV") {
    const auto ens = simulate(make_model("bm"), share(TimeGrid::uniform(1.0, 3)), 1, 2);
    std::ostringstream os;
    write_path_stats_csv(os, ens);
    CHECK(os.str().rfind("path_id,t,qv,tv_running,local_time\n", 0) == 0);
    std::size_t lines = 0;
    for (char c : os.str()) lines += c == '\n';
    CHECK(lines == 1 + 2 * 4);
}
