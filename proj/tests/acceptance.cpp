#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "smlab/scenario.hpp"

using namespace smlab;

namespace {

Json run(const std::string& name) { return execute(make_scenario(Config::parse(find_builtin(name)->config))).report; }

struct Outcome {
    bool pass = true;
    std::ostringstream detail;

    void require(bool ok, const std::string& what) {
        pass = pass && ok;
        if (!ok) detail << " [failed: " << what << "]";
    }
};

Outcome tanaka() {
    Outcome o;
    const auto r = run("tanaka_abs");
    const double target = std::sqrt(2.0 / std::numbers::pi);
    const double gap = r["relative_gap"], mean_a = r["mean_A_T"];
    o.detail << "relative_gap=" << gap << " mean_A=" << mean_a << " (vs " << target << ")";
    o.require(gap < 0.10, "relative gap < 0.10");
    o.require(std::abs(mean_a - target) < 0.10 * target, "mean A within 10% of sqrt(2/pi)");
    return o;
}

Outcome ito() {
    Outcome o;
    const auto r = run("ito_square");
    const double a_err = r["ito_check"]["mean_abs_A_minus_int_Lf"], qv_max = r["ito_check"]["qv_M_rel_err_max"];
    o.detail << "mean|A_1-1|=" << a_err << " max QV(M) rel err=" << qv_max;
    o.require(a_err < 0.05, "mean |A_1 - 1| < 0.05");
    o.require(qv_max < 0.03, "QV(M) within 3% on every path");
    return o;
}

Outcome verdicts() {
    Outcome o;
    const std::vector<std::pair<std::string, std::string>> expect{
        {"verdict_linear", "Semimartingale"},      {"verdict_square", "Semimartingale"},
        {"verdict_abs", "Semimartingale"},         {"verdict_t_plus_sin", "Semimartingale"},
        {"verdict_pow_0_5", "NotSemimartingale"},  {"verdict_pow_0_3", "NotSemimartingale"},
    };
    for (const auto& [name, cls] : expect) {
        const auto r = run(name);
        const std::string got = r["classification"];
        const double slope = r["slope"];
        o.detail << name.substr(8) << "=" << slope << " ";
        o.require(got == cls, name + " classified " + got);
        if (name == "verdict_pow_0_5") o.require(std::abs(slope - 0.3224) < 0.005, "pow:0.5 slope pinned at 0.3224");
    }
    return o;
}

Outcome smoothing() {
    Outcome o;
    const auto r = run("smoothing_abs");
    const std::vector<double> e = r["sup_errors"];
    for (double v : e) o.detail << v << " ";
    for (std::size_t i = 1; i < e.size(); ++i) o.require(e[i] < e[i - 1], "strictly decreasing");
    o.require(e.size() == 3 && e.back() < 0.05, "error < 0.05 at n = 1000");
    return o;
}

Outcome gradient() {
    Outcome o;
    const auto r = run("gradient_abs");
    const double d = r["l2_mu_distance"];
    o.detail << "l2_mu_distance=" << d;
    o.require(d < 0.05, "distance < 0.05");
    return o;
}

Outcome duality() {
    Outcome o;
    for (const char* name : {"duality_identity", "duality_affine"}) {
        const auto r = run(name);
        const double rt = r["roundtrip_max_err"], h1 = r["integral_residuals"]["H1"], hz = r["integral_residuals"]["HZ"];
        o.detail << name + 8 << ": " << rt << "," << h1 << "," << hz << " ";
        o.require(rt < 1e-12 && h1 < 1e-12 && hz < 1e-12, std::string(name) + " residuals < 1e-12");
    }
    const auto r = run("duality_cantor");
    const auto& levels = r["mesh_levels"];
    o.detail << "cantor:";
    for (std::size_t i = 0; i < levels.size(); ++i) {
        const auto& l = levels[i];
        o.detail << " K=" << l["steps"] << "(" << l["roundtrip_max_err"] << "," << l["integral_residuals"]["H1"] << ","
                 << l["integral_residuals"]["HZ"] << ")";
        if (i == 0) continue;
        const auto& p = levels[i - 1];
        o.require(l["roundtrip_max_err"].get<double>() < p["roundtrip_max_err"].get<double>(), "round trip decreasing");
        o.require(l["integral_residuals"]["H1"].get<double>() < p["integral_residuals"]["H1"].get<double>(), "H1 decreasing");
        o.require(l["integral_residuals"]["HZ"].get<double>() < p["integral_residuals"]["HZ"].get<double>(), "HZ decreasing");
    }
    o.require(levels.size() == 3, "three mesh levels");
    return o;
}

Outcome cantor_clock() {
    Outcome o;
    const auto r = run("cantor_example");
    const double pass = r["qv_pass_fraction"], mean = r["mean_x_minus_drift"], se = r["stderr_x_minus_drift"];
    o.detail << "qv_pass_fraction=" << pass << " mean(X_1-1)=" << mean << " se=" << se;
    o.require(r["paths"] == 200, "200 seeds");
    o.require(pass >= 0.95, "QV gate on >= 95% of seeds");
    o.require(std::abs(mean) <= 3.0 * se, "mean within 3 standard errors");
    return o;
}

Outcome malliavin() {
    Outcome o;
    for (const char* name : {"malliavin_square", "malliavin_t_plus_sin"}) {
        const auto r = run(name);
        const double res = r["mean_residual"], ratio = r["halved_h"]["ratio"], adapt = r["adaptedness_max_abs"];
        o.detail << name + 10 << ": residual=" << res << " ratio=" << ratio << " adapt=" << adapt << " ";
        o.require(res < 0.02, std::string(name) + " residual < 2%");
        o.require(ratio >= 0.3 && ratio <= 0.7, std::string(name) + " halving ratio in [0.3, 0.7]");
        o.require(adapt == 0.0, std::string(name) + " adaptedness zeros exact");
    }
    return o;
}

Outcome l2_bound() {
    Outcome o;
    const auto r = run("l2bound_abs");
    const std::vector<double> seq = r["bound_sequence"];
    const double T = r["t"];
    for (double v : seq) o.detail << v << " ";
    o.require(seq.size() == 3, "three members");
    for (double v : seq) o.require(v <= 1.1 * T, "estimate <= 1.1 T");
    return o;
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"tanaka reproduction", tanaka},
        {"ito consistency", ito},
        {"verdict classification", verdicts},
        {"smoothing convergence", smoothing},
        {"generalized gradient", gradient},
        {"duality and change of variables", duality},
        {"cantor example", cantor_clock},
        {"malliavin chain rule", malliavin},
        {"uniform L2 bound", l2_bound},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail << "error: " << e.what();
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::printf("%s %d %s (%.1fs): %s\n", o.pass ? "PASS" : "FAIL", static_cast<int>(i + 1), criteria[i].first.c_str(),
                    secs, o.detail.str().c_str());
        std::fflush(stdout);
        failed += o.pass ? 0 : 1;
    }
    return failed == 0 ? 0 : 1;
}
