#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "smlab/decomposition.hpp"
#include "smlab/error.hpp"
#include "smlab/malliavin.hpp"
#include "smlab/model.hpp"
#include "smlab/path_analysis.hpp"
#include "smlab/simulate.hpp"
#include "smlab/smoothing.hpp"
#include "smlab/time_change.hpp"
#include "smlab/transform.hpp"
#include "smlab/verdict.hpp"

namespace smlab {

using Json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Config document: flat `key = value` lines, '#' comments, dotted keys.

class Config {
public:
    static Config parse(const std::string& text) {
        Config c;
        std::istringstream in(text);
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
            const std::string body = trim(line);
            if (body.empty()) continue;
            const auto eq = body.find('=');
            if (eq == std::string::npos)
                throw ConfigError("line " + std::to_string(lineno), "expected 'key = value' on line " + std::to_string(lineno));
            const std::string key = trim(body.substr(0, eq));
            const std::string value = trim(body.substr(eq + 1));
            if (key.empty()) throw ConfigError("line " + std::to_string(lineno), "empty key on line " + std::to_string(lineno));
            if (!allowed_keys().count(key)) throw ConfigError(key, "unknown key '" + key + "'");
            if (c.values_.count(key)) throw ConfigError(key, "duplicate key '" + key + "'");
            c.values_[key] = value;
        }
        return c;
    }

    static Config load(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("path", "cannot read config file '" + path.string() + "'");
        std::ostringstream ss;
        ss << in.rdbuf();
        return parse(ss.str());
    }

    bool has(const std::string& key) const { return values_.count(key) > 0; }
    void set(const std::string& key, std::string value) { values_[key] = std::move(value); }

    std::string text(const std::string& key, const std::string& fallback = {}) const {
        const auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    std::string required(const std::string& key) const {
        const auto it = values_.find(key);
        if (it == values_.end() || it->second.empty()) throw ConfigError(key, "missing required field '" + key + "'");
        return it->second;
    }

    double number(const std::string& key, double fallback) const {
        if (!has(key)) return fallback;
        return to_number(key, text(key));
    }

    std::uint64_t integer(const std::string& key, std::uint64_t fallback) const {
        if (!has(key)) return fallback;
        const std::string v = text(key);
        try {
            std::size_t used = 0;
            if (!v.empty() && v[0] == '-') throw std::invalid_argument("negative");
            const auto out = std::stoull(v, &used, 0);
            if (used != v.size()) throw std::invalid_argument("trailing");
            return out;
        } catch (const std::exception&) {
            throw ConfigError(key, "field '" + key + "' must be a nonnegative integer, got '" + v + "'");
        }
    }

    std::vector<double> numbers(const std::string& key) const {
        std::vector<double> out;
        if (!has(key)) return out;
        std::stringstream ss(text(key));
        std::string item;
        while (std::getline(ss, item, ',')) {
            item = trim(item);
            if (!item.empty()) out.push_back(to_number(key, item));
        }
        return out;
    }

    const std::map<std::string, std::string>& values() const noexcept { return values_; }

    static const std::set<std::string>& allowed_keys() {
        static const std::set<std::string> keys{
            "name",          "kind",         "description",  "model.preset",  "model.sigma",
            "model.drift",   "model.x0",     "model.dim",     "transform.preset", "run.steps",  "run.horizon",
            "run.paths",     "run.seed",     "run.n",        "run.n_list",    "run.out",
            "run.clock",     "run.mesh_levels", "run.t",     "run.h",         "run.s_points",
            "run.level",     "run.eps",      "run.density",  "run.exclude",   "run.growth_factor",
            "run.csv_paths", "run.x_lo",     "run.x_hi",     "run.t_lo",      "run.t_hi",
            "run.source",
        };
        return keys;
    }

private:
    static std::string trim(const std::string& s) {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) return {};
        const auto e = s.find_last_not_of(" \t\r");
        return s.substr(b, e - b + 1);
    }

    static double to_number(const std::string& key, const std::string& v) {
        try {
            std::size_t used = 0;
            const double out = std::stod(v, &used);
            if (used != v.size() || !std::isfinite(out)) throw std::invalid_argument("bad");
            return out;
        } catch (const std::exception&) {
            throw ConfigError(key, "field '" + key + "' must be a number, got '" + v + "'");
        }
    }

    std::map<std::string, std::string> values_;
};

// ---------------------------------------------------------------------------
// Scenario

inline const std::vector<std::string>& scenario_kinds() {
    static const std::vector<std::string> kinds{"cantor",  "decompose", "duality",   "gradient",
                                                "malliavin", "smoothing", "tanaka", "verdict"};
    return kinds;
}

struct Scenario {
    std::string name;
    std::string kind;
    std::string model_preset;
    ModelOverrides overrides;
    std::string transform_preset;
    std::size_t steps = 4096;
    double horizon = 1.0;
    std::size_t paths = 64;
    std::uint64_t seed = 1;
    double n = 1024.0;
    std::vector<double> n_list;
    std::string out;
    std::string clock = "identity";
    std::vector<std::size_t> mesh_levels;
    double t = 0.0;  // 0 means the horizon
    double h = 0.0;  // 0 means 1e-4 sqrt(dt)
    std::size_t s_points = 16;
    double level = 0.0;
    double eps = 0.01;
    std::size_t density = 41;
    double exclude = 0.0;
    double growth_factor = 2.0;
    std::size_t csv_paths = 4;
    double x_lo = -1.0, x_hi = 1.0, t_lo = 0.0, t_hi = 1.0;
    GradientSource source = GradientSource::smoothed;
    Config config;

    DiffusionModel model() const {
        ModelOverrides ov = overrides;
        ov.horizon = horizon;
        return make_model(model_preset, ov);
    }
    TransformSpec transform() const { return make_transform(transform_preset); }
    double eval_time() const { return t > 0.0 ? t : horizon; }
};

namespace detail {

inline bool needs_transform(const std::string& kind) {
    return kind == "decompose" || kind == "verdict" || kind == "malliavin" || kind == "smoothing" || kind == "gradient";
}

}  // namespace detail

/// Builds and validates a scenario; every problem is a ConfigError naming the field.
inline Scenario make_scenario(const Config& c) {
    Scenario s;
    s.config = c;
    s.name = c.text("name", "scenario");
    s.kind = c.required("kind");
    const auto& kinds = scenario_kinds();
    if (std::find(kinds.begin(), kinds.end(), s.kind) == kinds.end())
        throw ConfigError("kind", "unknown experiment kind '" + s.kind + "'");

    if (s.kind != "cantor") {
        s.model_preset = c.required("model.preset");
        if (c.has("model.sigma")) s.overrides.sigma = c.number("model.sigma", 1.0);
        if (c.has("model.drift")) s.overrides.drift = c.number("model.drift", 0.0);
        if (c.has("model.x0")) s.overrides.x0 = c.number("model.x0", 0.0);
        if (c.has("model.dim")) s.overrides.dim = c.integer("model.dim", 1);
    }
    if (detail::needs_transform(s.kind)) s.transform_preset = c.required("transform.preset");
    if (s.kind == "tanaka") s.transform_preset = c.text("transform.preset", "abs");

    s.steps = c.integer("run.steps", s.steps);
    s.horizon = c.number("run.horizon", s.horizon);
    s.paths = c.integer("run.paths", s.paths);
    s.seed = c.integer("run.seed", s.seed);
    s.n = c.number("run.n", s.n);
    s.n_list = c.numbers("run.n_list");
    s.out = c.text("run.out", "out/" + s.name);
    s.clock = c.text("run.clock", s.clock);
    for (double v : c.numbers("run.mesh_levels")) {
        if (!(v >= 1.0) || v != std::floor(v)) throw ConfigError("run.mesh_levels", "mesh levels must be positive integers");
        s.mesh_levels.push_back(static_cast<std::size_t>(v));
    }
    s.t = c.number("run.t", s.t);
    s.h = c.number("run.h", s.h);
    s.s_points = c.integer("run.s_points", s.s_points);
    s.level = c.number("run.level", s.level);
    s.eps = c.number("run.eps", s.eps);
    s.density = c.integer("run.density", s.density);
    s.exclude = c.number("run.exclude", s.exclude);
    s.growth_factor = c.number("run.growth_factor", s.growth_factor);
    s.csv_paths = c.integer("run.csv_paths", s.csv_paths);
    s.x_lo = c.number("run.x_lo", s.x_lo);
    s.x_hi = c.number("run.x_hi", s.x_hi);
    s.t_lo = c.number("run.t_lo", s.t_lo);
    s.t_hi = c.number("run.t_hi", s.t_hi);
    if (c.has("run.source")) {
        const auto src = c.text("run.source");
        if (src == "smoothed")
            s.source = GradientSource::smoothed;
        else if (src == "exact")
            s.source = GradientSource::exact;
        else
            throw ConfigError("run.source", "gradient source must be 'smoothed' or 'exact'");
    }

    if (s.steps < 2) throw ConfigError("run.steps", "need at least 2 steps");
    if (s.paths < 1) throw ConfigError("run.paths", "need at least one path");
    if (!(s.horizon > 0.0)) throw ConfigError("run.horizon", "horizon must be positive");
    if (!(s.n >= 1.0)) throw ConfigError("run.n", "smoothing index must be at least 1");
    if (!(s.eps > 0.0)) throw ConfigError("run.eps", "local time bandwidth must be positive");
    if (s.t < 0.0 || s.t > s.horizon) throw ConfigError("run.t", "evaluation time must lie in (0, horizon]");
    if (s.h < 0.0) throw ConfigError("run.h", "finite-difference step must be positive");
    if (s.density < 1) throw ConfigError("run.density", "grid density must be positive");
    if (s.kind == "verdict") {
        try {
            check_ladder(s.n_list);
        } catch (const ArgumentError& e) {
            throw ConfigError("run.n_list", e.what());
        }
    }

    if (!s.model_preset.empty()) {
        try {
            (void)s.model();
        } catch (const ArgumentError& e) {
            throw ConfigError("model.preset", e.what());
        }
    }
    if (!s.transform_preset.empty()) {
        try {
            (void)s.transform();
        } catch (const ArgumentError& e) {
            throw ConfigError("transform.preset", e.what());
        }
    }
    if (s.kind == "duality") {
        const bool known = s.clock == "identity" || s.clock == "cantor_plus_t" || s.clock == "from_characteristics" ||
                           s.clock.rfind("affine:", 0) == 0;
        if (!known) throw ConfigError("run.clock", "unknown clock preset '" + s.clock + "'");
        if (s.clock.rfind("affine:", 0) == 0) {
            try {
                (void)make_clock(s.clock, share(TimeGrid::uniform(1.0, 2)));
            } catch (const ArgumentError& e) {
                throw ConfigError("run.clock", e.what());
            }
        }
    }
    return s;
}

// ---------------------------------------------------------------------------
// Built-in scenarios, one per acceptance criterion plus the named examples.

struct BuiltinScenario {
    std::string name;
    std::string description;
    std::string config;
};

inline const std::vector<BuiltinScenario>& builtin_scenarios() {
    static const std::vector<BuiltinScenario> list = [] {
        std::vector<BuiltinScenario> v{
            {"cantor_example", "Cantor clock c(t)+t: time-changed Ito process and extended driver, 200 seeds",
             "name = cantor_example\nkind = cantor\nrun.steps = 16384\nrun.horizon = 1\nrun.paths = 200\nrun.seed = 1009\n"},
            {"duality_affine", "duality and change of variables under the clock V(t) = 2t",
             "name = duality_affine\nkind = duality\nmodel.preset = bounded_elliptic\nrun.clock = affine:2\n"
             "run.steps = 4096\nrun.horizon = 1\nrun.seed = 77\n"},
            {"duality_cantor", "duality residuals for the c(t)+t clock across a 3-level mesh ladder",
             "name = duality_cantor\nkind = duality\nmodel.preset = bm\nrun.clock = cantor_plus_t\n"
             "run.mesh_levels = 4096, 16384, 65536\nrun.horizon = 1\nrun.paths = 8\nrun.seed = 77\n"},
            {"duality_identity", "duality and change of variables under the identity clock",
             "name = duality_identity\nkind = duality\nmodel.preset = bounded_elliptic\nrun.clock = identity\n"
             "run.steps = 4096\nrun.horizon = 1\nrun.seed = 77\n"},
            {"gradient_abs", "generalized gradient of |x| against sign(x) in L2(mu), n = 1e4",
             "name = gradient_abs\nkind = gradient\nmodel.preset = bm\ntransform.preset = abs\nrun.n = 10000\n"
             "run.density = 80\nrun.exclude = 0.05\nrun.horizon = 1\n"},
            {"ito_square", "Ito consistency for x^2 on Brownian motion (A = <X>, QV of M against 4 int X^2)",
             "name = ito_square\nkind = decompose\nmodel.preset = bm\ntransform.preset = square\nrun.n = 1024\n"
             "run.steps = 65536\nrun.horizon = 1\nrun.paths = 64\nrun.seed = 2024\n"},
            {"l2bound_abs", "uniform L2 bound of the Malliavin derivatives of the smoothed |x|",
             "name = l2bound_abs\nkind = malliavin\nmodel.preset = bm\ntransform.preset = abs\n"
             "run.n_list = 100, 1000, 10000\nrun.steps = 4096\nrun.horizon = 1\nrun.paths = 128\nrun.seed = 31\n"},
            {"malliavin_square", "Malliavin chain rule for x^2 on Brownian motion",
             "name = malliavin_square\nkind = malliavin\nmodel.preset = bm\ntransform.preset = square\n"
             "run.steps = 4096\nrun.horizon = 1\nrun.paths = 128\nrun.seed = 31\n"},
            {"malliavin_t_plus_sin", "Malliavin chain rule for t + sin x on Brownian motion",
             "name = malliavin_t_plus_sin\nkind = malliavin\nmodel.preset = bm\ntransform.preset = t_plus_sin\n"
             "run.steps = 4096\nrun.horizon = 1\nrun.paths = 128\nrun.seed = 31\n"},
            {"smoothing_abs", "sup-grid error of the smoothed |x| on [-1,1] x [0,1], n = 10, 100, 1000",
             "name = smoothing_abs\nkind = smoothing\nmodel.preset = bm\ntransform.preset = abs\n"
             "run.n_list = 10, 100, 1000\nrun.density = 41\nrun.horizon = 1\n"},
            {"tanaka_abs", "Tanaka formula: compensator of |W| against the occupation-time local time",
             "name = tanaka_abs\nkind = tanaka\nmodel.preset = bm\ntransform.preset = abs\nrun.n = 1024\n"
             "run.steps = 65536\nrun.horizon = 1\nrun.paths = 256\nrun.seed = 7\nrun.eps = 0.01\n"},
        };
        for (const char* tr : {"linear", "square", "abs", "t_plus_sin", "pow:0.5", "pow:0.3"}) {
            std::string id = std::string("verdict_") + tr;
            std::replace(id.begin(), id.end(), ':', '_');
            std::replace(id.begin(), id.end(), '.', '_');
            v.push_back({id, std::string("semimartingale verdict for ") + tr + " on Brownian motion",
                         "name = " + id + "\nkind = verdict\nmodel.preset = bm\ntransform.preset = " + tr +
                             "\nrun.n_list = 4, 16, 64, 256, 1024\nrun.steps = 16384\nrun.horizon = 4\n"
                             "run.paths = 64\nrun.seed = 20240611\n"});
        }
        std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.name < b.name; });
        return v;
    }();
    return list;
}

inline const BuiltinScenario* find_builtin(const std::string& name) {
    for (const auto& b : builtin_scenarios())
        if (b.name == name) return &b;
    return nullptr;
}

/// Sorted listing of built-in scenarios, model, transform and clock presets.
inline std::string list_scenarios() {
    std::ostringstream os;
    auto section = [&](const char* title, const std::vector<std::pair<std::string, std::string>>& items) {
        os << title << ":\n";
        std::size_t w = 0;
        for (const auto& [n, d] : items) w = std::max(w, n.size());
        for (const auto& [n, d] : items) os << "  " << n << std::string(w - n.size() + 2, ' ') << d << "\n";
    };
    std::vector<std::pair<std::string, std::string>> sc;
    for (const auto& b : builtin_scenarios()) sc.emplace_back(b.name, b.description);
    section("scenarios", sc);
    section("models", model_presets());
    section("transforms", transform_presets());
    section("clocks", clock_presets());
    return os.str();
}

// ---------------------------------------------------------------------------
// Running

struct RunResult {
    Json report;
    std::vector<std::pair<std::string, std::string>> files;  // name, contents
};

namespace detail {

inline std::string fmt(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

inline Json scenario_header(const Scenario& s) {
    Json j;
    j["scenario"] = s.name;
    j["kind"] = s.kind;
    if (!s.model_preset.empty()) j["model"] = s.model_preset;
    if (!s.transform_preset.empty()) j["transform"] = s.transform_preset;
    j["seed"] = s.seed;
    return j;
}

inline DiffusionModel validated_model(const Scenario& s) {
    auto model = s.model();
    const auto probes = default_probe_grid(model);
    const auto rep = validate_model(model, probes);
    if (!rep.passed) throw ModelError("model '" + model.name + "' failed validation: " + rep.failure);
    return model;
}

/// Evenly spaced indices 0..K with at most `rows` entries, always including K.
inline std::vector<std::size_t> thinned_indices(std::size_t K, std::size_t rows = 513) {
    std::vector<std::size_t> idx;
    const std::size_t stride = std::max<std::size_t>(1, K / (rows - 1));
    for (std::size_t k = 0; k <= K; k += stride) idx.push_back(k);
    if (idx.back() != K) idx.push_back(K);
    return idx;
}

inline Json ladder_json(const VariationProfile& p) {
    return Json{{"n_levels", p.levels}, {"var_estimates", p.estimates}, {"stderr", p.standard_errors}};
}

inline std::string ladder_csv(const Json& report) {
    std::ostringstream os;
    os << "n,var,stderr\n";
    const auto& n = report.at("n_levels");
    for (std::size_t i = 0; i < n.size(); ++i)
        os << fmt(n[i].get<double>()) << "," << fmt(report.at("var_estimates")[i].get<double>()) << ","
           << fmt(report.at("stderr")[i].get<double>()) << "\n";
    return os.str();
}

inline std::string tanaka_csv(const Json& report) {
    std::ostringstream os;
    os << "t,A_t,local_time\n";
    if (!report.contains("series")) return os.str();
    const auto& s = report.at("series");
    for (std::size_t i = 0; i < s.at("t").size(); ++i)
        os << fmt(s.at("t")[i].get<double>()) << "," << fmt(s.at("A")[i].get<double>()) << ","
           << fmt(s.at("local_time")[i].get<double>()) << "\n";
    return os.str();
}

inline RunResult run_verdict(const Scenario& s) {
    const auto model = validated_model(s);
    const auto f = s.transform();
    const auto ens = simulate(model, share(TimeGrid::uniform(s.horizon, s.steps)), s.seed, s.paths);
    const auto profile = variation_ladder(f, ens, model, s.n_list);
    const auto v = semimartingale_verdict(profile);
    Json j = scenario_header(s);
    j["steps"] = s.steps;
    j["horizon"] = s.horizon;
    j["paths"] = s.paths;
    const Json ladder = ladder_json(profile);
    for (const auto& [k, val] : ladder.items()) j[k] = val;
    j["slope"] = v.slope;
    j["classification"] = to_string(v.classification);
    j["thresholds"] = Json{{"flat_slope", v.thresholds.flat_slope},
                           {"growth_slope", v.thresholds.growth_slope},
                           {"min_levels", v.thresholds.min_levels}};
    return {j, {{"ladder.csv", ladder_csv(j)}}};
}

inline RunResult run_decompose(const Scenario& s) {
    const auto model = validated_model(s);
    const auto f = s.transform();
    const auto grid = share(TimeGrid::uniform(s.horizon, s.steps));
    const auto ens = simulate(model, grid, s.seed, s.paths);
    DecomposeOptions opt;
    opt.source = s.source;
    const auto dec = decompose(f, ens, model, s.n, opt);

    std::vector<double> a_end(ens.size()), m_end(ens.size());
    for (std::size_t p = 0; p < ens.size(); ++p) {
        a_end[p] = dec[p].finite_variation.values.back();
        m_end[p] = dec[p].martingale.values.back();
    }
    const auto a = mean_and_error(a_end), m = mean_and_error(m_end);
    Json j = scenario_header(s);
    j["n"] = s.n;
    j["source"] = s.source == GradientSource::exact ? "exact" : "smoothed";
    j["steps"] = s.steps;
    j["horizon"] = s.horizon;
    j["paths"] = s.paths;
    j["mean_A_T"] = a.mean;
    j["stderr_A_T"] = a.standard_error;
    j["mean_M_T"] = m.mean;
    j["stderr_M_T"] = m.standard_error;

    if (f.is_c12()) {
        // A against int Lf ds, QV(M) against int |f_x sigma|^2 ds, both on the same mesh
        std::vector<double> a_err(ens.size()), qv_err(ens.size());
        parallel_for(ens.size(), [&](std::size_t p) {
            const auto& path = ens[p];
            const std::size_t d = path.dim;
            std::vector<double> g(d), sig(d * d);
            double lf = 0.0, bracket = 0.0;
            for (std::size_t k = 0; k + 1 < path.size(); ++k) {
                const double t = path.time(k), dt = grid->dt(k);
                lf += apply_L(f, model, t, path.state(k)) * dt;
                const auto gk = std::span<const double>(dec[p].gradients.data() + k * d, d);
                model.eval_diffusion(t, path.state(k), sig);
                for (std::size_t l = 0; l < d; ++l) {
                    double v = 0.0;
                    for (std::size_t i = 0; i < d; ++i) v += gk[i] * sig[i * d + l];
                    bracket += v * v * dt;
                }
            }
            a_err[p] = std::abs(dec[p].finite_variation.values.back() - lf);
            const double qv = quadratic_variation(dec[p].martingale).values.back();
            qv_err[p] = bracket > 0.0 ? std::abs(qv - bracket) / bracket : std::abs(qv);
        });
        const auto ae = mean_and_error(a_err), qe = mean_and_error(qv_err);
        j["ito_check"] = Json{{"mean_abs_A_minus_int_Lf", ae.mean},
                              {"qv_M_rel_err_mean", qe.mean},
                              {"qv_M_rel_err_max", *std::max_element(qv_err.begin(), qv_err.end())}};
    }

    std::ostringstream csv;
    csv << "path_id,t,x,f,M,A\n";
    const auto idx = thinned_indices(s.steps);
    for (std::size_t p = 0; p < std::min(s.csv_paths, ens.size()); ++p)
        for (std::size_t k : idx)
            csv << p << "," << fmt(ens[p].time(k)) << "," << fmt(ens[p].value(k)) << ","
                << fmt(f(ens[p].time(k), ens[p].state(k))) << "," << fmt(dec[p].martingale.values[k]) << ","
                << fmt(dec[p].finite_variation.values[k]) << "\n";
    return {j, {{"decomposition.csv", csv.str()}}};
}

inline RunResult run_tanaka(const Scenario& s) {
    const auto model = validated_model(s);
    const auto f = s.transform();
    const auto grid = share(TimeGrid::uniform(s.horizon, s.steps));
    const auto ens = simulate(model, grid, s.seed, s.paths);
    DecomposeOptions opt;
    opt.keep_gradients = false;
    const auto dec = decompose(f, ens, model, s.n, opt);
    const auto idx = thinned_indices(s.steps);
    const std::size_t P = ens.size();

    std::vector<double> a_end(P), series_a(idx.size(), 0.0), series_l(idx.size(), 0.0);
    Json sens = Json::array();
    double ratio_main = 0.0, mean_l_main = 0.0;
    for (double e : {s.eps, 0.5 * s.eps, 2.0 * s.eps}) {
        std::vector<double> l_end(P), gap(P);
        for (std::size_t p = 0; p < P; ++p) {
            const auto lt = local_time_oracle(ens[p], s.level, e);
            l_end[p] = lt.values.back();
            a_end[p] = dec[p].finite_variation.values.back();
            gap[p] = std::abs(a_end[p] - l_end[p]);
            if (e == s.eps)
                for (std::size_t r = 0; r < idx.size(); ++r) {
                    series_a[r] += dec[p].finite_variation.values[idx[r]] / static_cast<double>(P);
                    series_l[r] += lt.values[idx[r]] / static_cast<double>(P);
                }
        }
        const double ml = mean_and_error(l_end).mean;
        const double ratio = ml > 0.0 ? mean_and_error(gap).mean / ml : 0.0;
        if (e == s.eps) {
            ratio_main = ratio;
            mean_l_main = ml;
        }
        sens.push_back(Json{{"eps", e}, {"mean_local_time_T", ml}, {"relative_gap", ratio}});
    }
    const auto a = mean_and_error(a_end);
    Json j = scenario_header(s);
    j["n"] = s.n;
    j["level"] = s.level;
    j["eps"] = s.eps;
    j["steps"] = s.steps;
    j["horizon"] = s.horizon;
    j["paths"] = s.paths;
    j["mean_A_T"] = a.mean;
    j["stderr_A_T"] = a.standard_error;
    j["mean_local_time_T"] = mean_l_main;
    j["relative_gap"] = ratio_main;
    // E|X_T - a| - |x0 - a| for a driftless model with state-independent noise
    if (model.state_independent_diffusion && model.dim == 1) {
        std::vector<double> b(1);
        model.eval_drift(0.0, model.x0, b);
        if (b[0] == 0.0 && model.drift_bound == 0.0) {
            const double var = transition_kernel(model).variance_1d(0.0, model.x0, s.horizon);
            const double sd = std::sqrt(var), mu = model.x0[0] - s.level;
            const double e_abs = sd * std::sqrt(2.0 / std::numbers::pi) * std::exp(-0.5 * mu * mu / var) +
                                 mu * std::erf(mu / (sd * std::numbers::sqrt2));
            j["reference_mean_A_T"] = e_abs - std::abs(mu);
        }
    }
    j["eps_sensitivity"] = sens;
    std::vector<double> ts;
    for (std::size_t k : idx) ts.push_back((*grid)[k]);
    j["series"] = Json{{"t", ts}, {"A", series_a}, {"local_time", series_l}};
    return {j, {{"tanaka.csv", tanaka_csv(j)}}};
}

inline Json duality_json(const DualityReport& r) {
    return Json{{"steps", r.steps},
                {"roundtrip_max_err", r.roundtrip_max_err},
                {"integral_residuals", Json{{"H1", r.residual_h1}, {"HZ", r.residual_hz}}},
                {"qv_consistency", r.qv_consistency}};
}

inline RunResult run_duality(const Scenario& s) {
    const auto model = validated_model(s);
    std::vector<std::size_t> levels = s.mesh_levels;
    if (levels.empty()) levels.push_back(s.steps);
    std::function<Clock(GridPtr)> clock_for;
    if (s.clock == "from_characteristics") {
        clock_for = [&](GridPtr g) {
            auto m = model;
            m.horizon = g->back();
            const auto path = replay(m, g, brownian_increments(*g, m.dim, s.seed, 1u << 20));
            auto [A, N] = semimartingale_parts(m, path);
            return build_clock(A, N);
        };
    } else {
        clock_for = [&](GridPtr g) { return make_clock(s.clock, g); };
    }
    std::vector<DualityReport> reps;
    if (s.clock == "from_characteristics") {
        // characteristic clocks are path-specific, so levels are simulated independently
        for (std::size_t K : levels) {
            const Clock c = clock_for(share(TimeGrid::uniform(s.horizon, K)));
            reps.push_back(duality_check(model, c, s.seed));
        }
    } else {
        reps = duality_ladder(model, clock_for, s.horizon, levels, s.seed, s.paths);
    }
    Json j = scenario_header(s);
    j["clock"] = reps.back().clock;
    j["paths"] = s.paths;
    const auto top = duality_json(reps.back());
    for (auto& [k, v] : top.items())
        if (k != "steps") j[k] = v;
    Json mesh = Json::array();
    for (const auto& r : reps) mesh.push_back(duality_json(r));
    j["mesh_levels"] = mesh;
    return {j, {}};
}

inline RunResult run_malliavin(const Scenario& s) {
    const auto model = validated_model(s);
    const auto f = s.transform();
    const auto grid = share(TimeGrid::uniform(s.horizon, s.steps));
    const auto ens = simulate(model, grid, s.seed, s.paths);
    const double t = s.eval_time();
    const double h = s.h > 0.0 ? s.h : 1e-4 * std::sqrt(grid->dt(0));
    Json j = scenario_header(s);
    j["functional"] = f.name;
    j["t"] = t;
    j["h"] = h;
    j["steps"] = s.steps;
    j["paths"] = s.paths;
    if (f.is_c12() && f.gradient) {
        const auto rep = chain_rule_check(f, model, ens, t, h, s.s_points);
        const auto half = chain_rule_check(f, model, ens, t, 0.5 * h, s.s_points);
        j["mean_residual"] = rep.mean_residual;
        j["max_residual"] = rep.max_residual;
        j["halved_h"] = Json{{"h", 0.5 * h},
                             {"mean_residual", half.mean_residual},
                             {"ratio", rep.mean_residual > 0.0 ? half.mean_residual / rep.mean_residual : 0.0}};
    } else {
        j["mean_residual"] = nullptr;
        j["max_residual"] = nullptr;
    }
    // adaptedness: F evaluated mid-horizon, perturbations spread over the whole grid
    {
        const std::size_t mid = s.steps / 2;
        const double tt[1] = {(*grid)[mid]};
        std::vector<double> sg;
        for (std::size_t q = 0; q < s.s_points; ++q) sg.push_back((*grid)[q * s.steps / s.s_points]);
        const auto F = transform_functional(f.f);
        std::vector<double> worst(ens.size(), 0.0);
        parallel_for(ens.size(), [&](std::size_t p) {
            const auto D = malliavin_fd(model, F, ens[p], sg, tt, h);
            for (std::size_t q = 0; q < sg.size(); ++q)
                if (D.s_index[q] >= mid) worst[p] = std::max(worst[p], std::abs(D(0, q)));
        });
        j["adaptedness_max_abs"] = *std::max_element(worst.begin(), worst.end());
    }
    if (!s.n_list.empty()) {
        const auto kernel = transition_kernel(model);
        std::vector<SequenceMember> seq;
        std::vector<std::shared_ptr<SmoothedTransform>> keep;
        for (double n : s.n_list) {
            keep.push_back(std::make_shared<SmoothedTransform>(f, kernel, n));
            auto fn = keep.back();
            seq.push_back({n, [fn](double tt, std::span<const double> x) { return fn->value(tt, x); }});
        }
        const auto b = uniform_l2_bound(seq, model, ens, t, f.bounded, h, s.s_points, s.growth_factor);
        j["bound_indices"] = b.indices;
        j["bound_sequence"] = b.estimates;
        j["bound_stderr"] = b.standard_errors;
        j["bound_max"] = b.max_estimate;
        j["bound_violation"] = b.violation;
        j["warnings"] = b.warnings;
    } else {
        j["bound_sequence"] = Json::array();
    }
    return {j, {}};
}

inline RunResult run_smoothing(const Scenario& s) {
    const auto model = validated_model(s);
    const auto f = s.transform();
    const auto kernel = transition_kernel(model);
    std::vector<double> levels = s.n_list.empty() ? std::vector<double>{s.n} : s.n_list;
    std::vector<double> errors;
    const std::size_t D = s.density;
    for (double n : levels) {
        const SmoothedTransform fn(f, kernel, n);
        std::vector<double> worst(D, 0.0);
        parallel_for(D, [&](std::size_t it) {
            const double t = D == 1 ? s.t_lo : s.t_lo + (s.t_hi - s.t_lo) * static_cast<double>(it) / static_cast<double>(D - 1);
            for (std::size_t ix = 0; ix < D; ++ix) {
                const double x = D == 1 ? s.x_lo : s.x_lo + (s.x_hi - s.x_lo) * static_cast<double>(ix) / static_cast<double>(D - 1);
                const double xs[1] = {x};
                worst[it] = std::max(worst[it], std::abs(fn.value(t, xs) - f(t, xs)));
            }
        });
        errors.push_back(*std::max_element(worst.begin(), worst.end()));
    }
    Json j = scenario_header(s);
    j["n_levels"] = levels;
    j["sup_errors"] = errors;
    j["region"] = Json{{"t", {s.t_lo, s.t_hi}}, {"x", {s.x_lo, s.x_hi}}, {"points_per_axis", D}};
    std::ostringstream csv;
    csv << "n,sup_error\n";
    for (std::size_t i = 0; i < levels.size(); ++i) csv << fmt(levels[i]) << "," << fmt(errors[i]) << "\n";
    return {j, {{"smoothing.csv", csv.str()}}};
}

inline RunResult run_gradient(const Scenario& s) {
    const auto model = validated_model(s);
    const auto f = s.transform();
    const auto kernel = transition_kernel(model);
    Box box;
    box.t_lo = s.t_lo;
    box.t_hi = s.t_hi;
    box.x_lo = {s.x_lo};
    box.x_hi = {s.x_hi};
    const auto field = estimate_generalized_gradient(f, kernel, s.n, box, s.density);
    // reference: the analytic gradient where known, else a centered difference of f
    auto target = [&](double t, std::span<const double> x, std::span<double> out) {
        if (f.gradient) {
            f.gradient(t, x, out);
            return;
        }
        const auto g = fd_gradient(f, t, x);
        std::copy(g.begin(), g.end(), out.begin());
    };
    const double excl = s.exclude;
    const double dist = l2_mu_distance(field, kernel, target, [&](double, std::span<const double> x) {
        return std::abs(x[0]) >= excl;
    });
    Json j = scenario_header(s);
    j["n"] = s.n;
    j["l2_mu_distance"] = dist;
    j["exclude"] = excl;
    j["cells"] = field.size();
    return {j, {}};
}

inline RunResult run_cantor(const Scenario& s) {
    const auto setup = make_cantor_setup(s.horizon, s.steps);
    std::vector<double> qv(s.paths), xd(s.paths);
    parallel_for(s.paths, [&](std::size_t p) {
        const auto out = run_cantor_example(setup, s.seed, p);
        qv[p] = out.qv_end;
        xd[p] = out.x_minus_drift;
    });
    std::size_t pass = 0;
    for (double q : qv) pass += (q / s.horizon >= 0.9 && q / s.horizon <= 1.1) ? 1 : 0;
    const auto x = mean_and_error(xd), q = mean_and_error(qv);
    Json j = scenario_header(s);
    j["u_end"] = s.horizon;
    j["steps"] = s.steps;
    j["paths"] = s.paths;
    j["qv_mean"] = q.mean;
    j["qv_pass_fraction"] = static_cast<double>(pass) / static_cast<double>(s.paths);
    j["mean_x_minus_drift"] = x.mean;
    j["stderr_x_minus_drift"] = x.standard_error;
    j["t_end"] = setup.t_grid->back();

    const auto first = run_cantor_example(setup, s.seed, 0);
    std::ostringstream csv;
    csv << "u,t,X,Y,W_tilde\n";
    for (std::size_t k : thinned_indices(s.steps))
        csv << fmt((*setup.u_grid)[k]) << "," << fmt((*setup.t_grid)[k]) << "," << fmt(first.x.value(k)) << ","
            << fmt(first.martingale.value(k)) << "," << fmt(first.driver.value(k)) << "\n";
    return {j, {{"cantor.csv", csv.str()}}};
}

}  // namespace detail

inline RunResult execute(const Scenario& s) {
    if (s.kind == "verdict") return detail::run_verdict(s);
    if (s.kind == "decompose") return detail::run_decompose(s);
    if (s.kind == "tanaka") return detail::run_tanaka(s);
    if (s.kind == "duality") return detail::run_duality(s);
    if (s.kind == "malliavin") return detail::run_malliavin(s);
    if (s.kind == "smoothing") return detail::run_smoothing(s);
    if (s.kind == "gradient") return detail::run_gradient(s);
    if (s.kind == "cantor") return detail::run_cantor(s);
    throw ConfigError("kind", "unknown experiment kind '" + s.kind + "'");
}

/// A config path, or the name of a built-in scenario.
inline Config resolve_config(const std::string& ref) {
    if (std::filesystem::exists(ref)) return Config::load(ref);
    if (const auto* b = find_builtin(ref)) return Config::parse(b->config);
    throw ConfigError("path", "no config file or built-in scenario named '" + ref + "'");
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw Error("write failed for '" + path.string() + "'");
}

/// Runs a scenario and writes report.json plus its CSV files into `out_dir`.
/// Returns the report path.
inline std::filesystem::path run_scenario(const Scenario& s, const std::filesystem::path& out_dir) {
    const auto result = execute(s);
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw Error("cannot create output directory '" + out_dir.string() + "': " + ec.message());
    const auto report = out_dir / "report.json";
    write_text(report, result.report.dump(2) + "\n");
    for (const auto& [name, text] : result.files) write_text(out_dir / name, text);
    return report;
}

/// Plot-ready CSV for a report: ladder (n,var,stderr) for verdicts, (t,A_t,local_time)
/// for Tanaka runs. Written next to the report unless out_dir is given.
inline std::filesystem::path emit_plot_data(const std::filesystem::path& report_path,
                                            const std::filesystem::path& out_dir = {}) {
    std::ifstream in(report_path);
    if (!in) throw Error("cannot read report '" + report_path.string() + "'");
    Json report;
    try {
        report = Json::parse(in);
    } catch (const std::exception& e) {
        throw Error("malformed report '" + report_path.string() + "': " + e.what());
    }
    const auto dir = out_dir.empty() ? report_path.parent_path() : out_dir;
    if (!dir.empty()) std::filesystem::create_directories(dir);
    const std::string kind = report.value("kind", "");
    if (kind == "tanaka") {
        const auto p = dir / "tanaka_plot.csv";
        write_text(p, detail::tanaka_csv(report));
        return p;
    }
    if (report.contains("n_levels") && report.contains("var_estimates")) {
        const auto p = dir / "ladder_plot.csv";
        write_text(p, detail::ladder_csv(report));
        return p;
    }
    if (kind == "verdict") {
        const auto p = dir / "ladder_plot.csv";
        write_text(p, "n,var,stderr\n");
        return p;
    }
    throw UnsupportedError("no plot data for report kind '" + kind + "'");
}

/// Machine-readable error record.
inline Json error_record(const std::exception& e) {
    Json j;
    if (const auto* err = dynamic_cast<const Error*>(&e)) {
        j["error"] = err->kind();
        j["message"] = err->what();
        if (const auto* ce = dynamic_cast<const ConfigError*>(&e)) j["field"] = ce->field();
        if (const auto* be = dynamic_cast<const BlowUpError*>(&e)) j["step"] = be->step();
    } else {
        j["error"] = "internal";
        j["message"] = e.what();
    }
    return j;
}

}  // namespace smlab
