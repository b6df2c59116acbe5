#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "smlab/error.hpp"
#include "smlab/parallel.hpp"
#include "smlab/path_analysis.hpp"
#include "smlab/simulate.hpp"
#include "smlab/transform.hpp"

namespace smlab {

/// F evaluated on a path at grid index k. It must only read the path up to k.
using PathFunctional = std::function<double(const SamplePath&, std::size_t)>;

/// D[i][j] ~ D_{s_j} F(t_i), rows indexed by evaluation time.
struct MalliavinMatrix {
    std::vector<double> s_times, t_times;
    std::vector<std::size_t> s_index, t_index;
    std::vector<double> values;  // t_times.size() * s_times.size(), row-major
    double h = 0.0;

    double operator()(std::size_t i, std::size_t j) const noexcept { return values[i * s_times.size() + j]; }
    double& operator()(std::size_t i, std::size_t j) noexcept { return values[i * s_times.size() + j]; }
};

/// Index of grid point t (relative tolerance 1e-12), or an argument error.
inline std::size_t grid_index_of(const TimeGrid& g, double t, const char* what) {
    const double tol = 1e-12 * std::max(1.0, std::abs(t));
    const std::size_t j = g.floor_index(t);
    for (std::size_t c : {j, j + 1})
        if (c < g.size() && std::abs(g[c] - t) <= tol) return c;
    throw ArgumentError(std::string(what) + " " + std::to_string(t) + " is not a grid point");
}

/// Finite-difference Malliavin derivative: the Brownian increment of step j
/// (starting at s_j) is shifted by h along driver coordinate `coordinate`, the
/// Euler scheme re-run from step j with all other increments unchanged, and
/// D[i][j] = (F_i(bumped) - F_i(base)) / h. A shift h of one increment is the
/// Cameron-Martin direction with density h/dt on that step, so the quotient is
/// already the step average of D_s F. Entries with s_j >= t_i are exactly zero.
inline MalliavinMatrix malliavin_fd(const DiffusionModel& model, const PathFunctional& functional,
                                    const SamplePath& base, std::span<const double> s_times,
                                    std::span<const double> t_times, double h, std::size_t coordinate = 0) {
    if (!(h > 0.0)) throw ArgumentError("finite-difference step h must be positive");
    if (!base.has_increments()) throw ArgumentError("base path does not retain its driver increments");
    if (coordinate >= model.dim) throw ArgumentError("driver coordinate out of range");
    const auto& g = *base.grid;
    MalliavinMatrix D;
    D.h = h;
    D.s_times.assign(s_times.begin(), s_times.end());
    D.t_times.assign(t_times.begin(), t_times.end());
    for (double s : s_times) {
        const std::size_t j = grid_index_of(g, s, "perturbation time");
        if (j >= g.steps()) throw ArgumentError("perturbation time must precede the last grid point");
        D.s_index.push_back(j);
    }
    for (double t : t_times) D.t_index.push_back(grid_index_of(g, t, "evaluation time"));
    const std::size_t I = t_times.size(), J = s_times.size();
    D.values.assign(I * J, 0.0);

    std::vector<double> f_base(I);
    for (std::size_t i = 0; i < I; ++i) f_base[i] = functional(base, D.t_index[i]);

    SamplePath bumped = base;
    for (std::size_t j = 0; j < J; ++j) {
        const std::size_t step = D.s_index[j];
        const std::size_t d = base.dim;
        std::copy(base.increments.begin(), base.increments.end(), bumped.increments.begin());
        std::copy(base.values.begin(), base.values.end(), bumped.values.begin());
        bumped.increments[step * d + coordinate] += h;
        euler_steps(model, g, bumped.increments, bumped.values, step);
        for (std::size_t i = 0; i < I; ++i) D(i, j) = (functional(bumped, D.t_index[i]) - f_base[i]) / h;
    }
    return D;
}

/// `count` grid times spread evenly over [0, t), always including 0.
inline std::vector<double> thinned_s_grid(const TimeGrid& g, double t, std::size_t count) {
    if (count < 1) throw ArgumentError("thinned s-grid needs at least one point");
    const std::size_t end = grid_index_of(g, t, "evaluation time");
    if (end == 0) throw ArgumentError("evaluation time must be after the grid start");
    count = std::min(count, end);
    std::vector<double> s;
    for (std::size_t q = 0; q < count; ++q) s.push_back(g[q * end / count]);
    return s;
}

inline PathFunctional coordinate_functional(std::size_t i = 0) {
    return [i](const SamplePath& p, std::size_t k) { return p.value(k, i); };
}

inline PathFunctional transform_functional(ScalarField f) {
    return [f = std::move(f)](const SamplePath& p, std::size_t k) { return f(p.time(k), p.state(k)); };
}

struct ChainRuleReport {
    std::string functional;
    double t = 0.0;
    double h = 0.0;
    double mean_residual = 0.0;
    double max_residual = 0.0;
    std::vector<double> residuals;  // per path
};

/// Per path: || D f(t, X_t) - f_x(t, X_t) D X_t || / || f_x(t, X_t) D X_t || over
/// the s-grid, both sides by finite differences from the same increments.
inline ChainRuleReport chain_rule_check(const TransformSpec& f, const DiffusionModel& model,
                                        const PathEnsemble& ensemble, double t, double h, std::size_t s_points = 16) {
    if (!f.gradient) throw UnsupportedError("chain-rule check needs an analytic gradient");
    if (ensemble.size() == 0) throw ArgumentError("empty ensemble");
    const auto s = thinned_s_grid(*ensemble.grid, t, s_points);
    const double tt[1] = {t};
    const auto F = transform_functional(f.f);
    const auto X = coordinate_functional(0);
    ChainRuleReport rep;
    rep.functional = f.name;
    rep.t = t;
    rep.h = h;
    rep.residuals.resize(ensemble.size());
    parallel_for(ensemble.size(), [&](std::size_t p) {
        const auto& path = ensemble[p];
        const auto DF = malliavin_fd(model, F, path, s, tt, h);
        const auto DX = malliavin_fd(model, X, path, s, tt, h);
        std::vector<double> fx(model.dim);
        const std::size_t k = DF.t_index[0];
        f.gradient(path.time(k), path.state(k), fx);
        double num = 0.0, den = 0.0;
        for (std::size_t j = 0; j < s.size(); ++j) {
            const double rhs = fx[0] * DX(0, j);
            num += (DF(0, j) - rhs) * (DF(0, j) - rhs);
            den += rhs * rhs;
        }
        rep.residuals[p] = den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
    });
    for (double r : rep.residuals) {
        rep.mean_residual += r / static_cast<double>(rep.residuals.size());
        rep.max_residual = std::max(rep.max_residual, r);
    }
    return rep;
}

/// One member F^n = f^n(t, X_t) of an approximating sequence.
struct SequenceMember {
    double index = 0.0;
    ScalarField f;
};

struct L2BoundReport {
    double t = 0.0;
    double h = 0.0;
    std::vector<double> indices;
    std::vector<double> estimates;
    std::vector<double> standard_errors;
    double max_estimate = 0.0;
    double growth_factor = 2.0;
    bool violation = false;
    std::vector<std::string> warnings;
};

/// Monte Carlo estimate of E int_0^t |D_s F^n|^2 ds per member, the s-integral
/// taken as a Riemann sum over a thinned grid of `s_points` times. Flags a
/// violation when a later estimate exceeds growth_factor times the first.
inline L2BoundReport uniform_l2_bound(const std::vector<SequenceMember>& sequence, const DiffusionModel& model,
                                      const PathEnsemble& ensemble, double t, bool bounded, double h = 0.0,
                                      std::size_t s_points = 16, double growth_factor = 2.0) {
    if (sequence.empty()) throw ArgumentError("approximating sequence is empty");
    if (ensemble.size() == 0) throw ArgumentError("empty ensemble");
    const auto& g = *ensemble.grid;
    if (h == 0.0) h = 1e-4 * std::sqrt(g.dt(0));
    const auto s = thinned_s_grid(g, t, s_points);
    const double tt[1] = {t};
    const double ds = (t - g.front()) / static_cast<double>(s.size());
    L2BoundReport rep;
    rep.t = t;
    rep.h = h;
    rep.growth_factor = growth_factor;
    if (!bounded) rep.warnings.push_back("f(t, X_t) is not flagged bounded; the uniform bound is reported without that hypothesis");
    std::vector<double> per_path(ensemble.size());
    for (const auto& member : sequence) {
        const auto F = transform_functional(member.f);
        parallel_for(ensemble.size(), [&](std::size_t p) {
            const auto D = malliavin_fd(model, F, ensemble[p], s, tt, h);
            double acc = 0.0;
            for (std::size_t j = 0; j < s.size(); ++j) acc += D(0, j) * D(0, j) * ds;
            per_path[p] = acc;
        });
        const auto est = mean_and_error(per_path);
        rep.indices.push_back(member.index);
        rep.estimates.push_back(est.mean);
        rep.standard_errors.push_back(est.standard_error);
    }
    rep.max_estimate = *std::max_element(rep.estimates.begin(), rep.estimates.end());
    rep.violation = rep.max_estimate > growth_factor * rep.estimates.front();
    return rep;
}

}  // namespace smlab
