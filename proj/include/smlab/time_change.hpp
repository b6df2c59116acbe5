#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "smlab/error.hpp"
#include "smlab/parallel.hpp"
#include "smlab/path_analysis.hpp"
#include "smlab/simulate.hpp"

namespace smlab {

// ---------------------------------------------------------------------------
// Cantor function

namespace detail {

// Ternary digits of x = mantissa / 2^shift read exactly, generic over the
// integer type holding the remainder.
template <class Int>
double cantor_digits(Int rem, int shift, int digits) {
    const Int mask = (Int(1) << shift) - 1;
    double out = 0.0;
    for (int i = 1; i <= digits; ++i) {
        rem *= 3;
        const int digit = static_cast<int>(rem >> shift);
        rem &= mask;
        if (digit == 1) return out + std::ldexp(1.0, -i);
        if (digit == 2) out += std::ldexp(1.0, -i);
        if (rem == 0) break;
    }
    return out;
}

}  // namespace detail

/// Cantor function: ternary expansion of x cut after the first digit 1, digits
/// 2 mapped to 1 and read in binary. The double x is expanded exactly, so
/// ternary rationals with short expansions come out exact.
inline double cantor(double x, int digits = 64) {
    if (!(x >= 0.0 && x <= 1.0)) throw RangeError("cantor needs x in [0, 1]");
    if (digits < 1) throw ArgumentError("cantor needs at least one digit");
    if (x == 0.0) return 0.0;
    if (x == 1.0) return 1.0;
    int exp = 0;
    const double mant = std::frexp(x, &exp);              // x = mant * 2^exp, mant in [0.5, 1)
    const auto m = static_cast<std::uint64_t>(std::ldexp(mant, 53));
    const int shift = 53 - exp;                           // x = m / 2^shift
    if (shift <= 124) return detail::cantor_digits<unsigned __int128>(m, shift, digits);
    return detail::cantor_digits<boost::multiprecision::cpp_int>(boost::multiprecision::cpp_int(m), shift, digits);
}

/// Solves c(t) + t = u for t in [0, 1] by bisection (u in [0, 2]).
inline double inverse_cantor_plus_identity(double u) {
    if (!(u >= 0.0 && u <= 2.0)) throw RangeError("c(t) + t ranges over [0, 2]");
    double lo = 0.0, hi = 1.0;
    for (int it = 0; it < 200 && hi - lo > 0.0; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid == lo || mid == hi) break;
        if (cantor(mid) + mid <= u)
            lo = mid;
        else
            hi = mid;
    }
    return (cantor(hi) + hi - u) < (u - cantor(lo) - lo) ? hi : lo;
}

// ---------------------------------------------------------------------------
// Clocks

enum class ClockKind {
    sum_of_characteristics,  // V = t + Var(A) + N from one simulated path
    deterministic,
    cantor,                  // deterministic c(t) + t family
    external,                // arbitrary values; dependence on the noise unknown
};

inline const char* to_string(ClockKind k) {
    switch (k) {
        case ClockKind::sum_of_characteristics: return "from_characteristics";
        case ClockKind::deterministic: return "deterministic";
        case ClockKind::cantor: return "cantor";
        default: return "external";
    }
}

/// Strictly increasing continuous clock sampled on a grid (linear in between).
class Clock {
public:
    Clock(GridPtr grid, std::vector<double> values, ClockKind kind = ClockKind::external, std::string name = {})
        : grid_(std::move(grid)), values_(std::move(values)), kind_(kind), name_(std::move(name)) {
        if (values_.size() != grid_->size()) throw ArgumentError("clock values do not match grid");
        for (std::size_t k = 1; k < values_.size(); ++k)
            if (!(values_[k] > values_[k - 1])) throw ArgumentError("clock must be strictly increasing");
    }

    const GridPtr& grid() const noexcept { return grid_; }
    const std::vector<double>& values() const noexcept { return values_; }
    ClockKind kind() const noexcept { return kind_; }
    const std::string& name() const noexcept { return name_; }
    std::size_t size() const noexcept { return values_.size(); }
    double operator[](std::size_t k) const noexcept { return values_[k]; }
    double start() const noexcept { return values_.front(); }
    double end() const noexcept { return values_.back(); }

    /// V(t) by linear interpolation on the grid.
    double operator()(double t) const {
        const auto& g = *grid_;
        if (t <= g.front()) return values_.front();
        if (t >= g.back()) return values_.back();
        const std::size_t j = g.floor_index(t);
        const double w = (t - g[j]) / g.dt(j);
        return values_[j] + w * (values_[j + 1] - values_[j]);
    }

private:
    GridPtr grid_;
    std::vector<double> values_;
    ClockKind kind_;
    std::string name_;
};

/// V_t = t + (running total variation of A)_t + N_t.
inline Clock build_clock(const SamplePath& A, const SamplePath& N) {
    if (!(A.grid && N.grid && *A.grid == *N.grid)) throw ArgumentError("A and N must share a grid");
    for (std::size_t k = 1; k < N.size(); ++k)
        if (N.value(k) < N.value(k - 1)) throw ArgumentError("N must be nondecreasing (index " + std::to_string(k) + ")");
    const auto tv = running_total_variation(A);
    std::vector<double> v(A.size());
    for (std::size_t k = 0; k < v.size(); ++k) v[k] = A.time(k) + tv.values[k] + N.value(k);
    return Clock(A.grid, std::move(v), ClockKind::sum_of_characteristics, "from_characteristics");
}

/// Named deterministic clocks on a grid: "identity", "affine:<a>", "cantor_plus_t".
inline Clock make_clock(const std::string& preset, GridPtr grid) {
    std::vector<double> v(grid->size());
    if (preset == "identity") {
        for (std::size_t k = 0; k < v.size(); ++k) v[k] = (*grid)[k];
        return Clock(grid, std::move(v), ClockKind::deterministic, preset);
    }
    if (preset.rfind("affine:", 0) == 0) {
        double a = 0.0;
        try {
            a = std::stod(preset.substr(7));
        } catch (const std::exception&) {
            throw ArgumentError("malformed slope in clock preset '" + preset + "'");
        }
        if (!(a > 0.0)) throw ArgumentError("affine clock needs a positive slope");
        for (std::size_t k = 0; k < v.size(); ++k) v[k] = a * (*grid)[k];
        return Clock(grid, std::move(v), ClockKind::deterministic, preset);
    }
    if (preset == "cantor_plus_t") {
        if (grid->front() < 0.0 || grid->back() > 1.0) throw RangeError("cantor_plus_t clock lives on [0, 1]");
        for (std::size_t k = 0; k < v.size(); ++k) v[k] = cantor((*grid)[k]) + (*grid)[k];
        return Clock(grid, std::move(v), ClockKind::cantor, preset);
    }
    if (preset == "from_characteristics")
        throw ArgumentError("from_characteristics clocks are built from a simulated path (build_clock)");
    throw ArgumentError("unknown clock preset '" + preset + "'");
}

inline const std::vector<std::pair<std::string, std::string>>& clock_presets() {
    static const std::vector<std::pair<std::string, std::string>> presets{
        {"affine:<a>", "V(t) = a t"},
        {"cantor_plus_t", "V(t) = c(t) + t, c the Cantor function"},
        {"from_characteristics", "V = t + Var(A) + <M> of a simulated path"},
        {"identity", "V(t) = t"},
    };
    return presets;
}

/// Generalized inverse inf{t : V_t > u} for u in [V(0), V(T)); linear inside
/// grid increments, so grid values map back to their grid times exactly.
inline double inverse_clock(const Clock& clock, double u) {
    if (!(u >= clock.start() && u < clock.end())) throw RangeError("inverse clock argument outside [V(0), V(T))");
    const auto& v = clock.values();
    const auto k = static_cast<std::size_t>(std::upper_bound(v.begin(), v.end(), u) - v.begin());
    const std::size_t j = k - 1;
    const auto& g = *clock.grid();
    if (u == v[j]) return g[j];
    return g[j] + (u - v[j]) / (v[k] - v[j]) * g.dt(j);
}

/// Grid index for a left-constant lookup at time t; t within a relative 1e-9
/// of the next grid point snaps onto it.
inline std::size_t left_index(const TimeGrid& g, double t) {
    std::size_t j = g.floor_index(t);
    if (j + 1 < g.size() && g[j + 1] - t <= 1e-9 * g.dt(j)) ++j;
    return j;
}

/// path evaluated at arbitrary times, left-constant between grid points.
inline SamplePath sample_left(const SamplePath& path, GridPtr at) {
    SamplePath out(at, path.dim);
    for (std::size_t k = 0; k < at->size(); ++k) {
        const std::size_t j = left_index(*path.grid, (*at)[k]);
        for (std::size_t i = 0; i < path.dim; ++i) out.value(k, i) = path.value(j, i);
    }
    return out;
}

/// First coordinate of path at time t, linearly interpolated (grid hits are exact).
inline double sample_linear(const SamplePath& path, double t) {
    const auto& g = *path.grid;
    const std::size_t j = left_index(g, t);
    if (j + 1 >= g.size() || t <= g[j]) return path.value(j);
    const double w = (t - g[j]) / g.dt(j);
    return path.value(j) + w * (path.value(j + 1) - path.value(j));
}

/// X_u = path(V^(u)) on the target grid, left-constant between the path's grid
/// points. u = V(T) maps to T.
inline SamplePath time_change_path(const SamplePath& path, const Clock& clock, GridPtr target) {
    if (!(*path.grid == *clock.grid())) throw ArgumentError("path and clock must share a grid");
    const double tol = 1e-12 * std::max(1.0, std::abs(clock.end()));
    if (target->front() < clock.start() - tol || target->back() > clock.end() + tol)
        throw RangeError("clock range does not cover the target grid");
    SamplePath out(target, path.dim);
    for (std::size_t k = 0; k < target->size(); ++k) {
        const double u = std::clamp((*target)[k], clock.start(), clock.end());
        const double tau = u >= clock.end() ? path.grid->back() : inverse_clock(clock, u);
        const std::size_t j = left_index(*path.grid, tau);
        for (std::size_t i = 0; i < path.dim; ++i) out.value(k, i) = path.value(j, i);
    }
    return out;
}

/// Step-wise driver dW~ = dY / c where |c| >= cutoff, dW~ = dW_bar elsewhere.
/// c_values are left-endpoint samples (K or K+1 entries).
inline SamplePath extend_driver(const SamplePath& Y, std::span<const double> c_values, const SamplePath& aux,
                                double cutoff = 1e-8) {
    if (!(Y.grid && aux.grid && *Y.grid == *aux.grid)) throw ArgumentError("martingale part and auxiliary driver grids differ");
    const std::size_t K = Y.steps();
    if (c_values.size() != K && c_values.size() != K + 1) throw ArgumentError("c values are not sampled on the grid");
    std::vector<double> w(K + 1, 0.0);
    for (std::size_t k = 0; k < K; ++k) {
        const double c = c_values[k];
        const double inc = std::abs(c) > cutoff ? (Y.value(k + 1) - Y.value(k)) / c : aux.value(k + 1) - aux.value(k);
        w[k + 1] = w[k] + inc;
    }
    return scalar_path(Y.grid, std::move(w));
}

// ---------------------------------------------------------------------------
// Local characteristics

/// b, c^2 as step densities against dV: A = sum b dV, N = sum c^2 dV.
struct LocalCharacteristics {
    std::vector<double> b;         // K entries
    std::vector<double> c_squared; // K entries
    Clock clock;

    SamplePath reconstruct_A() const { return integrate(b); }
    SamplePath reconstruct_N() const { return integrate(c_squared); }

private:
    SamplePath integrate(const std::vector<double>& density) const {
        std::vector<double> out(clock.size(), 0.0);
        for (std::size_t k = 0; k + 1 < clock.size(); ++k) out[k + 1] = out[k] + density[k] * (clock[k + 1] - clock[k]);
        return scalar_path(clock.grid(), std::move(out));
    }
};

inline LocalCharacteristics local_characteristics(const SamplePath& A, const SamplePath& N) {
    Clock clock = build_clock(A, N);
    const std::size_t K = A.steps();
    std::vector<double> b(K), c2(K);
    for (std::size_t k = 0; k < K; ++k) {
        const double dv = clock[k + 1] - clock[k];
        b[k] = (A.value(k + 1) - A.value(k)) / dv;
        c2[k] = (N.value(k + 1) - N.value(k)) / dv;
    }
    return {std::move(b), std::move(c2), std::move(clock)};
}

/// Drift part sum b(t_k, X_k) dt_k and bracket of the martingale part of a simulated path.
inline std::pair<SamplePath, SamplePath> semimartingale_parts(const DiffusionModel& model, const SamplePath& path) {
    std::vector<double> a(path.size(), 0.0), n(path.size(), 0.0);
    std::vector<double> b(model.dim);
    double m_prev = path.value(0);
    for (std::size_t k = 0; k + 1 < path.size(); ++k) {
        model.eval_drift(path.time(k), path.state(k), b);
        a[k + 1] = a[k] + b[0] * path.grid->dt(k);
        const double m_next = path.value(k + 1) - a[k + 1];
        const double dm = m_next - m_prev;
        n[k + 1] = n[k] + dm * dm;
        m_prev = m_next;
    }
    return {scalar_path(path.grid, std::move(a)), scalar_path(path.grid, std::move(n))};
}

// ---------------------------------------------------------------------------
// Duality and change of variables

struct DualityReport {
    std::string clock;
    double roundtrip_max_err = 0.0;
    double residual_h1 = 0.0;
    double residual_hz = 0.0;
    double qv_consistency = 0.0;
    std::size_t steps = 0;
};

/// Checks the time-change duality for an Ito process X simulated on a uniform
/// grid over [0, V(T)] from the given Brownian increments:
///  - round trip: X^ = X o V on the clock grid, then X^ o V^ back on the
///    X grid; max |difference|;
///  - change of variables: int_0^{V_t} H dZ on the X grid, the last partial
///    step taken against Z linearly interpolated, against int_0^t H_{V_s} dZ_{V_s}
///    on the clock grid with Z o V sampled left-constant; H = 1 and H = Z, max over t;
///  - bracket: relative gap between <Y>_end and int c^2(X) du, Y the martingale part.
inline DualityReport duality_check(const DiffusionModel& model, const Clock& clock, GridPtr u_grid,
                                   std::vector<double> increments) {
    if (clock.kind() == ClockKind::external)
        throw UnsupportedError("duality check supports deterministic, Cantor and characteristic clocks only");
    if (clock.start() != 0.0) throw ArgumentError("duality check expects V(0) = 0");
    DiffusionModel m = model;
    m.horizon = u_grid->back();
    const SamplePath X = replay(m, u_grid, std::move(increments));

    DualityReport rep;
    rep.clock = clock.name().empty() ? to_string(clock.kind()) : clock.name();
    rep.steps = clock.grid()->steps();

    // round trip
    const auto v_times = share(TimeGrid(clock.values()));
    SamplePath x_hat = sample_left(X, v_times);
    x_hat.grid = clock.grid();
    const SamplePath back = time_change_path(x_hat, clock, u_grid);
    for (std::size_t j = 0; j < X.size(); ++j)
        rep.roundtrip_max_err = std::max(rep.roundtrip_max_err, std::abs(back.value(j) - X.value(j)));

    // change of variables
    const SamplePath Z = scalar_path(u_grid, X.coordinate(0));
    const SamplePath ZV = scalar_path(clock.grid(), x_hat.coordinate(0));
    const std::vector<double> ones_u(Z.size(), 1.0), ones_t(ZV.size(), 1.0);
    const auto lhs1 = ito_integral(ones_u, Z), lhsz = ito_integral(Z.values, Z);
    const auto rhs1 = ito_integral(ones_t, ZV), rhsz = ito_integral(ZV.values, ZV);
    for (std::size_t k = 0; k < clock.size(); ++k) {
        const std::size_t j = left_index(*u_grid, clock[k]);
        const double partial = sample_linear(Z, clock[k]) - Z.value(j);
        const double l1 = lhs1.values[j] + partial;
        const double lz = lhsz.values[j] + Z.value(j) * partial;
        rep.residual_h1 = std::max(rep.residual_h1, std::abs(l1 - rhs1.values[k]));
        rep.residual_hz = std::max(rep.residual_hz, std::abs(lz - rhsz.values[k]));
    }

    // bracket of the martingale part against int c^2 du
    auto [A, N] = semimartingale_parts(m, X);
    double integral = 0.0;
    for (std::size_t j = 0; j + 1 < X.size(); ++j) {
        const auto c = m.covariance_rate(X.time(j), X.state(j));
        integral += c[0] * u_grid->dt(j);
    }
    rep.qv_consistency = integral > 0.0 ? std::abs(N.values.back() - integral) / integral : 0.0;
    return rep;
}

/// Uniform X grid with as many steps as the clock grid; increments drawn from (seed, substream 0).
inline DualityReport duality_check(const DiffusionModel& model, const Clock& clock, std::uint64_t seed) {
    const auto u_grid = share(TimeGrid::uniform(clock.end() - clock.start(), clock.grid()->steps(), clock.start()));
    return duality_check(model, clock, u_grid, brownian_increments(*u_grid, model.dim, seed, 0));
}

/// Nested mesh ladder: the finest level's Brownian increments are summed into
/// the coarser levels, so every level sees the same Brownian path. With
/// several paths (substreams 0..paths-1) the per-level metrics are averaged.
/// `clock_for(grid)` builds the clock on a uniform [0, horizon] grid.
template <class ClockFactory>
std::vector<DualityReport> duality_ladder(const DiffusionModel& model, ClockFactory&& clock_for, double horizon,
                                          std::span<const std::size_t> steps, std::uint64_t seed,
                                          std::size_t paths = 1) {
    if (steps.empty()) throw ArgumentError("mesh ladder needs at least one level");
    if (paths < 1) throw ArgumentError("mesh ladder needs at least one path");
    const std::size_t finest = *std::max_element(steps.begin(), steps.end());
    const std::size_t d = model.dim;
    std::vector<Clock> clocks;
    for (std::size_t K : steps) {
        if (K < 1 || finest % K != 0) throw ArgumentError("mesh ladder levels must divide the finest level");
        clocks.push_back(clock_for(share(TimeGrid::uniform(horizon, K))));
    }
    const double u_len = clocks.front().end() - clocks.front().start();
    const auto fine_grid = TimeGrid::uniform(u_len, finest, clocks.front().start());

    std::vector<std::vector<DualityReport>> per_path(paths);
    parallel_for(paths, [&](std::size_t p) {
        const auto fine = brownian_increments(fine_grid, d, seed, p);
        for (std::size_t l = 0; l < steps.size(); ++l) {
            const std::size_t K = steps[l], r = finest / K;
            std::vector<double> inc(K * d, 0.0);
            for (std::size_t k = 0; k < K; ++k)
                for (std::size_t q = 0; q < r; ++q)
                    for (std::size_t i = 0; i < d; ++i) inc[k * d + i] += fine[(k * r + q) * d + i];
            const auto u_grid = share(TimeGrid::uniform(u_len, K, clocks[l].start()));
            per_path[p].push_back(duality_check(model, clocks[l], u_grid, std::move(inc)));
        }
    });

    std::vector<DualityReport> out(steps.size());
    for (std::size_t l = 0; l < steps.size(); ++l) {
        out[l].clock = per_path[0][l].clock;
        out[l].steps = per_path[0][l].steps;
        for (const auto& reps : per_path) {
            out[l].roundtrip_max_err += reps[l].roundtrip_max_err / static_cast<double>(paths);
            out[l].residual_h1 += reps[l].residual_h1 / static_cast<double>(paths);
            out[l].residual_hz += reps[l].residual_hz / static_cast<double>(paths);
            out[l].qv_consistency += reps[l].qv_consistency / static_cast<double>(paths);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// The Cantor-clock example: X^_t = c(t) + t + W_t, V = c(t) + t, X = X^ o V^.

/// Deterministic part of the example: a uniform grid in the new time u and the
/// matching original times t_j = V^(u_j), so the time change is exact on grid points.
struct CantorSetup {
    GridPtr u_grid;
    GridPtr t_grid;
    Clock clock;
    std::vector<double> c_values;  // step-wise sqrt(dt/du), the density of <Y> against du
};

inline CantorSetup make_cantor_setup(double u_end, std::size_t steps) {
    if (!(u_end > 0.0 && u_end <= 2.0)) throw RangeError("Cantor example lives in u in (0, 2]");
    auto u_grid = share(TimeGrid::uniform(u_end, steps));
    std::vector<double> t(steps + 1);
    for (std::size_t j = 0; j <= steps; ++j) t[j] = inverse_cantor_plus_identity((*u_grid)[j]);
    auto t_grid = share(TimeGrid(t));
    // clock values are the u grid itself: V(t_j) = u_j up to the bisection tolerance
    Clock clock(t_grid, u_grid->times(), ClockKind::cantor, "cantor_plus_t");
    std::vector<double> c(steps);
    for (std::size_t j = 0; j < steps; ++j) c[j] = std::sqrt(t_grid->dt(j) / u_grid->dt(j));
    return {u_grid, t_grid, std::move(clock), std::move(c)};
}

struct CantorOutcome {
    SamplePath x_hat;         // on the t grid
    SamplePath x;             // X_u = X^(V^(u)) on the u grid
    SamplePath martingale;    // Y = X - u
    SamplePath driver;        // the extended Brownian motion W~
    double qv_end = 0.0;      // <W~> at u_end (discrete)
    double x_minus_drift = 0.0;  // X_{u_end} - u_end
};

/// W from substream 2*index, the independent W_bar from substream 2*index + 1.
inline CantorOutcome run_cantor_example(const CantorSetup& setup, std::uint64_t seed, std::uint64_t index) {
    const auto& tg = *setup.t_grid;
    const auto w_inc = brownian_increments(tg, 1, seed, 2 * index);
    CantorOutcome out;
    out.x_hat = SamplePath(setup.t_grid, 1);
    double w = 0.0;
    out.x_hat.value(0) = setup.clock[0];
    for (std::size_t k = 0; k < tg.steps(); ++k) {
        w += w_inc[k];
        out.x_hat.value(k + 1) = (cantor(tg[k + 1]) + tg[k + 1]) + w;
    }
    out.x_hat.increments = w_inc;
    out.x = time_change_path(out.x_hat, setup.clock, setup.u_grid);
    std::vector<double> y(out.x.size());
    for (std::size_t j = 0; j < y.size(); ++j) y[j] = out.x.value(j) - (*setup.u_grid)[j];
    out.martingale = scalar_path(setup.u_grid, std::move(y));
    const auto bar_inc = brownian_increments(*setup.u_grid, 1, seed, 2 * index + 1);
    std::vector<double> bar(setup.u_grid->size(), 0.0);
    for (std::size_t j = 0; j < bar_inc.size(); ++j) bar[j + 1] = bar[j] + bar_inc[j];
    out.driver = extend_driver(out.martingale, setup.c_values, scalar_path(setup.u_grid, std::move(bar)));
    out.qv_end = quadratic_variation(out.driver).values.back();
    out.x_minus_drift = out.x.values.back() - setup.u_grid->back();
    return out;
}

}  // namespace smlab
