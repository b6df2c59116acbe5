#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "smlab/error.hpp"

namespace smlab {

/// Strictly increasing sequence of times.
class TimeGrid {
public:
    TimeGrid() = default;

    explicit TimeGrid(std::vector<double> times) : times_(std::move(times)) {
        if (times_.empty()) throw ArgumentError("time grid must contain at least one point");
        for (std::size_t k = 0; k < times_.size(); ++k) {
            if (!std::isfinite(times_[k])) throw ArgumentError("time grid contains a non-finite time");
            if (k > 0 && !(times_[k] > times_[k - 1]))
                throw ArgumentError("time grid must be strictly increasing (index " + std::to_string(k) + ")");
        }
    }

    /// K equal steps on [start, start + length]; the last point is exactly start + length.
    static TimeGrid uniform(double length, std::size_t steps, double start = 0.0) {
        if (steps < 1) throw ArgumentError("uniform grid needs at least one step");
        if (!(length > 0.0)) throw ArgumentError("uniform grid needs a positive length");
        std::vector<double> t(steps + 1);
        for (std::size_t k = 0; k <= steps; ++k)
            t[k] = start + length * static_cast<double>(k) / static_cast<double>(steps);
        t[steps] = start + length;
        return TimeGrid(std::move(t));
    }

    std::size_t size() const noexcept { return times_.size(); }
    std::size_t steps() const noexcept { return times_.empty() ? 0 : times_.size() - 1; }
    double operator[](std::size_t k) const noexcept { return times_[k]; }
    double front() const noexcept { return times_.front(); }
    double back() const noexcept { return times_.back(); }
    double dt(std::size_t k) const noexcept { return times_[k + 1] - times_[k]; }
    const std::vector<double>& times() const noexcept { return times_; }
    auto begin() const noexcept { return times_.begin(); }
    auto end() const noexcept { return times_.end(); }

    /// Largest index k with t_k <= t (0 if t precedes the grid).
    std::size_t floor_index(double t) const noexcept {
        auto it = std::upper_bound(times_.begin(), times_.end(), t);
        if (it == times_.begin()) return 0;
        return static_cast<std::size_t>(it - times_.begin()) - 1;
    }

    friend bool operator==(const TimeGrid&, const TimeGrid&) = default;

private:
    std::vector<double> times_;
};

using GridPtr = std::shared_ptr<const TimeGrid>;

inline GridPtr share(TimeGrid g) { return std::make_shared<const TimeGrid>(std::move(g)); }

/// b(t, x) -> out (m entries).
using VectorField = std::function<void(double, std::span<const double>, std::span<double>)>;
/// sigma(t, x) -> out (m*m entries, row-major).
using MatrixField = std::function<void(double, std::span<const double>, std::span<double>)>;

/// dX = b(t,X) dt + sigma(t,X) dW on [0, horizon], X_0 = x0.
struct DiffusionModel {
    std::string name;
    std::size_t dim = 1;
    VectorField drift;
    MatrixField diffusion;
    /// True when sigma does not depend on the state; selects the exact Gaussian kernel.
    bool state_independent_diffusion = false;
    /// True when neither coefficient depends on time.
    bool time_homogeneous = false;
    /// Claimed ellipticity constant: eps|v|^2 <= v'(sigma sigma')v <= |v|^2/eps.
    double ellipticity = 1.0;
    /// Claimed bound on |b| (or the constant C in |b| <= C(1+|x|) when linear_growth is set).
    double drift_bound = 0.0;
    bool linear_growth = false;
    std::vector<double> x0{0.0};
    double horizon = 1.0;

    void eval_drift(double t, std::span<const double> x, std::span<double> out) const {
        drift(t, x, out);
        check_finite(t, x, out, "drift");
    }

    void eval_diffusion(double t, std::span<const double> x, std::span<double> out) const {
        diffusion(t, x, out);
        check_finite(t, x, out, "diffusion");
    }

    /// (sigma sigma')(t, x), row-major m*m.
    std::vector<double> covariance_rate(double t, std::span<const double> x) const {
        std::vector<double> s(dim * dim), c(dim * dim, 0.0);
        eval_diffusion(t, x, s);
        for (std::size_t i = 0; i < dim; ++i)
            for (std::size_t j = 0; j < dim; ++j) {
                double acc = 0.0;
                for (std::size_t l = 0; l < dim; ++l) acc += s[i * dim + l] * s[j * dim + l];
                c[i * dim + j] = acc;
            }
        return c;
    }

private:
    static void check_finite(double t, std::span<const double> x, std::span<const double> v, const char* what) {
        for (double e : v)
            if (!std::isfinite(e)) {
                std::ostringstream os;
                os << "non-finite " << what << " coefficient at t=" << t << ", x=(";
                for (std::size_t i = 0; i < x.size(); ++i) os << (i ? "," : "") << x[i];
                os << ")";
                throw ModelError(os.str());
            }
    }
};

/// Optional tweaks applied on top of a named preset.
struct ModelOverrides {
    std::optional<std::size_t> dim;
    std::optional<double> sigma;   // scale for "scaled_bm"
    std::optional<double> drift;   // constant drift for "drifted_bm"
    std::optional<double> x0;      // every coordinate of the initial state
    std::optional<double> horizon;
};

inline const std::vector<std::pair<std::string, std::string>>& model_presets() {
    static const std::vector<std::pair<std::string, std::string>> presets{
        {"bm", "standard Brownian motion: b = 0, sigma = I"},
        {"bounded_elliptic", "b = 0, sigma(x) = sqrt(1 + x^2/(1 + x^2)) per coordinate"},
        {"drifted_bm", "b = mu (default 1), sigma = I"},
        {"scaled_bm", "b = 0, sigma = s I (default s = 2)"},
    };
    return presets;
}

inline DiffusionModel make_model(const std::string& preset, const ModelOverrides& ov = {}) {
    DiffusionModel m;
    m.name = preset;
    m.dim = ov.dim.value_or(1);
    if (m.dim < 1) throw ArgumentError("model dimension must be positive");
    m.horizon = ov.horizon.value_or(1.0);
    if (!(m.horizon > 0.0)) throw ArgumentError("model horizon must be positive");
    m.x0.assign(m.dim, ov.x0.value_or(0.0));
    m.time_homogeneous = true;
    const std::size_t d = m.dim;

    auto zero_drift = [](double, std::span<const double>, std::span<double> out) {
        std::fill(out.begin(), out.end(), 0.0);
    };
    auto scaled_identity = [d](double s) {
        return [d, s](double, std::span<const double>, std::span<double> out) {
            std::fill(out.begin(), out.end(), 0.0);
            for (std::size_t i = 0; i < d; ++i) out[i * d + i] = s;
        };
    };

    if (preset == "bm") {
        m.drift = zero_drift;
        m.diffusion = scaled_identity(1.0);
        m.state_independent_diffusion = true;
        m.ellipticity = 1.0;
    } else if (preset == "scaled_bm") {
        const double s = ov.sigma.value_or(2.0);
        if (!(s > 0.0)) throw ArgumentError("scaled_bm needs sigma > 0");
        m.drift = zero_drift;
        m.diffusion = scaled_identity(s);
        m.state_independent_diffusion = true;
        m.ellipticity = std::min(s * s, 1.0 / (s * s));
    } else if (preset == "bounded_elliptic") {
        m.drift = zero_drift;
        m.diffusion = [d](double, std::span<const double> x, std::span<double> out) {
            std::fill(out.begin(), out.end(), 0.0);
            for (std::size_t i = 0; i < d; ++i) {
                const double x2 = x[i] * x[i];
                out[i * d + i] = std::sqrt(1.0 + x2 / (1.0 + x2));
            }
        };
        m.ellipticity = 0.5;
    } else if (preset == "drifted_bm") {
        const double mu = ov.drift.value_or(1.0);
        m.drift = [mu](double, std::span<const double>, std::span<double> out) {
            std::fill(out.begin(), out.end(), mu);
        };
        m.diffusion = scaled_identity(1.0);
        m.state_independent_diffusion = true;
        m.ellipticity = 1.0;
        m.drift_bound = std::abs(mu) * std::sqrt(static_cast<double>(d));
    } else {
        throw ArgumentError("unknown model preset '" + preset + "'");
    }
    return m;
}

// ---------------------------------------------------------------------------
// Assumption checks on a finite probe set

struct ProbePoint {
    double t = 0.0;
    std::vector<double> x;
    std::vector<double> direction;
};

struct ValidationReport {
    bool passed = false;
    bool ellipticity_ok = false;
    bool drift_ok = false;
    /// Largest eps with eps <= q <= 1/eps for every probed Rayleigh quotient q.
    double empirical_epsilon = std::numeric_limits<double>::infinity();
    double max_drift = 0.0;
    std::size_t probes = 0;
    std::string failure;
};

inline ValidationReport validate_model(const DiffusionModel& model, std::span<const ProbePoint> probes) {
    if (probes.empty()) throw ArgumentError("probe grid must be nonempty");
    const std::size_t d = model.dim;
    constexpr double slack = 1e-12;
    ValidationReport rep;
    rep.ellipticity_ok = rep.drift_ok = true;
    rep.probes = probes.size();
    std::vector<double> b(d);
    for (const auto& p : probes) {
        if (p.x.size() != d || p.direction.size() != d) throw ArgumentError("probe dimension does not match model");
        double norm2 = 0.0;
        for (double v : p.direction) norm2 += v * v;
        if (!(norm2 > 0.0)) throw ArgumentError("probe direction must be nonzero");

        const auto cov = model.covariance_rate(p.t, p.x);
        double quad = 0.0;
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j) quad += p.direction[i] * cov[i * d + j] * p.direction[j];
        const double q = quad / norm2;
        rep.empirical_epsilon = std::min(rep.empirical_epsilon, q > 0.0 ? std::min(q, 1.0 / q) : 0.0);
        if (q < model.ellipticity * (1.0 - slack) || q * model.ellipticity > 1.0 + slack) {
            if (rep.ellipticity_ok) {
                std::ostringstream os;
                os << "ellipticity violated at t=" << p.t << " (quotient " << q << ")";
                rep.failure = os.str();
            }
            rep.ellipticity_ok = false;
        }

        model.eval_drift(p.t, p.x, b);
        double bn = 0.0, xn = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            bn += b[i] * b[i];
            xn += p.x[i] * p.x[i];
        }
        bn = std::sqrt(bn);
        rep.max_drift = std::max(rep.max_drift, bn);
        const double bound = model.linear_growth ? model.drift_bound * (1.0 + std::sqrt(xn)) : model.drift_bound;
        if (bn > bound * (1.0 + slack) + slack) {
            if (rep.drift_ok && rep.ellipticity_ok) rep.failure = "drift bound violated at t=" + std::to_string(p.t);
            rep.drift_ok = false;
        }
    }
    rep.passed = rep.ellipticity_ok && rep.drift_ok;
    return rep;
}

/// Tensor probe set: times {0, T/2, T}, `per_axis` states per coordinate in
/// x0 +- radius, and the coordinate axes plus the all-ones vector as directions.
inline std::vector<ProbePoint> default_probe_grid(const DiffusionModel& model, std::size_t per_axis = 9,
                                                  double radius = 4.0) {
    const std::size_t d = model.dim;
    std::vector<std::vector<double>> dirs;
    for (std::size_t i = 0; i < d; ++i) {
        std::vector<double> e(d, 0.0);
        e[i] = 1.0;
        dirs.push_back(std::move(e));
    }
    if (d > 1) dirs.emplace_back(d, 1.0);

    std::vector<std::vector<double>> states;
    std::size_t total = 1;
    for (std::size_t i = 0; i < d; ++i) total *= per_axis;
    for (std::size_t idx = 0; idx < total; ++idx) {
        std::vector<double> x(d);
        std::size_t rem = idx;
        for (std::size_t i = 0; i < d; ++i) {
            const std::size_t k = rem % per_axis;
            rem /= per_axis;
            const double frac = per_axis > 1 ? static_cast<double>(k) / static_cast<double>(per_axis - 1) : 0.5;
            x[i] = model.x0[i] - radius + 2.0 * radius * frac;
        }
        states.push_back(std::move(x));
    }

    std::vector<ProbePoint> probes;
    for (double t : {0.0, 0.5 * model.horizon, model.horizon})
        for (const auto& x : states)
            for (const auto& v : dirs) probes.push_back({t, x, v});
    return probes;
}

}  // namespace smlab
