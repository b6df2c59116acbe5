#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "smlab/error.hpp"
#include "smlab/model.hpp"

namespace smlab {

using ScalarField = std::function<double(double, std::span<const double>)>;

enum class Smoothness { c12, continuous_only };

/// A time-space function f(t, x) and whatever derivatives are known for it.
struct TransformSpec {
    std::string name;
    ScalarField f;
    ScalarField time_derivative;  // f_t, may be empty
    VectorField gradient;         // f_x, may be empty
    MatrixField hessian;          // f_xx row-major, may be empty
    Smoothness smoothness = Smoothness::continuous_only;
    bool bounded = false;

    double operator()(double t, std::span<const double> x) const { return f(t, x); }
    bool is_c12() const noexcept { return smoothness == Smoothness::c12; }
    bool has_analytic_derivatives() const noexcept {
        return static_cast<bool>(time_derivative) && static_cast<bool>(gradient) && static_cast<bool>(hessian);
    }
};

namespace detail {

inline TransformSpec scalar_transform(std::string name, std::function<double(double, double)> f,
                                      std::function<double(double, double)> ft,
                                      std::function<double(double, double)> fx,
                                      std::function<double(double, double)> fxx, Smoothness smooth) {
    TransformSpec s;
    s.name = std::move(name);
    s.smoothness = smooth;
    s.f = [f](double t, std::span<const double> x) { return f(t, x[0]); };
    if (ft) s.time_derivative = [ft](double t, std::span<const double> x) { return ft(t, x[0]); };
    if (fx)
        s.gradient = [fx](double t, std::span<const double> x, std::span<double> out) {
            std::fill(out.begin(), out.end(), 0.0);
            out[0] = fx(t, x[0]);
        };
    if (fxx)
        s.hessian = [fxx](double t, std::span<const double> x, std::span<double> out) {
            std::fill(out.begin(), out.end(), 0.0);
            out[0] = fxx(t, x[0]);
        };
    return s;
}

}  // namespace detail

inline const std::vector<std::pair<std::string, std::string>>& transform_presets() {
    static const std::vector<std::pair<std::string, std::string>> presets{
        {"abs", "|x| (continuous, kink at 0)"},
        {"linear", "x"},
        {"pow:<alpha>", "|x|^alpha for alpha in (0, 1]"},
        {"sqrt_abs", "|x|^(1/2)"},
        {"square", "x^2"},
        {"t_plus_sin", "t + sin x"},
    };
    return presets;
}

/// Named transform acting on the first state coordinate.
inline TransformSpec make_transform(const std::string& preset) {
    using detail::scalar_transform;
    if (preset == "linear")
        return scalar_transform(
            preset, [](double, double x) { return x; }, [](double, double) { return 0.0; },
            [](double, double) { return 1.0; }, [](double, double) { return 0.0; }, Smoothness::c12);
    if (preset == "square")
        return scalar_transform(
            preset, [](double, double x) { return x * x; }, [](double, double) { return 0.0; },
            [](double, double x) { return 2.0 * x; }, [](double, double) { return 2.0; }, Smoothness::c12);
    if (preset == "t_plus_sin")
        return scalar_transform(
            preset, [](double t, double x) { return t + std::sin(x); }, [](double, double) { return 1.0; },
            [](double, double x) { return std::cos(x); }, [](double, double x) { return -std::sin(x); },
            Smoothness::c12);
    if (preset == "abs")
        return scalar_transform(
            preset, [](double, double x) { return std::abs(x); }, {}, {}, {}, Smoothness::continuous_only);

    double alpha = 0.0;
    if (preset == "sqrt_abs") {
        alpha = 0.5;
    } else if (preset.rfind("pow:", 0) == 0) {
        try {
            std::size_t used = 0;
            alpha = std::stod(preset.substr(4), &used);
            if (used != preset.size() - 4) throw std::invalid_argument("trailing characters");
        } catch (const std::exception&) {
            throw ArgumentError("malformed exponent in transform preset '" + preset + "'");
        }
        if (!(alpha > 0.0 && alpha <= 1.0)) throw ArgumentError("pow:<alpha> needs alpha in (0, 1]");
    } else {
        throw ArgumentError("unknown transform preset '" + preset + "'");
    }
    return scalar_transform(
        preset, [alpha](double, double x) { return std::pow(std::abs(x), alpha); }, {}, {}, {},
        Smoothness::continuous_only);
}

/// c * f with derivatives scaled accordingly.
inline TransformSpec scaled(const TransformSpec& base, double c) {
    TransformSpec s = base;
    s.name = std::to_string(c) + "*" + base.name;
    s.f = [f = base.f, c](double t, std::span<const double> x) { return c * f(t, x); };
    if (base.time_derivative)
        s.time_derivative = [g = base.time_derivative, c](double t, std::span<const double> x) { return c * g(t, x); };
    auto scale_field = [c](VectorField g) -> VectorField {
        if (!g) return {};
        return [g, c](double t, std::span<const double> x, std::span<double> out) {
            g(t, x, out);
            for (double& v : out) v *= c;
        };
    };
    s.gradient = scale_field(base.gradient);
    s.hessian = scale_field(base.hessian);
    return s;
}

// ---------------------------------------------------------------------------
// Finite-difference derivatives

namespace detail {
inline double fd_step(double x) { return 1e-4 * std::max(1.0, std::abs(x)); }
}  // namespace detail

inline double fd_time_derivative(const TransformSpec& s, double t, std::span<const double> x) {
    const double h = detail::fd_step(t);
    return (s.f(t + h, x) - s.f(t - h, x)) / (2.0 * h);
}

inline std::vector<double> fd_gradient(const TransformSpec& s, double t, std::span<const double> x) {
    std::vector<double> y(x.begin(), x.end()), g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double h = detail::fd_step(x[i]);
        y[i] = x[i] + h;
        const double up = s.f(t, y);
        y[i] = x[i] - h;
        const double dn = s.f(t, y);
        y[i] = x[i];
        g[i] = (up - dn) / (2.0 * h);
    }
    return g;
}

inline std::vector<double> fd_hessian(const TransformSpec& s, double t, std::span<const double> x) {
    const std::size_t d = x.size();
    std::vector<double> y(x.begin(), x.end()), H(d * d);
    const double f0 = s.f(t, x);
    for (std::size_t i = 0; i < d; ++i) {
        const double hi = detail::fd_step(x[i]);
        y[i] = x[i] + hi;
        const double up = s.f(t, y);
        y[i] = x[i] - hi;
        const double dn = s.f(t, y);
        y[i] = x[i];
        H[i * d + i] = (up - 2.0 * f0 + dn) / (hi * hi);
        for (std::size_t j = i + 1; j < d; ++j) {
            const double hj = detail::fd_step(x[j]);
            double acc = 0.0;
            for (int si : {1, -1})
                for (int sj : {1, -1}) {
                    y[i] = x[i] + si * hi;
                    y[j] = x[j] + sj * hj;
                    acc += si * sj * s.f(t, y);
                }
            y[i] = x[i];
            y[j] = x[j];
            H[i * d + j] = H[j * d + i] = acc / (4.0 * hi * hj);
        }
    }
    return H;
}

/// Largest relative mismatch between the supplied derivatives and central
/// differences over the probe points (relative to max(1, |analytic|)).
inline double derivative_mismatch(const TransformSpec& s, std::span<const ProbePoint> probes) {
    if (!s.has_analytic_derivatives()) throw UnsupportedError("transform '" + s.name + "' has no analytic derivatives");
    double worst = 0.0;
    auto rel = [](double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(a)); };
    for (const auto& p : probes) {
        const std::size_t d = p.x.size();
        worst = std::max(worst, rel(s.time_derivative(p.t, p.x), fd_time_derivative(s, p.t, p.x)));
        std::vector<double> g(d), H(d * d);
        s.gradient(p.t, p.x, g);
        s.hessian(p.t, p.x, H);
        const auto gf = fd_gradient(s, p.t, p.x);
        const auto Hf = fd_hessian(s, p.t, p.x);
        for (std::size_t i = 0; i < d; ++i) worst = std::max(worst, rel(g[i], gf[i]));
        for (std::size_t i = 0; i < d * d; ++i) worst = std::max(worst, rel(H[i], Hf[i]));
    }
    return worst;
}

/// (Lf)(t,x) = f_t + 1/2 sum_ij (sigma sigma')_ij f_{x_i x_j}. The drift is not
/// part of L; it belongs to the reference process dZ = sigma dW.
inline double apply_L(const TransformSpec& s, const DiffusionModel& model, double t, std::span<const double> x) {
    if (!s.is_c12()) throw UnsupportedError("L is only defined for C^{1,2} transforms ('" + s.name + "' is not)");
    const std::size_t d = model.dim;
    const double ft = s.time_derivative ? s.time_derivative(t, x) : fd_time_derivative(s, t, x);
    std::vector<double> H(d * d);
    if (s.hessian)
        s.hessian(t, x, H);
    else
        H = fd_hessian(s, t, x);
    const auto c = model.covariance_rate(t, x);
    double acc = 0.0;
    for (std::size_t i = 0; i < d * d; ++i) acc += c[i] * H[i];
    return ft + 0.5 * acc;
}

}  // namespace smlab
