#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "smlab/error.hpp"
#include "smlab/kernel.hpp"
#include "smlab/quadrature.hpp"
#include "smlab/transform.hpp"

namespace smlab {

struct SmoothingOptions {
    /// Gauss-Hermite order per state coordinate.
    int space_order = 48;
    /// Gauss-Legendre points for the time average inside the smoothed value and gradient.
    int time_points = 3;
};

/// The kernel-smoothed transform
///
///     fn(s, x) = n * int_s^{s+1/n} E f(u, Z_u) du,   Z ~ kernel(s, x, .),
///
/// its spatial gradient (differentiating the Gaussian density) and
///
///     (L fn)(s, x) = n * (E f(s + 1/n, Z_{s+1/n}) - f(s, x)).
///
/// f is frozen at the model horizon for times past it. Evaluation is const and
/// thread-safe.
class SmoothedTransform {
public:
    SmoothedTransform(TransformSpec f, TransitionKernel kernel, double n, SmoothingOptions opt = {})
        : f_(std::move(f)), kernel_(std::move(kernel)), n_(n), opt_(opt) {
        if (!(n >= 1.0)) throw ArgumentError("smoothing index must be at least 1");
        if (opt_.time_points < 1) throw ArgumentError("time quadrature needs at least one point");
        gh_ = &gauss_hermite(opt_.space_order);
        gl_ = &gauss_legendre(opt_.time_points);
        horizon_ = kernel_.model().horizon;
    }

    double index() const noexcept { return n_; }
    const SmoothingOptions& options() const noexcept { return opt_; }
    const TransformSpec& transform() const noexcept { return f_; }
    const TransitionKernel& kernel() const noexcept { return kernel_; }

    double f(double t, std::span<const double> x) const { return f_.f(std::min(t, horizon_), x); }

    double value(double s, std::span<const double> x) const {
        double acc = 0.0;
        for (std::size_t q = 0; q < gl_->size(); ++q) {
            const double u = s + gl_->nodes[q] / n_;
            acc += gl_->weights[q] * expectation(s, x, u, [&](std::span<const double> y) { return f(u, y); });
        }
        return acc;
    }

    /// d/dx of value(s, x), written into out (m entries).
    void gradient(double s, std::span<const double> x, std::span<double> out) const {
        const std::size_t d = x.size();
        std::fill(out.begin(), out.end(), 0.0);
        if (d == 1) {
            double acc = 0.0;
            for (std::size_t q = 0; q < gl_->size(); ++q) {
                const double u = s + gl_->nodes[q] / n_;
                const double sd = std::sqrt(kernel_.variance_1d(s, x, u));
                const double ref = f(u, x);
                double e = 0.0;
                double y = 0.0;
                const std::span<const double> ys(&y, 1);
                for (std::size_t i = 0; i < gh_->size(); ++i) {
                    y = x[0] + sd * gh_->nodes[i];
                    e += gh_->weights[i] * (f(u, ys) - ref) * gh_->nodes[i];
                }
                acc += gl_->weights[q] * e / sd;
            }
            out[0] = acc;
            return;
        }
        std::vector<double> tmp(d);
        for (std::size_t q = 0; q < gl_->size(); ++q) {
            const double u = s + gl_->nodes[q] / n_;
            const auto fac = kernel_.factor(s, x, u);
            const double ref = f(u, x);
            std::fill(tmp.begin(), tmp.end(), 0.0);
            for_each_gaussian_node(x, fac, opt_.space_order,
                                   [&](std::span<const double> y, std::span<const double> z, double w) {
                                       const double fy = w * (f(u, y) - ref);
                                       for (std::size_t i = 0; i < d; ++i) tmp[i] += fy * z[i];
                                   });
            for (std::size_t i = 0; i < d; ++i) {
                double g = 0.0;
                for (std::size_t l = 0; l < d; ++l) g += fac.whitening(i, l) * tmp[l];
                out[i] += gl_->weights[q] * g;
            }
        }
    }

    std::vector<double> gradient(double s, std::span<const double> x) const {
        std::vector<double> g(x.size());
        gradient(s, x, g);
        return g;
    }

    double L(double s, std::span<const double> x) const {
        const double u = s + 1.0 / n_;
        const double e = expectation(s, x, u, [&](std::span<const double> y) { return f(u, y); });
        return n_ * (e - f(s, x));
    }

private:
    template <class G>
    double expectation(double s, std::span<const double> x, double u, G&& g) const {
        if (x.size() == 1) {
            const double sd = std::sqrt(kernel_.variance_1d(s, x, u));
            double y = 0.0;
            const std::span<const double> ys(&y, 1);
            double acc = 0.0;
            for (std::size_t i = 0; i < gh_->size(); ++i) {
                y = x[0] + sd * gh_->nodes[i];
                acc += gh_->weights[i] * g(ys);
            }
            return acc;
        }
        return kernel_expectation(kernel_, g, s, x, u, opt_.space_order);
    }

    TransformSpec f_;
    TransitionKernel kernel_;
    double n_;
    SmoothingOptions opt_;
    const QuadratureRule* gh_ = nullptr;
    const QuadratureRule* gl_ = nullptr;
    double horizon_ = 1.0;
};

inline SmoothedTransform smooth(const TransformSpec& f, const TransitionKernel& kernel, double n,
                                int time_quad_points = 3, int space_order = 48) {
    return SmoothedTransform(f, kernel, n, SmoothingOptions{space_order, time_quad_points});
}

/// Axis-aligned region in (time, state).
struct Box {
    double t_lo = 0.0, t_hi = 1.0;
    std::vector<double> x_lo{-1.0}, x_hi{1.0};
};

/// Gradient of the smoothed transform sampled at cell midpoints of `region`.
struct GradientField {
    std::size_t dim = 1;
    std::vector<double> times;
    std::vector<double> states;     // points * dim
    std::vector<double> gradients;  // points * dim
    double cell_volume = 0.0;
    std::size_t size() const noexcept { return times.size(); }
};

/// Samples the smoothed gradient on a midpoint grid with `grid_density` cells
/// per axis. Converges to the generalized gradient in L2(mu) as n grows; the
/// convergence itself is not checked here.
inline GradientField estimate_generalized_gradient(const TransformSpec& f, const TransitionKernel& kernel, double n,
                                                   const Box& region, std::size_t grid_density,
                                                   SmoothingOptions opt = {}) {
    const std::size_t d = kernel.dim();
    if (region.x_lo.size() != d || region.x_hi.size() != d) throw ArgumentError("region dimension mismatch");
    if (!(region.t_hi > region.t_lo)) throw ArgumentError("region must have positive time extent");
    if (grid_density < 1) throw ArgumentError("grid density must be positive");
    const SmoothedTransform fn(f, kernel, n, opt);
    GradientField field;
    field.dim = d;
    const double dt = (region.t_hi - region.t_lo) / static_cast<double>(grid_density);
    field.cell_volume = dt;
    std::vector<double> dx(d);
    for (std::size_t i = 0; i < d; ++i) {
        if (!(region.x_hi[i] > region.x_lo[i])) throw ArgumentError("region must have positive extent");
        dx[i] = (region.x_hi[i] - region.x_lo[i]) / static_cast<double>(grid_density);
        field.cell_volume *= dx[i];
    }
    std::size_t per_time = 1;
    for (std::size_t i = 0; i < d; ++i) per_time *= grid_density;
    std::vector<double> x(d), g(d);
    for (std::size_t it = 0; it < grid_density; ++it) {
        const double s = region.t_lo + (static_cast<double>(it) + 0.5) * dt;
        for (std::size_t idx = 0; idx < per_time; ++idx) {
            std::size_t rem = idx;
            for (std::size_t i = 0; i < d; ++i) {
                x[i] = region.x_lo[i] + (static_cast<double>(rem % grid_density) + 0.5) * dx[i];
                rem /= grid_density;
            }
            fn.gradient(s, x, g);
            field.times.push_back(s);
            field.states.insert(field.states.end(), x.begin(), x.end());
            field.gradients.insert(field.gradients.end(), g.begin(), g.end());
        }
    }
    return field;
}

/// Root-mean-square distance under mu(ds,dy) = p(s,y) ds dy, normalized by the
/// mu-mass of the included cells:
///     sqrt( sum |g - target|^2 p dV / sum p dV ).
/// `include(s, x)` masks cells out of the comparison.
template <class Target, class Include>
double l2_mu_distance(const GradientField& field, const TransitionKernel& kernel, Target&& target, Include&& include) {
    const std::size_t d = field.dim;
    double num = 0.0, mass = 0.0;
    std::vector<double> ref(d);
    for (std::size_t k = 0; k < field.size(); ++k) {
        const std::span<const double> x(field.states.data() + k * d, d);
        if (!include(field.times[k], x)) continue;
        target(field.times[k], x, std::span<double>(ref));
        const double w = kernel.reference_density(field.times[k], x) * field.cell_volume;
        double e2 = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            const double e = field.gradients[k * d + i] - ref[i];
            e2 += e * e;
        }
        num += w * e2;
        mass += w;
    }
    if (!(mass > 0.0)) throw ArgumentError("no mu-mass in the compared region");
    return std::sqrt(num / mass);
}

}  // namespace smlab
