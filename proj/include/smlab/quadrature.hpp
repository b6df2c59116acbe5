#pragma once

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <vector>

#include "smlab/error.hpp"

namespace smlab {

/// Nodes and weights with sum(w) = 1 for the measure they integrate against.
struct QuadratureRule {
    std::vector<double> nodes;
    std::vector<double> weights;
    std::size_t size() const noexcept { return nodes.size(); }
};

namespace detail {

// Physicists' Gauss-Hermite by Newton iteration on the orthonormal recurrence
// (the classic gauher scheme), then mapped to the standard normal measure.
inline QuadratureRule build_gauss_hermite(int n) {
    const double pim4 = 1.0 / std::pow(std::numbers::pi, 0.25);
    std::vector<double> x(n), w(n);
    const int m = (n + 1) / 2;
    double z = 0.0;
    for (int i = 0; i < m; ++i) {
        if (i == 0)
            z = std::sqrt(2.0 * n + 1.0) - 1.85575 * std::pow(2.0 * n + 1.0, -0.16667);
        else if (i == 1)
            z -= 1.14 * std::pow(static_cast<double>(n), 0.426) / z;
        else if (i == 2)
            z = 1.86 * z - 0.86 * x[0];
        else if (i == 3)
            z = 1.91 * z - 0.91 * x[1];
        else
            z = 2.0 * z - x[i - 2];
        double pp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p1 = pim4, p2 = 0.0;
            for (int j = 0; j < n; ++j) {
                const double p3 = p2;
                p2 = p1;
                p1 = z * std::sqrt(2.0 / (j + 1)) * p2 - std::sqrt(static_cast<double>(j) / (j + 1)) * p3;
            }
            pp = std::sqrt(2.0 * n) * p2;
            const double z1 = z;
            z = z1 - p1 / pp;
            if (std::abs(z - z1) <= 1e-15 * std::max(1.0, std::abs(z))) break;
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = w[n - 1 - i] = 2.0 / (pp * pp);
    }
    QuadratureRule r;
    r.nodes.resize(n);
    r.weights.resize(n);
    const double norm = 1.0 / std::sqrt(std::numbers::pi);
    for (int i = 0; i < n; ++i) {
        // ascending order
        r.nodes[i] = std::numbers::sqrt2 * x[n - 1 - i];
        r.weights[i] = w[n - 1 - i] * norm;
    }
    if (n % 2 == 1) r.nodes[n / 2] = 0.0;
    return r;
}

inline QuadratureRule build_gauss_legendre(int n) {
    std::vector<double> x(n), w(n);
    const int m = (n + 1) / 2;
    for (int i = 0; i < m; ++i) {
        double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double pp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p1 = 1.0, p2 = 0.0;
            for (int j = 0; j < n; ++j) {
                const double p3 = p2;
                p2 = p1;
                p1 = ((2.0 * j + 1.0) * z * p2 - j * p3) / (j + 1);
            }
            pp = n * (z * p1 - p2) / (z * z - 1.0);
            const double z1 = z;
            z = z1 - p1 / pp;
            if (std::abs(z - z1) <= 1e-16) break;
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = w[n - 1 - i] = 2.0 / ((1.0 - z * z) * pp * pp);
    }
    // map [-1,1] -> [0,1], weights summing to 1
    QuadratureRule r;
    r.nodes.resize(n);
    r.weights.resize(n);
    for (int i = 0; i < n; ++i) {
        r.nodes[i] = 0.5 * (x[i] + 1.0);
        r.weights[i] = 0.5 * w[i];
    }
    if (n % 2 == 1) r.nodes[n / 2] = 0.5;
    return r;
}

template <QuadratureRule (*Build)(int)>
const QuadratureRule& cached_rule(int order) {
    static std::mutex mutex;
    static std::map<int, std::unique_ptr<const QuadratureRule>> cache;
    std::lock_guard lock(mutex);
    auto& slot = cache[order];
    if (!slot) slot = std::make_unique<const QuadratureRule>(Build(order));
    return *slot;
}

}  // namespace detail

/// E[g(Z)], Z ~ N(0,1), is approximated by sum_i w_i g(nodes_i); exact for
/// polynomials of degree < 2*order.
inline const QuadratureRule& gauss_hermite(int order) {
    if (order < 1) throw ArgumentError("quadrature order must be at least 1");
    return detail::cached_rule<detail::build_gauss_hermite>(order);
}

/// Gauss-Legendre rule on [0, 1] with weights summing to 1.
inline const QuadratureRule& gauss_legendre(int order) {
    if (order < 1) throw ArgumentError("quadrature order must be at least 1");
    return detail::cached_rule<detail::build_gauss_legendre>(order);
}

}  // namespace smlab
