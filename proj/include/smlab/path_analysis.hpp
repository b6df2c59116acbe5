#pragma once

#include <cmath>
#include <ostream>
#include <span>
#include <vector>

#include "smlab/error.hpp"
#include "smlab/simulate.hpp"

namespace smlab {

/// Running sum of squared increments of one coordinate.
inline SamplePath quadratic_variation(const SamplePath& path, std::size_t coordinate) {
    if (path.size() < 2) throw ArgumentError("quadratic variation needs at least two points");
    if (coordinate >= path.dim) throw ArgumentError("coordinate out of range");
    std::vector<double> qv(path.size(), 0.0);
    for (std::size_t k = 0; k + 1 < path.size(); ++k) {
        const double d = path.value(k + 1, coordinate) - path.value(k, coordinate);
        qv[k + 1] = qv[k] + d * d;
    }
    return scalar_path(path.grid, std::move(qv));
}

/// Running sum of squared increments summed over coordinates (trace of the bracket).
inline SamplePath quadratic_variation(const SamplePath& path) {
    if (path.dim == 1) return quadratic_variation(path, 0);
    if (path.size() < 2) throw ArgumentError("quadratic variation needs at least two points");
    std::vector<double> qv(path.size(), 0.0);
    for (std::size_t k = 0; k + 1 < path.size(); ++k) {
        double s = 0.0;
        for (std::size_t i = 0; i < path.dim; ++i) {
            const double d = path.value(k + 1, i) - path.value(k, i);
            s += d * d;
        }
        qv[k + 1] = qv[k] + s;
    }
    return scalar_path(path.grid, std::move(qv));
}

/// Running mesh-level total variation, sum of |X_{k+1} - X_k| (Euclidean norm for m > 1).
inline SamplePath running_total_variation(const SamplePath& path) {
    if (path.size() < 2) throw ArgumentError("total variation needs at least two points");
    std::vector<double> tv(path.size(), 0.0);
    for (std::size_t k = 0; k + 1 < path.size(); ++k) {
        double s = 0.0;
        for (std::size_t i = 0; i < path.dim; ++i) {
            const double d = path.value(k + 1, i) - path.value(k, i);
            s += d * d;
        }
        tv[k + 1] = tv[k] + (path.dim == 1 ? std::abs(path.value(k + 1) - path.value(k)) : std::sqrt(s));
    }
    return scalar_path(path.grid, std::move(tv));
}

inline double total_variation(const SamplePath& path) { return running_total_variation(path).values.back(); }

inline double total_variation(std::span<const double> values) {
    if (values.size() < 2) throw ArgumentError("total variation needs at least two points");
    double tv = 0.0;
    for (std::size_t k = 0; k + 1 < values.size(); ++k) tv += std::abs(values[k + 1] - values[k]);
    return tv;
}

/// Left-point Ito sums I_k = sum_{j<k} g_j . (X_{j+1} - X_j).
///
/// `integrand` holds m values per grid point (the value at the final point is
/// ignored, so K*m entries are also accepted). The sum is evaluated in
/// summation-by-parts form g_{k-1} X_k - g_0 X_0 - sum_{0<j<k} (g_j - g_{j-1}) X_j,
/// which equals the Riemann-Ito sum and keeps constant integrands exact:
/// for g = 1 the result is the single rounding of X_k - X_0.
inline SamplePath ito_integral(std::span<const double> integrand, const SamplePath& driver) {
    const std::size_t d = driver.dim;
    const std::size_t K = driver.steps();
    if (integrand.size() != (K + 1) * d && integrand.size() != K * d)
        throw ArgumentError("integrand is not sampled on the driver's grid");
    std::vector<double> out(K + 1, 0.0);
    for (std::size_t i = 0; i < d; ++i) {
        double by_parts = 0.0;  // sum_{0<j<k} (g_j - g_{j-1}) X_j
        const double head = integrand[i] * driver.value(0, i);
        for (std::size_t k = 1; k <= K; ++k) {
            if (k >= 2) {
                const std::size_t j = k - 1;
                by_parts += (integrand[j * d + i] - integrand[(j - 1) * d + i]) * driver.value(j, i);
            }
            out[k] += integrand[(k - 1) * d + i] * driver.value(k, i) - head - by_parts;
        }
    }
    return scalar_path(driver.grid, std::move(out));
}

/// Overload with the integrand given as a path; grids must coincide.
inline SamplePath ito_integral(const SamplePath& integrand, const SamplePath& driver) {
    if (integrand.grid != driver.grid && !(integrand.grid && driver.grid && *integrand.grid == *driver.grid))
        throw ArgumentError("integrand and driver grids differ");
    if (integrand.dim != driver.dim) throw ArgumentError("integrand and driver dimensions differ");
    return ito_integral(integrand.values, driver);
}

/// Occupation-time estimate (1/2eps) sum_k 1{|X_k - a| < eps} dt_k of the local
/// time at level a (first coordinate), left-point in time.
inline SamplePath local_time_oracle(const SamplePath& path, double level, double eps) {
    if (!(eps > 0.0)) throw ArgumentError("local time bandwidth must be positive");
    const double scale = 0.5 / eps;
    std::vector<double> lt(path.size(), 0.0);
    for (std::size_t k = 0; k + 1 < path.size(); ++k) {
        const bool inside = std::abs(path.value(k, 0) - level) < eps;
        lt[k + 1] = lt[k] + (inside ? scale * path.grid->dt(k) : 0.0);
    }
    return scalar_path(path.grid, std::move(lt));
}

/// Ensemble-averaged total variation of A^n over a smoothing ladder.
struct VariationProfile {
    std::vector<double> levels;
    std::vector<double> estimates;
    std::vector<double> standard_errors;
    std::size_t size() const noexcept { return levels.size(); }
};

/// Mean and standard error of the mean.
struct MeanEstimate {
    double mean = 0.0;
    double standard_error = 0.0;
};

inline MeanEstimate mean_and_error(std::span<const double> xs) {
    MeanEstimate r;
    if (xs.empty()) return r;
    // Welford
    double mean = 0.0, m2 = 0.0;
    std::size_t n = 0;
    for (double x : xs) {
        ++n;
        const double delta = x - mean;
        mean += delta / static_cast<double>(n);
        m2 += delta * (x - mean);
    }
    r.mean = mean;
    r.standard_error = n > 1 ? std::sqrt(m2 / static_cast<double>(n - 1) / static_cast<double>(n)) : 0.0;
    return r;
}

/// CSV with columns path_id,t,qv,tv_running,local_time (first coordinate).
inline void write_path_stats_csv(std::ostream& os, const PathEnsemble& ens, double level = 0.0, double eps = 0.01) {
    os << "path_id,t,qv,tv_running,local_time\n";
    const auto old = os.precision(17);
    for (std::size_t p = 0; p < ens.size(); ++p) {
        const auto& path = ens.paths[p];
        const auto qv = quadratic_variation(path, 0);
        SamplePath first = scalar_path(path.grid, path.coordinate(0));
        const auto tv = running_total_variation(first);
        const auto lt = local_time_oracle(path, level, eps);
        for (std::size_t k = 0; k < path.size(); ++k)
            os << ens.substreams[p] << ',' << path.time(k) << ',' << qv.values[k] << ',' << tv.values[k] << ','
               << lt.values[k] << '\n';
    }
    os.precision(old);
}

}  // namespace smlab
