#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "smlab/error.hpp"
#include "smlab/parallel.hpp"
#include "smlab/path_analysis.hpp"
#include "smlab/simulate.hpp"
#include "smlab/smoothing.hpp"
#include "smlab/transform.hpp"

namespace smlab {

enum class GradientSource {
    smoothed,  // gradient of the n-th smoothed transform
    exact,     // analytic f_x (C^{1,2} transforms only)
};

/// f(t, X_t) = f(0, X_0) + M_t + A_t along one path, with A the residual.
struct Decomposition {
    SamplePath martingale;
    SamplePath finite_variation;
    std::vector<double> gradients;  // (K+1) * m, gradient at each grid point
    double smoothing_index = 0.0;
    GradientSource source = GradientSource::smoothed;
};

struct DecomposeOptions {
    GradientSource source = GradientSource::smoothed;
    SmoothingOptions smoothing{};
    bool keep_gradients = true;
};

inline Decomposition decompose_path(const TransformSpec& f, const SmoothedTransform& fn, const SamplePath& path,
                                    const DecomposeOptions& opt) {
    const std::size_t d = path.dim;
    const std::size_t n = path.size();
    std::vector<double> g(n * d);
    for (std::size_t k = 0; k < n; ++k) {
        std::span<double> out(g.data() + k * d, d);
        if (opt.source == GradientSource::exact)
            f.gradient(path.time(k), path.state(k), out);
        else
            fn.gradient(path.time(k), path.state(k), out);
    }
    Decomposition dec;
    dec.smoothing_index = fn.index();
    dec.source = opt.source;
    dec.martingale = ito_integral(g, path);
    std::vector<double> a(n);
    const double f0 = f(path.time(0), path.state(0));
    for (std::size_t k = 0; k < n; ++k) a[k] = (f(path.time(k), path.state(k)) - f0) - dec.martingale.values[k];
    dec.finite_variation = scalar_path(path.grid, std::move(a));
    if (opt.keep_gradients) dec.gradients = std::move(g);
    return dec;
}

/// Per-path decomposition with M the left-point Ito integral of the gradient
/// samples and A := f(t,X_t) - f(0,X_0) - M.
inline std::vector<Decomposition> decompose(const TransformSpec& f, const PathEnsemble& ensemble,
                                            const DiffusionModel& model, double n, const DecomposeOptions& opt = {}) {
    if (opt.source == GradientSource::exact && !(f.is_c12() && f.gradient))
        throw UnsupportedError("exact-gradient decomposition needs a C^{1,2} transform with an analytic gradient");
    const SmoothedTransform fn(f, transition_kernel(model), n, opt.smoothing);
    std::vector<Decomposition> out(ensemble.size());
    parallel_for(ensemble.size(), [&](std::size_t i) { out[i] = decompose_path(f, fn, ensemble[i], opt); });
    return out;
}

/// A^n_t = int_0^t (L fn)(s, X_s) ds as a left-point running sum.
inline SamplePath compensator(const SmoothedTransform& fn, const SamplePath& path) {
    std::vector<double> a(path.size(), 0.0);
    for (std::size_t k = 0; k + 1 < path.size(); ++k)
        a[k + 1] = a[k] + fn.L(path.time(k), path.state(k)) * path.grid->dt(k);
    return scalar_path(path.grid, std::move(a));
}

/// Total variation of A^n on the grid: sum_k |L fn(t_k, X_k)| dt_k.
inline double compensator_variation(const SmoothedTransform& fn, const SamplePath& path) {
    double v = 0.0;
    for (std::size_t k = 0; k + 1 < path.size(); ++k) v += std::abs(fn.L(path.time(k), path.state(k))) * path.grid->dt(k);
    return v;
}

inline void check_ladder(std::span<const double> n_list, std::size_t min_levels = 4) {
    if (n_list.size() < min_levels)
        throw ArgumentError("smoothing ladder needs at least " + std::to_string(min_levels) + " levels");
    for (std::size_t i = 0; i < n_list.size(); ++i) {
        if (!(n_list[i] >= 1.0)) throw ArgumentError("smoothing indices must be at least 1");
        if (i > 0 && !(n_list[i] > n_list[i - 1])) throw ArgumentError("smoothing indices must be strictly increasing");
    }
}

/// Ensemble mean (and standard error) of Var(A^n)_T for each n in the ladder.
inline VariationProfile variation_ladder(const TransformSpec& f, const PathEnsemble& ensemble,
                                         const DiffusionModel& model, std::span<const double> n_list,
                                         SmoothingOptions opt = {}) {
    check_ladder(n_list);
    const auto kernel = transition_kernel(model);
    VariationProfile prof;
    std::vector<double> per_path(ensemble.size());
    for (double n : n_list) {
        const SmoothedTransform fn(f, kernel, n, opt);
        parallel_for(ensemble.size(), [&](std::size_t i) { per_path[i] = compensator_variation(fn, ensemble[i]); });
        const auto est = mean_and_error(per_path);
        prof.levels.push_back(n);
        prof.estimates.push_back(est.mean);
        prof.standard_errors.push_back(est.standard_error);
    }
    return prof;
}

struct TestFunction {
    std::string id;
    ScalarField psi;
};

struct MeasureEstimate {
    struct Entry {
        std::string id;
        double estimate = 0.0;
        double standard_error = 0.0;
    };
    std::vector<Entry> entries;
    double smoothing_index = 0.0;
};

/// Monte Carlo estimate of E int_0^T psi(s, X_s) dA^n_s for each test function,
/// the n-th approximation of the pairing of psi with the measure nu_f.
inline MeasureEstimate measure_nu(const TransformSpec& f, const PathEnsemble& ensemble, const DiffusionModel& model,
                                  double n, const std::vector<TestFunction>& test_functions,
                                  SmoothingOptions opt = {}) {
    const SmoothedTransform fn(f, transition_kernel(model), n, opt);
    const std::size_t P = ensemble.size(), J = test_functions.size();
    std::vector<double> sums(P * J, 0.0);
    parallel_for(P, [&](std::size_t p) {
        const auto& path = ensemble[p];
        for (std::size_t k = 0; k + 1 < path.size(); ++k) {
            const double t = path.time(k);
            const auto x = path.state(k);
            const double da = fn.L(t, x) * path.grid->dt(k);
            for (std::size_t j = 0; j < J; ++j) sums[p * J + j] += test_functions[j].psi(t, x) * da;
        }
    });
    MeasureEstimate est;
    est.smoothing_index = n;
    std::vector<double> col(P);
    for (std::size_t j = 0; j < J; ++j) {
        for (std::size_t p = 0; p < P; ++p) col[p] = sums[p * J + j];
        const auto me = mean_and_error(col);
        est.entries.push_back({test_functions[j].id, me.mean, me.standard_error});
    }
    return est;
}

}  // namespace smlab
