#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>

#include "smlab/error.hpp"
#include "smlab/path_analysis.hpp"

namespace smlab {

enum class Classification { semimartingale, not_semimartingale, inconclusive };

inline const char* to_string(Classification c) {
    switch (c) {
        case Classification::semimartingale: return "Semimartingale";
        case Classification::not_semimartingale: return "NotSemimartingale";
        default: return "Inconclusive";
    }
}

struct VerdictThresholds {
    double flat_slope = 0.05;
    double growth_slope = 0.15;
    std::size_t min_levels = 4;
};

struct Verdict {
    Classification classification = Classification::inconclusive;
    VariationProfile profile;
    double slope = 0.0;
    VerdictThresholds thresholds;
};

/// Estimates at or below this are treated as exactly zero variation.
inline constexpr double variation_floor = 1e-12;

/// Least-squares slope of log(max(v, floor)) against log(n).
inline double loglog_slope(std::span<const double> levels, std::span<const double> values) {
    if (levels.size() != values.size() || levels.size() < 2) throw ArgumentError("slope fit needs matched series of length >= 2");
    const std::size_t m = levels.size();
    double sx = 0.0, sy = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        sx += std::log(levels[i]);
        sy += std::log(std::max(values[i], variation_floor));
    }
    const double mx = sx / m, my = sy / m;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        const double dx = std::log(levels[i]) - mx;
        sxx += dx * dx;
        sxy += dx * (std::log(std::max(values[i], variation_floor)) - my);
    }
    if (!(sxx > 0.0)) throw ArgumentError("slope fit needs distinct levels");
    return sxy / sxx;
}

/// Tightness read-out: a flat variation ladder means the compensators stay
/// bounded in n (semimartingale); growth means they blow up.
inline Verdict semimartingale_verdict(const VariationProfile& profile, const VerdictThresholds& th = {}) {
    if (profile.size() < th.min_levels)
        throw ArgumentError("verdict needs at least " + std::to_string(th.min_levels) + " ladder levels");
    Verdict v;
    v.profile = profile;
    v.thresholds = th;
    v.slope = loglog_slope(profile.levels, profile.estimates);
    if (v.slope <= th.flat_slope)
        v.classification = Classification::semimartingale;
    else if (v.slope >= th.growth_slope)
        v.classification = Classification::not_semimartingale;
    else
        v.classification = Classification::inconclusive;
    return v;
}

}  // namespace smlab
