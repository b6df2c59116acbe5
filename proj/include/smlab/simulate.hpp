#pragma once

#include <cmath>
#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "smlab/error.hpp"
#include "smlab/model.hpp"
#include "smlab/parallel.hpp"
#include "smlab/rng.hpp"

namespace smlab {

/// Values of a (possibly vector-valued) process on a grid. Simulated paths also
/// keep the Brownian increments they consumed; derived paths leave them empty.
struct SamplePath {
    GridPtr grid;
    std::size_t dim = 1;
    std::vector<double> values;      // (K+1) * dim, row per grid point
    std::vector<double> increments;  // K * dim, or empty

    SamplePath() = default;
    SamplePath(GridPtr g, std::size_t d) : grid(std::move(g)), dim(d), values(grid->size() * d, 0.0) {}

    std::size_t size() const noexcept { return grid->size(); }
    std::size_t steps() const noexcept { return grid->steps(); }
    double time(std::size_t k) const noexcept { return (*grid)[k]; }
    double value(std::size_t k, std::size_t i = 0) const noexcept { return values[k * dim + i]; }
    double& value(std::size_t k, std::size_t i = 0) noexcept { return values[k * dim + i]; }
    std::span<const double> state(std::size_t k) const noexcept { return {values.data() + k * dim, dim}; }
    std::span<double> state(std::size_t k) noexcept { return {values.data() + k * dim, dim}; }
    std::span<const double> increment(std::size_t k) const noexcept { return {increments.data() + k * dim, dim}; }
    bool has_increments() const noexcept { return increments.size() == steps() * dim; }

    /// One coordinate as a scalar path.
    std::vector<double> coordinate(std::size_t i = 0) const {
        std::vector<double> out(size());
        for (std::size_t k = 0; k < size(); ++k) out[k] = value(k, i);
        return out;
    }
};

/// Scalar path from per-grid-point samples.
inline SamplePath scalar_path(GridPtr grid, std::vector<double> samples) {
    if (samples.size() != grid->size()) throw ArgumentError("sample count does not match grid size");
    SamplePath p;
    p.grid = std::move(grid);
    p.dim = 1;
    p.values = std::move(samples);
    return p;
}

struct PathEnsemble {
    GridPtr grid;
    std::vector<SamplePath> paths;
    std::uint64_t master_seed = 0;
    std::vector<std::uint64_t> substreams;

    std::size_t size() const noexcept { return paths.size(); }
    const SamplePath& operator[](std::size_t i) const noexcept { return paths[i]; }
};

/// Runs Euler-Maruyama steps from..K-1 over stored increments; values up to
/// index `from` must already hold the path prefix. Used both for fresh
/// simulation and for replay/perturbation, so all share one arithmetic path.
inline void euler_steps(const DiffusionModel& model, const TimeGrid& grid, std::span<const double> increments,
                        std::span<double> values, std::size_t from = 0) {
    const std::size_t d = model.dim;
    std::vector<double> b(d), s(d * d);
    for (std::size_t k = from; k < grid.steps(); ++k) {
        const double t = grid[k];
        const double dt = grid.dt(k);
        std::span<const double> x(values.data() + k * d, d);
        std::span<double> next(values.data() + (k + 1) * d, d);
        model.drift(t, x, b);
        model.diffusion(t, x, s);
        for (std::size_t i = 0; i < d; ++i) {
            double noise = 0.0;
            for (std::size_t l = 0; l < d; ++l) noise += s[i * d + l] * increments[k * d + l];
            next[i] = x[i] + b[i] * dt + noise;
        }
        for (std::size_t i = 0; i < d; ++i)
            if (!std::isfinite(next[i]))
                throw BlowUpError(k, "non-finite state at step " + std::to_string(k) + " (t=" + std::to_string(t) + ")");
    }
}

/// Path from given increments (replay). Increments are copied into the path.
inline SamplePath replay(const DiffusionModel& model, GridPtr grid, std::vector<double> increments) {
    if (increments.size() != grid->steps() * model.dim) throw ArgumentError("increment count does not match grid");
    SamplePath p(grid, model.dim);
    std::copy(model.x0.begin(), model.x0.end(), p.values.begin());
    p.increments = std::move(increments);
    euler_steps(model, *grid, p.increments, p.values);
    return p;
}

/// Brownian increments of one substream: sqrt(dt_k) * N(0,1) draws k*d + l.
inline std::vector<double> brownian_increments(const TimeGrid& grid, std::size_t dim, std::uint64_t master_seed,
                                               std::uint64_t substream) {
    const NormalStream normals(master_seed, substream);
    std::vector<double> inc(grid.steps() * dim);
    for (std::size_t k = 0; k < grid.steps(); ++k) {
        const double sd = std::sqrt(grid.dt(k));
        for (std::size_t l = 0; l < dim; ++l) inc[k * dim + l] = sd * normals(k * dim + l);
    }
    return inc;
}

inline void check_simulation_grid(const DiffusionModel& model, const TimeGrid& grid) {
    if (grid.size() < 2) throw ArgumentError("simulation grid needs at least one step");
    if (grid.front() != 0.0) throw ArgumentError("simulation grid must start at 0");
    if (grid.back() > model.horizon * (1.0 + 1e-12)) throw RangeError("simulation grid extends past the model horizon");
}

/// Euler-Maruyama ensemble. Path i draws from substream `first_substream + i`,
/// so each path is a pure function of (seed, substream, grid).
inline PathEnsemble simulate(const DiffusionModel& model, GridPtr grid, std::uint64_t master_seed, std::size_t n_paths,
                             std::uint64_t first_substream = 0) {
    check_simulation_grid(model, *grid);
    if (model.x0.size() != model.dim) throw ArgumentError("initial state dimension does not match model");
    PathEnsemble ens;
    ens.grid = grid;
    ens.master_seed = master_seed;
    ens.paths.resize(n_paths);
    ens.substreams.resize(n_paths);
    parallel_for(n_paths, [&](std::size_t i) {
        const std::uint64_t stream = first_substream + i;
        ens.substreams[i] = stream;
        ens.paths[i] = replay(model, grid, brownian_increments(*grid, model.dim, master_seed, stream));
    });
    return ens;
}

/// CSV with columns path_id,t,x_1..x_m.
inline void write_ensemble_csv(std::ostream& os, const PathEnsemble& ens) {
    const std::size_t d = ens.paths.empty() ? 1 : ens.paths.front().dim;
    os << "path_id,t";
    for (std::size_t i = 1; i <= d; ++i) os << ",x_" << i;
    os << '\n';
    const auto old = os.precision(17);
    for (std::size_t p = 0; p < ens.size(); ++p) {
        const auto& path = ens.paths[p];
        for (std::size_t k = 0; k < path.size(); ++k) {
            os << ens.substreams[p] << ',' << path.time(k);
            for (std::size_t i = 0; i < d; ++i) os << ',' << path.value(k, i);
            os << '\n';
        }
    }
    os.precision(old);
}

}  // namespace smlab
