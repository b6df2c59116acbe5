#pragma once

#include <cmath>
#include <memory>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "smlab/error.hpp"
#include "smlab/model.hpp"
#include "smlab/quadrature.hpp"

namespace smlab {

enum class KernelFamily { exact_gaussian, euler_local_gaussian };

inline const char* to_string(KernelFamily f) {
    return f == KernelFamily::exact_gaussian ? "exact-Gaussian" : "euler-local-Gaussian";
}

/// Covariance square root: cov = root * root', and whitening = cov^{-1} * root.
struct GaussianFactor {
    std::size_t dim = 1;
    Eigen::MatrixXd root;
    Eigen::MatrixXd whitening;
};

inline GaussianFactor factorize(std::span<const double> cov, std::size_t d) {
    GaussianFactor f;
    f.dim = d;
    if (d == 1) {
        const double sd = std::sqrt(std::max(cov[0], 0.0));
        f.root = Eigen::MatrixXd::Constant(1, 1, sd);
        f.whitening = Eigen::MatrixXd::Constant(1, 1, sd > 0.0 ? 1.0 / sd : 0.0);
        return f;
    }
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> c(cov.data(), d, d);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Eigen::MatrixXd(0.5 * (c + c.transpose())));
    Eigen::VectorXd lam = es.eigenvalues().cwiseMax(0.0);
    Eigen::VectorXd sq = lam.cwiseSqrt();
    Eigen::VectorXd inv = sq.unaryExpr([](double v) { return v > 0.0 ? 1.0 / v : 0.0; });
    f.root = es.eigenvectors() * sq.asDiagonal();
    f.whitening = es.eigenvectors() * inv.asDiagonal();
    return f;
}

/// Gaussian transition kernel of the driftless reference process dZ = sigma dW.
///
/// Mean is always the starting state. With state-independent sigma the
/// covariance is the exact integral of sigma sigma' over [s, u]; otherwise the
/// coefficient is frozen at (s, x).
class TransitionKernel {
public:
    explicit TransitionKernel(DiffusionModel model)
        : model_(std::make_shared<const DiffusionModel>(std::move(model))),
          family_(model_->state_independent_diffusion ? KernelFamily::exact_gaussian
                                                      : KernelFamily::euler_local_gaussian) {
        if (family_ == KernelFamily::exact_gaussian && model_->time_homogeneous)
            constant_rate_ = model_->covariance_rate(0.0, model_->x0);
    }

    KernelFamily family() const noexcept { return family_; }
    std::size_t dim() const noexcept { return model_->dim; }
    const DiffusionModel& model() const noexcept { return *model_; }

    std::vector<double> mean(double /*s*/, std::span<const double> x, double /*u*/) const {
        return {x.begin(), x.end()};
    }

    /// Row-major m*m covariance of Y ~ kernel(s, x, u).
    std::vector<double> covariance(double s, std::span<const double> x, double u) const {
        if (!(u >= s)) throw ArgumentError("kernel horizon must satisfy u >= s");
        const std::size_t d = dim();
        if (!constant_rate_.empty()) {
            auto c = constant_rate_;
            for (double& v : c) v *= (u - s);
            return c;
        }
        if (family_ == KernelFamily::euler_local_gaussian) {
            auto c = model_->covariance_rate(s, x);
            for (double& v : c) v *= (u - s);
            return c;
        }
        // time integral of sigma sigma'(r); exact for time-constant sigma
        const auto& gl = gauss_legendre(8);
        std::vector<double> c(d * d, 0.0);
        for (std::size_t q = 0; q < gl.size(); ++q) {
            const auto rate = model_->covariance_rate(s + gl.nodes[q] * (u - s), x);
            for (std::size_t i = 0; i < d * d; ++i) c[i] += gl.weights[q] * rate[i];
        }
        for (double& v : c) v *= (u - s);
        return c;
    }

    /// Scalar variance for one-dimensional models, without allocation when the rate is cached.
    double variance_1d(double s, std::span<const double> x, double u) const {
        if (!constant_rate_.empty()) return constant_rate_[0] * (u - s);
        return covariance(s, x, u)[0];
    }

    GaussianFactor factor(double s, std::span<const double> x, double u) const {
        return factorize(covariance(s, x, u), dim());
    }

    /// Density p(s, y) of Z_s started from the model's x0; defines mu(ds,dy) = p ds dy.
    double reference_density(double s, std::span<const double> y) const {
        if (!(s > 0.0)) throw ArgumentError("reference density needs s > 0");
        const std::size_t d = dim();
        const auto cov = covariance(0.0, model_->x0, s);
        if (d == 1) {
            const double z = y[0] - model_->x0[0];
            return std::exp(-0.5 * z * z / cov[0]) / std::sqrt(2.0 * std::numbers::pi * cov[0]);
        }
        Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> c(cov.data(), d, d);
        Eigen::VectorXd z(d);
        for (std::size_t i = 0; i < d; ++i) z[i] = y[i] - model_->x0[i];
        Eigen::LLT<Eigen::MatrixXd> llt{Eigen::MatrixXd(c)};
        const double quad = z.dot(llt.solve(z));
        const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
        return std::exp(-0.5 * quad - 0.5 * logdet - 0.5 * static_cast<double>(d) * std::log(2.0 * std::numbers::pi));
    }

private:
    std::shared_ptr<const DiffusionModel> model_;
    KernelFamily family_;
    std::vector<double> constant_rate_;
};

inline TransitionKernel transition_kernel(const DiffusionModel& model) { return TransitionKernel(model); }

/// Visits every tensor Gauss-Hermite node y = x + root * z with its weight;
/// visit(y, z, w). `y` and `z` are scratch spans of length m.
template <class Visit>
void for_each_gaussian_node(std::span<const double> x, const GaussianFactor& f, int order, Visit&& visit) {
    const auto& gh = gauss_hermite(order);
    const std::size_t d = f.dim;
    const std::size_t q = gh.size();
    std::vector<double> y(d), z(d);
    if (d == 1) {
        const double sd = f.root(0, 0);
        for (std::size_t i = 0; i < q; ++i) {
            z[0] = gh.nodes[i];
            y[0] = x[0] + sd * z[0];
            visit(std::span<const double>(y), std::span<const double>(z), gh.weights[i]);
        }
        return;
    }
    std::vector<std::size_t> idx(d, 0);
    for (;;) {
        double w = 1.0;
        for (std::size_t i = 0; i < d; ++i) {
            z[i] = gh.nodes[idx[i]];
            w *= gh.weights[idx[i]];
        }
        for (std::size_t i = 0; i < d; ++i) {
            double acc = x[i];
            for (std::size_t l = 0; l < d; ++l) acc += f.root(i, l) * z[l];
            y[i] = acc;
        }
        visit(std::span<const double>(y), std::span<const double>(z), w);
        std::size_t i = 0;
        while (i < d && ++idx[i] == q) idx[i++] = 0;
        if (i == d) break;
    }
}

/// E[g(Y)], Y ~ kernel(s, x, u), by tensor Gauss-Hermite quadrature of the given order.
template <class G>
double kernel_expectation(const TransitionKernel& kernel, G&& g, double s, std::span<const double> x, double u,
                          int order) {
    if (order < 1) throw ArgumentError("quadrature order must be at least 1");
    if (!(u > s)) throw ArgumentError("kernel_expectation needs u > s");
    if (x.size() != kernel.dim()) throw ArgumentError("state dimension does not match kernel");
    const auto f = kernel.factor(s, x, u);
    double acc = 0.0;
    for_each_gaussian_node(x, f, order, [&](std::span<const double> y, std::span<const double>, double w) {
        acc += w * g(y);
    });
    return acc;
}

}  // namespace smlab
