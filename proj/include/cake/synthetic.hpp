// SPDX-License-Identifier: Apache-2.0

#ifndef CAKE_SYNTHETIC_HPP
#define CAKE_SYNTHETIC_HPP

#include <algorithm>
#include <random>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "errors.hpp"
#include "gp.hpp"
#include "kernel_grammar.hpp"
#include "observations.hpp"
#include "random.hpp"

namespace cake {

/// n sorted uniform inputs in the unit cube, or an evenly spaced grid in 1-d.
inline Eigen::MatrixXd synthetic_inputs(int n, int d, Rng& rng, bool grid = false)
{
    Eigen::MatrixXd X(n, d);
    for (int i = 0; i < n; ++i) {
        for (int k = 0; k < d; ++k) { X(i, k) = grid && d == 1 ? (i + 0.5) / n : uniform01(rng); }
    }
    if (d == 1 && !grid) { std::sort(X.data(), X.data() + n); }
    return X;
}

/// One draw y = f(X) + e, f ~ GP(0, k), e ~ N(0, noise); `values` in the
/// library's parameter layout, noise last.
inline Observations sample_gp_dataset(const KernelExpr& expr, const Eigen::VectorXd& values, const Eigen::MatrixXd& X,
                                      Rng& rng)
{
    const auto params = Hyperparams::from_values(values);
    const Eigen::MatrixXd K = gram(expr, params, X, X);
    const auto chol = detail::robust_cholesky(K, params.noise());
    if (!chol) { throw NotPositiveDefinite("ground-truth Gram matrix is not positive definite"); }
    std::normal_distribution<double> z(0.0, 1.0);
    Eigen::VectorXd e(X.rows());
    for (auto& v : e) { v = z(rng); }
    const Eigen::VectorXd y = chol->first * e;
    return {Box::cube(static_cast<int>(X.cols()), 0.0, 1.0), X, y};
}

/// Ground truth used by the structure-recovery experiments: LIN + PER on the
/// unit interval.
inline Observations lin_per_dataset(int n, Rng& rng)
{
    const auto expr = parse("LIN + PER");
    Eigen::VectorXd v(6);
    // LIN variance, offset; PER lengthscale, variance, period; noise
    v << 4.0, 0.1, 0.7, 1.0, 0.25, 0.01;
    return sample_gp_dataset(expr, v, synthetic_inputs(n, 1, rng), rng);
}

} // namespace cake

#endif
