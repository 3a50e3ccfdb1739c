// SPDX-License-Identifier: Apache-2.0

#ifndef CAKE_LBFGS_HPP
#define CAKE_LBFGS_HPP

#include <cmath>
#include <deque>
#include <limits>
#include <vector>

#include <Eigen/Dense>

namespace cake {

struct LbfgsOptions {
    int max_iter = 200;
    double f_tol = 1e-6; // stop when |f_k - f_{k+1}| <= f_tol * max(1, |f_k|)
    double g_tol = 1e-10;
    int memory = 8;
};

struct LbfgsResult {
    Eigen::VectorXd x;
    double f = std::numeric_limits<double>::infinity();
    int iterations = 0;
    bool converged = false;
    std::vector<double> trace; // objective after each accepted step, starting with f(x0)
};

/// Limited-memory BFGS with backtracking Armijo line search. `fg(x, g)`
/// returns f(x) and writes the gradient into g; a non-finite return marks x
/// as infeasible and makes the line search back off. Accepted steps never
/// increase f.
template <typename F>
LbfgsResult lbfgs_minimize(F&& fg, Eigen::VectorXd x0, const LbfgsOptions& opt = {})
{
    LbfgsResult res;
    const auto n = x0.size();
    Eigen::VectorXd g(n);
    double f = fg(x0, g);
    res.x = std::move(x0);
    res.f = f;
    if (!std::isfinite(f)) { return res; }
    res.trace.push_back(f);

    std::deque<Eigen::VectorXd> s_hist;
    std::deque<Eigen::VectorXd> y_hist;
    std::deque<double> rho_hist;
    Eigen::VectorXd x_new(n);
    Eigen::VectorXd g_new(n);

    for (int iter = 0; iter < opt.max_iter; ++iter) {
        if (g.lpNorm<Eigen::Infinity>() <= opt.g_tol) {
            res.converged = true;
            break;
        }

        // two-loop recursion
        Eigen::VectorXd q = g;
        std::vector<double> alphas(s_hist.size());
        for (int i = static_cast<int>(s_hist.size()) - 1; i >= 0; --i) {
            alphas[static_cast<std::size_t>(i)] = rho_hist[static_cast<std::size_t>(i)] * s_hist[static_cast<std::size_t>(i)].dot(q);
            q -= alphas[static_cast<std::size_t>(i)] * y_hist[static_cast<std::size_t>(i)];
        }
        double gamma = 1.0;
        if (!s_hist.empty()) { gamma = s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm(); }
        Eigen::VectorXd dir = gamma * q;
        for (std::size_t i = 0; i < s_hist.size(); ++i) {
            const double beta = rho_hist[i] * y_hist[i].dot(dir);
            dir += (alphas[i] - beta) * s_hist[i];
        }
        dir = -dir;

        double slope = g.dot(dir);
        if (!(slope < 0.0)) {
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
            dir = -g;
            slope = -g.squaredNorm();
        }

        double step = s_hist.empty() ? std::min(1.0, 1.0 / std::max(1e-12, g.norm())) : 1.0;
        bool accepted = false;
        double f_new = f;
        for (int ls = 0; ls < 40; ++ls) {
            x_new = res.x + step * dir;
            f_new = fg(x_new, g_new);
            if (std::isfinite(f_new) && f_new <= f + 1e-4 * step * slope) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) { break; }

        Eigen::VectorXd s = x_new - res.x;
        Eigen::VectorXd y = g_new - g;
        const double sy = s.dot(y);
        if (sy > 1e-12) {
            s_hist.push_back(std::move(s));
            y_hist.push_back(std::move(y));
            rho_hist.push_back(1.0 / sy);
            if (static_cast<int>(s_hist.size()) > opt.memory) {
                s_hist.pop_front();
                y_hist.pop_front();
                rho_hist.pop_front();
            }
        }

        const double change = std::abs(f - f_new);
        res.x = x_new;
        g = g_new;
        f = f_new;
        res.f = f;
        res.iterations = iter + 1;
        res.trace.push_back(f);
        if (change <= opt.f_tol * std::max(1.0, std::abs(f))) {
            res.converged = true;
            break;
        }
    }
    return res;
}

} // namespace cake

#endif
