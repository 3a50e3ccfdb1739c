// SPDX-License-Identifier: Apache-2.0

#ifndef CAKE_ACQUISITION_HPP
#define CAKE_ACQUISITION_HPP

#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <string_view>

#include <boost/random/sobol.hpp>
#include <Eigen/Dense>

#include "errors.hpp"
#include "gp.hpp"
#include "observations.hpp"
#include "random.hpp"

namespace cake {

enum class AcqKind { EI, UCB, TS };

inline std::string_view to_string(AcqKind k) noexcept
{
    switch (k) {
    case AcqKind::EI: return "EI";
    case AcqKind::UCB: return "UCB";
    case AcqKind::TS: return "TS";
    }
    return "?";
}

inline AcqKind acq_kind_from_string(std::string_view s)
{
    if (s == "EI" || s == "ei") { return AcqKind::EI; }
    if (s == "UCB" || s == "ucb") { return AcqKind::UCB; }
    if (s == "TS" || s == "ts") { return AcqKind::TS; }
    throw ConfigError("unknown acquisition '" + std::string(s) + "'");
}

struct AcqConfig {
    AcqKind kind = AcqKind::EI;
    double ucb_beta = 2.0;
    int candidates = 0; // 0 means 1000 * d
    int refine_steps = 20;

    [[nodiscard]] int candidate_count(int d) const noexcept { return candidates > 0 ? candidates : 1000 * d; }

    void validate() const
    {
        if (!(ucb_beta > 0.0)) { throw ConfigError("ucb_beta must be positive"); }
        if (candidates < 0) { throw ConfigError("candidate count must be at least 1"); }
        if (refine_steps < 0) { throw ConfigError("refine_steps must be non-negative"); }
    }
};

inline double normal_pdf(double u) { return std::exp(-0.5 * u * u) / std::sqrt(2.0 * std::numbers::pi); }
inline double normal_cdf(double u) { return 0.5 * std::erfc(-u / std::numbers::sqrt2); }

/// Expected improvement over `incumbent` for maximization.
inline double ei(const Posterior& post, double incumbent)
{
    const double sigma = std::sqrt(std::max(0.0, post.var));
    const double gain = post.mean - incumbent;
    if (sigma < 1e-12) { return std::max(0.0, gain); }
    const double u = gain / sigma;
    return std::max(0.0, sigma * (u * normal_cdf(u) + normal_pdf(u)));
}

inline double ucb(const Posterior& post, double beta)
{
    return post.mean + beta * std::sqrt(std::max(0.0, post.var));
}

/// Best observed target of a fitted model, in problem units.
inline double incumbent_of(const FittedModel& m)
{
    if (m.n() == 0) { return -std::numeric_limits<double>::infinity(); }
    return m.y.maxCoeff() * m.transform.y_scale + m.transform.y_mean;
}

/// Input row of the best observed target, in problem units.
inline std::optional<Eigen::VectorXd> best_observed_x(const FittedModel& m)
{
    if (m.n() == 0) { return std::nullopt; }
    Eigen::Index i = 0;
    m.y.maxCoeff(&i);
    Eigen::VectorXd x = m.X.row(i).transpose();
    if (!m.transform.identity_x()) { x = m.transform.x_lower + (x.array() * m.transform.x_width.array()).matrix(); }
    return x;
}

/// EI or UCB at each row of Q. TS has no closed form and is rejected.
inline Eigen::VectorXd acquisition_values(const FittedModel& m, const AcqConfig& cfg, const Eigen::MatrixXd& Q)
{
    if (cfg.kind == AcqKind::TS) { throw ConfigError("Thompson sampling has no pointwise acquisition value"); }
    const auto post = posterior(m, Q);
    const double inc = incumbent_of(m);
    Eigen::VectorXd out(Q.rows());
    for (Eigen::Index i = 0; i < Q.rows(); ++i) {
        const Posterior p{post.mean[i], post.var[i]};
        out[i] = cfg.kind == AcqKind::EI ? ei(p, inc) : ucb(p, cfg.ucb_beta);
    }
    return out;
}

/// M scrambled Sobol points in the box (Cranley-Patterson random shift).
inline Eigen::MatrixXd sobol_candidates(const Box& box, int M, Rng& rng)
{
    const int d = box.dim();
    boost::random::sobol gen(static_cast<std::size_t>(d));
    Eigen::VectorXd shift(d);
    for (int k = 0; k < d; ++k) { shift[k] = uniform01(rng); }
    Eigen::MatrixXd C(M, d);
    for (int i = 0; i < M; ++i) {
        for (int k = 0; k < d; ++k) {
            double u = std::ldexp(static_cast<double>(gen()), -64) + shift[k];
            u -= std::floor(u);
            C(i, k) = box.lower[k] + u * (box.upper[k] - box.lower[k]);
        }
    }
    return C;
}

struct AcqResult {
    Eigen::VectorXd x;
    double value = -std::numeric_limits<double>::infinity();
};

namespace detail {

inline Eigen::Index first_argmax(const Eigen::VectorXd& v)
{
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < v.size(); ++i) {
        if (v[i] > v[best]) { best = i; }
    }
    return best;
}

/// Golden-section search of f on [a, b]; returns (argmax, max).
template <typename F>
std::pair<double, double> golden_max(F&& f, double a, double b, int steps)
{
    constexpr double kInvPhi = 0.6180339887498949;
    double c = b - kInvPhi * (b - a);
    double d = a + kInvPhi * (b - a);
    double fc = f(c);
    double fd = f(d);
    for (int i = 0; i < steps; ++i) {
        if (fc >= fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - kInvPhi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + kInvPhi * (b - a);
            fd = f(d);
        }
    }
    return fc >= fd ? std::make_pair(c, fc) : std::make_pair(d, fd);
}

/// Joint posterior draw over the rows of Q.
inline Eigen::VectorXd thompson_draw(const FittedModel& m, const Eigen::MatrixXd& Q, Rng& rng)
{
    const auto mean = posterior(m, Q).mean;
    Eigen::MatrixXd C = posterior_covariance(m, Q);
    C = 0.5 * (C + C.transpose());
    const double scale = std::max(1e-300, C.diagonal().cwiseAbs().maxCoeff());
    Eigen::MatrixXd L;
    for (double rel : {1e-10, 1e-8, 1e-6, 1e-4, 1e-2}) {
        Eigen::MatrixXd Cj = C;
        Cj.diagonal().array() += rel * scale;
        Eigen::LLT<Eigen::MatrixXd> llt(Cj);
        if (llt.info() == Eigen::Success) {
            L = llt.matrixL();
            break;
        }
    }
    if (L.size() == 0) { throw NotPositiveDefinite("posterior covariance over candidates is not positive definite"); }
    std::normal_distribution<double> z;
    Eigen::VectorXd e(Q.rows());
    for (Eigen::Index i = 0; i < e.size(); ++i) { e[i] = z(rng); }
    return mean + L * e;
}

} // namespace detail

/// Maximizes the acquisition of `m` over `box`: quasi-random candidates plus
/// the best observed point, then coordinate-wise golden-section refinement
/// around the winner. TS returns the argmax of one joint posterior draw.
inline AcqResult maximize(const FittedModel& m, const AcqConfig& cfg, const Box& box, Rng& rng)
{
    cfg.validate();
    const int d = box.dim();
    const int M = cfg.candidate_count(d);
    Eigen::MatrixXd C = sobol_candidates(box, M, rng);
    if (auto xb = best_observed_x(m); xb && M > 1) {
        C.conservativeResize(M + 1, Eigen::NoChange);
        C.row(M) = box.clamp(*xb).transpose();
    }

    if (cfg.kind == AcqKind::TS) {
        const Eigen::VectorXd draw = detail::thompson_draw(m, C, rng);
        const auto i = detail::first_argmax(draw);
        return {C.row(i).transpose(), draw[i]};
    }

    const Eigen::VectorXd vals = acquisition_values(m, cfg, C);
    const auto i = detail::first_argmax(vals);
    AcqResult best{C.row(i).transpose(), vals[i]};
    if (M == 1 || cfg.refine_steps == 0) { return best; }

    const double radius = 1.0 / std::pow(static_cast<double>(M), 1.0 / d);
    for (int k = 0; k < d; ++k) {
        const double h = radius * (box.upper[k] - box.lower[k]);
        const double lo = std::max(box.lower[k], best.x[k] - h);
        const double hi = std::min(box.upper[k], best.x[k] + h);
        Eigen::VectorXd probe = best.x;
        auto f = [&](double v) {
            probe[k] = v;
            return acquisition_values(m, cfg, Eigen::MatrixXd(probe.transpose()))[0];
        };
        const auto [arg, val] = detail::golden_max(f, lo, hi, cfg.refine_steps);
        if (val > best.value) {
            best.x[k] = arg;
            best.value = val;
        }
    }
    return best;
}

} // namespace cake

#endif
