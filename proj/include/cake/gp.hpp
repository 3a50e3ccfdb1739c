// SPDX-License-Identifier: Apache-2.0

#ifndef CAKE_GP_HPP
#define CAKE_GP_HPP

#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "errors.hpp"
#include "kernel_grammar.hpp"
#include "lbfgs.hpp"
#include "observations.hpp"
#include "random.hpp"

namespace cake {

/// Kernel hyperparameters in the layout of `hyperparam_spec`, noise last.
/// Stored as logarithms of the natural-scale values.
class Hyperparams {
public:
    Hyperparams() = default;

    static Hyperparams from_values(const Eigen::VectorXd& values)
    {
        for (Eigen::Index i = 0; i < values.size(); ++i) {
            if (!(values[i] > 0.0) || !std::isfinite(values[i])) {
                throw InvalidKernel("hyperparameters must be finite and strictly positive");
            }
        }
        Hyperparams h;
        h.log_ = values.array().log().matrix();
        return h;
    }

    static Hyperparams from_log(Eigen::VectorXd log_values)
    {
        if (!log_values.allFinite()) { throw InvalidKernel("non-finite log hyperparameter"); }
        Hyperparams h;
        h.log_ = std::move(log_values);
        return h;
    }

    /// Prior means for every parameter of `expr`.
    static Hyperparams prior_mean(const KernelExpr& expr)
    {
        const auto spec = hyperparam_spec(expr);
        Eigen::VectorXd v(static_cast<Eigen::Index>(spec.size()));
        for (std::size_t i = 0; i < spec.size(); ++i) { v[static_cast<Eigen::Index>(i)] = spec[i].prior.mean(); }
        return from_values(v);
    }

    [[nodiscard]] Eigen::VectorXd values() const { return log_.array().exp().matrix(); }
    [[nodiscard]] const Eigen::VectorXd& log_values() const noexcept { return log_; }
    [[nodiscard]] int size() const noexcept { return static_cast<int>(log_.size()); }
    [[nodiscard]] double noise() const { return std::exp(log_[log_.size() - 1]); }

    friend bool operator==(const Hyperparams& a, const Hyperparams& b)
    {
        return a.log_.size() == b.log_.size() && (a.log_.array() == b.log_.array()).all();
    }

private:
    Eigen::VectorXd log_;
};

/// Pairwise distance data shared by every leaf of an expression.
struct PairGeometry {
    Eigen::MatrixXd sqdist;
    Eigen::MatrixXd dot;
    std::vector<Eigen::MatrixXd> sqdist_dim;
    std::vector<Eigen::MatrixXd> dot_dim;
    Eigen::Index input_dim = 0;

    static PairGeometry between(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, bool per_dim)
    {
        if (A.cols() != B.cols()) {
            throw DimensionMismatch("input column counts differ: " + std::to_string(A.cols()) + " vs " +
                                    std::to_string(B.cols()));
        }
        PairGeometry g;
        g.input_dim = A.cols();
        const auto m = A.rows();
        const auto p = B.rows();
        const auto d = A.cols();
        g.sqdist.setZero(m, p);
        g.dot.noalias() = A * B.transpose();
        for (Eigen::Index j = 0; j < p; ++j) {
            for (Eigen::Index i = 0; i < m; ++i) { g.sqdist(i, j) = (A.row(i) - B.row(j)).squaredNorm(); }
        }
        if (per_dim) {
            for (Eigen::Index k = 0; k < d; ++k) {
                const Eigen::VectorXd a = A.col(k);
                const Eigen::VectorXd b = B.col(k);
                Eigen::MatrixXd diff = a.replicate(1, p) - b.transpose().replicate(m, 1);
                g.sqdist_dim.emplace_back(diff.array().square().matrix());
                g.dot_dim.emplace_back(a * b.transpose());
            }
        }
        return g;
    }

    /// Geometry of each row with itself (m x 1), for prior variances.
    static PairGeometry diagonal(const Eigen::MatrixXd& A, bool per_dim)
    {
        PairGeometry g;
        g.input_dim = A.cols();
        g.sqdist.setZero(A.rows(), 1);
        g.dot = A.rowwise().squaredNorm();
        if (per_dim) {
            for (Eigen::Index k = 0; k < A.cols(); ++k) {
                g.sqdist_dim.emplace_back(Eigen::MatrixXd::Zero(A.rows(), 1));
                g.dot_dim.emplace_back(A.col(k).array().square().matrix());
            }
        }
        return g;
    }
};

/// Whether evaluating `e` needs per-coordinate distances (subscripted
/// leaves, or periodic leaves on multi-dimensional inputs).
inline bool needs_per_dim(const KernelExpr& e)
{
    for (const auto& lf : leaves(e)) {
        if (lf.dim() || lf.base() == BaseKernel::PER) { return true; }
    }
    return false;
}

namespace detail {

struct KernelEval {
    Eigen::MatrixXd K;
    std::vector<Eigen::MatrixXd> grads; // d K / d log(param), leaf params only
};

inline void eval_leaf(const KernelExpr& leaf, const Eigen::VectorXd& v, int offset, const PairGeometry& geo,
                      bool want_grad, KernelEval& out)
{
    const auto dim = leaf.dim();
    if (dim && static_cast<std::size_t>(*dim) >= geo.sqdist_dim.size()) {
        throw DimensionMismatch("kernel indexes dimension " + std::to_string(*dim) + " beyond the input");
    }
    const Eigen::MatrixXd& r2 = dim ? geo.sqdist_dim[static_cast<std::size_t>(*dim)] : geo.sqdist;
    const Eigen::ArrayXXd r2a = r2.array();
    const auto o = static_cast<Eigen::Index>(offset);

    switch (leaf.base()) {
    case BaseKernel::SE: {
        const double l = v[o];
        const double s = v[o + 1];
        Eigen::ArrayXXd k = s * (-r2a / (2.0 * l * l)).exp();
        if (want_grad) {
            out.grads.emplace_back((k * r2a / (l * l)).matrix());
            out.grads.emplace_back(k.matrix());
        }
        out.K = k.matrix();
        break;
    }
    case BaseKernel::PER: {
        // Sum of sin^2 over coordinates: equals the scalar form in one
        // dimension and stays positive semidefinite in any dimension.
        const double l = v[o];
        const double s = v[o + 1];
        const double p = v[o + 2];
        Eigen::ArrayXXd S = Eigen::ArrayXXd::Zero(r2.rows(), r2.cols());
        Eigen::ArrayXXd T = Eigen::ArrayXXd::Zero(r2.rows(), r2.cols());
        const auto accumulate = [&](const Eigen::MatrixXd& sq) {
            const Eigen::ArrayXXd u = std::numbers::pi * sq.array().sqrt() / p;
            S += u.sin().square();
            if (want_grad) { T += u * (2.0 * u).sin(); }
        };
        if (dim) {
            accumulate(r2);
        } else if (geo.sqdist_dim.empty()) {
            if (geo.input_dim > 1) { throw DimensionMismatch("periodic kernel needs per-coordinate geometry"); }
            accumulate(geo.sqdist);
        } else {
            for (const auto& sq : geo.sqdist_dim) { accumulate(sq); }
        }
        Eigen::ArrayXXd k = s * (-S / (l * l)).exp();
        if (want_grad) {
            out.grads.emplace_back((k * 2.0 * S / (l * l)).matrix());
            out.grads.emplace_back(k.matrix());
            out.grads.emplace_back((k * T / (l * l)).matrix());
        }
        out.K = k.matrix();
        break;
    }
    case BaseKernel::LIN: {
        const double s = v[o];
        const double c = v[o + 1];
        const Eigen::MatrixXd& dot = dim ? geo.dot_dim[static_cast<std::size_t>(*dim)] : geo.dot;
        Eigen::ArrayXXd sd = s * dot.array();
        if (want_grad) {
            out.grads.emplace_back(sd.matrix());
            out.grads.emplace_back(Eigen::MatrixXd::Constant(dot.rows(), dot.cols(), c));
        }
        out.K = (sd + c).matrix();
        break;
    }
    case BaseKernel::RQ: {
        const double l = v[o];
        const double s = v[o + 1];
        const double a = v[o + 2];
        const Eigen::ArrayXXd B = 1.0 + r2a / (2.0 * a * l * l);
        const Eigen::ArrayXXd logB = B.log();
        Eigen::ArrayXXd k = s * (-a * logB).exp();
        if (want_grad) {
            out.grads.emplace_back((k * r2a / (l * l * B)).matrix());
            out.grads.emplace_back(k.matrix());
            out.grads.emplace_back((k * a * (-logB + (B - 1.0) / B)).matrix());
        }
        out.K = k.matrix();
        break;
    }
    case BaseKernel::M3:
    case BaseKernel::M5: {
        const double l = v[o];
        const double s = v[o + 1];
        const bool m5 = leaf.base() == BaseKernel::M5;
        const double c = m5 ? std::sqrt(5.0) : std::sqrt(3.0);
        const Eigen::ArrayXXd a = c * r2a.sqrt() / l;
        const Eigen::ArrayXXd e = (-a).exp();
        Eigen::ArrayXXd k;
        if (m5) {
            k = s * (1.0 + a + a.square() / 3.0) * e;
        } else {
            k = s * (1.0 + a) * e;
        }
        if (want_grad) {
            if (m5) {
                out.grads.emplace_back((s * a.square() * (1.0 + a) / 3.0 * e).matrix());
            } else {
                out.grads.emplace_back((s * a.square() * e).matrix());
            }
            out.grads.emplace_back(k.matrix());
        }
        out.K = k.matrix();
        break;
    }
    }
}

inline void eval_tree(const KernelExpr& e, const Eigen::VectorXd& v, int& offset, const PairGeometry& geo,
                      bool want_grad, KernelEval& out)
{
    if (e.is_leaf()) {
        eval_leaf(e, v, offset, geo, want_grad, out);
        offset += leaf_param_count(e.base());
        return;
    }
    KernelEval l;
    KernelEval r;
    eval_tree(e.left(), v, offset, geo, want_grad, l);
    eval_tree(e.right(), v, offset, geo, want_grad, r);
    if (e.op() == Op::Add) {
        out.K = l.K + r.K;
        if (want_grad) {
            out.grads = std::move(l.grads);
            for (auto& gr : r.grads) { out.grads.push_back(std::move(gr)); }
        }
    } else {
        out.K = l.K.cwiseProduct(r.K);
        if (want_grad) {
            out.grads.reserve(l.grads.size() + r.grads.size());
            for (auto& gl : l.grads) { out.grads.emplace_back(gl.cwiseProduct(r.K)); }
            for (auto& gr : r.grads) { out.grads.emplace_back(l.K.cwiseProduct(gr)); }
        }
    }
}

inline void check_param_size(const KernelExpr& e, const Eigen::VectorXd& values)
{
    if (values.size() != param_count(e)) {
        throw InvalidKernel("expected " + std::to_string(param_count(e)) + " hyperparameters for '" + print(e) +
                            "', got " + std::to_string(values.size()));
    }
}

} // namespace detail

/// Covariance between two point sets (rows), noise excluded.
inline Eigen::MatrixXd gram(const KernelExpr& expr, const Eigen::VectorXd& values, const PairGeometry& geo)
{
    detail::check_param_size(expr, values);
    detail::KernelEval ev;
    int offset = 0;
    detail::eval_tree(expr, values, offset, geo, false, ev);
    return std::move(ev.K);
}

inline Eigen::MatrixXd gram(const KernelExpr& expr, const Hyperparams& params, const Eigen::MatrixXd& A,
                            const Eigen::MatrixXd& B)
{
    return gram(expr, params.values(), PairGeometry::between(A, B, needs_per_dim(expr)));
}

inline Eigen::VectorXd gram_diag(const KernelExpr& expr, const Hyperparams& params, const Eigen::MatrixXd& A)
{
    return gram(expr, params.values(), PairGeometry::diagonal(A, needs_per_dim(expr))).col(0);
}

inline double kernel_value(const KernelExpr& expr, const Hyperparams& params, const Eigen::VectorXd& a,
                           const Eigen::VectorXd& b)
{
    return gram(expr, params, a.transpose(), b.transpose())(0, 0);
}

// ---------------------------------------------------------------------------
// Conditioning

/// Affine maps between problem units and model units (inputs to the unit box,
/// outputs standardized). Default-constructed transforms are the identity.
struct DataTransform {
    Eigen::VectorXd x_lower;
    Eigen::VectorXd x_width;
    double y_mean = 0.0;
    double y_scale = 1.0;

    static DataTransform fit(const Observations& data)
    {
        DataTransform t;
        t.x_lower = data.box().lower;
        t.x_width = data.box().width();
        if (data.size() > 0) {
            t.y_mean = data.y().mean();
            const double var = (data.y().array() - t.y_mean).square().mean();
            t.y_scale = var > 1e-24 ? std::sqrt(var) : 1.0;
        }
        return t;
    }

    [[nodiscard]] bool identity_x() const noexcept { return x_lower.size() == 0; }

    [[nodiscard]] Eigen::MatrixXd inputs(const Eigen::MatrixXd& X) const
    {
        if (identity_x()) { return X; }
        return ((X.rowwise() - x_lower.transpose()).array().rowwise() / x_width.transpose().array()).matrix();
    }

    [[nodiscard]] Eigen::VectorXd targets(const Eigen::VectorXd& y) const
    {
        return ((y.array() - y_mean) / y_scale).matrix();
    }
};

struct Posterior {
    double mean = 0.0;
    double var = 0.0;
};

struct BatchPosterior {
    Eigen::VectorXd mean;
    Eigen::VectorXd var;
};

/// A kernel conditioned on data. All matrices live in model units; the
/// transform maps queries in and predictions back out.
struct FittedModel {
    KernelExpr expr;
    Hyperparams params;
    Eigen::MatrixXd X;
    Eigen::VectorXd y;
    Eigen::MatrixXd chol;  // lower factor of K + (noise + jitter) I
    Eigen::VectorXd alpha; // (K + noise I)^-1 y
    double jitter = 0.0;
    double lml = 0.0;
    double log_prior = 0.0;
    double bic = 0.0;
    DataTransform transform;

    [[nodiscard]] int n() const noexcept { return static_cast<int>(y.size()); }
};

namespace detail {

inline constexpr std::array<double, 4> kJitterLadder{0.0, 1e-8, 1e-6, 1e-4};

/// Cholesky of K + noise I, escalating diagonal jitter on failure.
inline std::optional<std::pair<Eigen::MatrixXd, double>> robust_cholesky(const Eigen::MatrixXd& K, double noise)
{
    const auto n = K.rows();
    for (double jitter : kJitterLadder) {
        Eigen::MatrixXd Ky = K;
        Ky.diagonal().array() += noise + jitter;
        Eigen::LLT<Eigen::MatrixXd> llt(Ky);
        if (llt.info() != Eigen::Success) { continue; }
        Eigen::MatrixXd L = llt.matrixL();
        bool ok = L.allFinite();
        for (Eigen::Index i = 0; ok && i < n; ++i) { ok = L(i, i) > 0.0; }
        if (ok) { return std::make_pair(std::move(L), jitter); }
    }
    return std::nullopt;
}

inline double log_prior_of(const KernelExpr& expr, const Eigen::VectorXd& values)
{
    const auto spec = hyperparam_spec(expr);
    double lp = 0.0;
    for (std::size_t i = 0; i < spec.size(); ++i) { lp += spec[i].prior.log_pdf(values[static_cast<Eigen::Index>(i)]); }
    return lp;
}

} // namespace detail

/// -2 lml + d ln n; `n` is a real so the penalty can be probed at any scale.
inline double bic(double lml, int param_count, double n)
{
    return -2.0 * lml + static_cast<double>(param_count) * std::log(n);
}

/// Lower is better.
inline double bic(const FittedModel& model, int n) { return bic(model.lml, param_count(model.expr), static_cast<double>(n)); }

/// Conditions `expr` with fixed hyperparameters on data already in model
/// units. Throws NotPositiveDefinite if the jitter ladder is exhausted.
inline FittedModel condition(const KernelExpr& expr, const Hyperparams& params, Eigen::MatrixXd X, Eigen::VectorXd y,
                             DataTransform transform = {})
{
    if (X.rows() != y.size()) { throw DimensionMismatch("inputs and targets differ in length"); }
    const Eigen::VectorXd values = params.values();
    detail::check_param_size(expr, values);
    FittedModel m{expr, params, std::move(X), std::move(y), {}, {}, 0.0, 0.0, 0.0, 0.0, std::move(transform)};
    m.log_prior = detail::log_prior_of(expr, values);
    const auto n = m.X.rows();
    if (n == 0) { return m; }

    const Eigen::MatrixXd K = gram(expr, values, PairGeometry::between(m.X, m.X, needs_per_dim(expr)));
    auto factor = detail::robust_cholesky(K, params.noise());
    if (!factor) { throw NotPositiveDefinite("Cholesky failed for '" + print(expr) + "' after jitter escalation"); }
    m.chol = std::move(factor->first);
    m.jitter = factor->second;
    m.alpha = m.chol.transpose().triangularView<Eigen::Upper>().solve(m.chol.triangularView<Eigen::Lower>().solve(m.y));
    m.lml = -0.5 * m.y.dot(m.alpha) - m.chol.diagonal().array().log().sum() -
            0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
    m.bic = bic(m.lml, param_count(expr), static_cast<double>(n));
    return m;
}

inline double log_marginal_likelihood(const KernelExpr& expr, const Hyperparams& params, const Observations& data)
{
    if (data.empty()) { throw FitFailed("log marginal likelihood needs at least one observation"); }
    return condition(expr, params, data.X(), data.y()).lml;
}

/// Posterior of the latent function at the rows of Q (problem units).
inline BatchPosterior posterior(const FittedModel& model, const Eigen::MatrixXd& Q)
{
    const Eigen::MatrixXd Qm = model.transform.inputs(Q);
    const bool per_dim = needs_per_dim(model.expr);
    const Eigen::VectorXd values = model.params.values();
    const Eigen::VectorXd prior = gram(model.expr, values, PairGeometry::diagonal(Qm, per_dim)).col(0);

    BatchPosterior out;
    if (model.n() == 0) {
        out.mean = Eigen::VectorXd::Zero(Q.rows());
        out.var = prior;
    } else {
        const Eigen::MatrixXd Ks = gram(model.expr, values, PairGeometry::between(model.X, Qm, per_dim)); // n x m
        out.mean = Ks.transpose() * model.alpha;
        const Eigen::MatrixXd V = model.chol.triangularView<Eigen::Lower>().solve(Ks);
        out.var = prior - V.colwise().squaredNorm().transpose();
        for (Eigen::Index i = 0; i < out.var.size(); ++i) {
            out.var[i] = std::clamp(out.var[i], 0.0, std::max(0.0, prior[i]));
        }
    }
    const double s = model.transform.y_scale;
    out.mean = (out.mean.array() * s + model.transform.y_mean).matrix();
    out.var *= s * s;
    return out;
}

inline Posterior posterior(const FittedModel& model, const Eigen::VectorXd& x)
{
    const auto b = posterior(model, Eigen::MatrixXd(x.transpose()));
    return {b.mean[0], b.var[0]};
}

/// Full posterior covariance over the rows of Q, in problem units.
inline Eigen::MatrixXd posterior_covariance(const FittedModel& model, const Eigen::MatrixXd& Q)
{
    const Eigen::MatrixXd Qm = model.transform.inputs(Q);
    const bool per_dim = needs_per_dim(model.expr);
    const Eigen::VectorXd values = model.params.values();
    Eigen::MatrixXd C = gram(model.expr, values, PairGeometry::between(Qm, Qm, per_dim));
    if (model.n() > 0) {
        const Eigen::MatrixXd Ks = gram(model.expr, values, PairGeometry::between(model.X, Qm, per_dim));
        const Eigen::MatrixXd V = model.chol.triangularView<Eigen::Lower>().solve(Ks);
        C.noalias() -= V.transpose() * V;
    }
    return C * (model.transform.y_scale * model.transform.y_scale);
}

// ---------------------------------------------------------------------------
// MAP fitting

struct FitOptions {
    int restarts = 5; // first from prior means, the rest from prior draws
    int max_iter = 200;
    double tol = 1e-6;
    double noise_floor = 1e-6;
};

/// Log posterior (log marginal likelihood + log Gamma priors on natural-scale
/// values) as a function of unconstrained coordinates: log of each kernel
/// parameter, and log(noise - floor) for the noise.
class MapObjective {
public:
    MapObjective(KernelExpr expr, Eigen::MatrixXd X, Eigen::VectorXd y, double noise_floor = 1e-6)
        : expr_(std::move(expr)), X_(std::move(X)), y_(std::move(y)), floor_(noise_floor),
          spec_(hyperparam_spec(expr_)),
          geo_(PairGeometry::between(X_, X_, needs_per_dim(expr_)))
    {
    }

    static constexpr double kBound = 12.0;

    [[nodiscard]] int dim() const noexcept { return static_cast<int>(spec_.size()); }
    [[nodiscard]] const KernelExpr& expr() const noexcept { return expr_; }

    [[nodiscard]] Eigen::VectorXd natural(const Eigen::VectorXd& theta) const
    {
        Eigen::VectorXd v = theta.array().exp().matrix();
        v[v.size() - 1] += floor_;
        return v;
    }

    [[nodiscard]] Eigen::VectorXd coordinates(const Eigen::VectorXd& values) const
    {
        Eigen::VectorXd v = values;
        v[v.size() - 1] = std::max(v[v.size() - 1] - floor_, 1e-12);
        return v.array().log().matrix();
    }

    /// Returns the objective (to be maximized), or -inf where the
    /// factorization fails or theta leaves the [-12, 12] box.
    double operator()(const Eigen::VectorXd& theta, Eigen::VectorXd* grad = nullptr) const
    {
        constexpr double kNegInf = -std::numeric_limits<double>::infinity();
        if (theta.size() != dim() || !theta.allFinite() || theta.cwiseAbs().maxCoeff() > kBound) { return kNegInf; }
        const Eigen::VectorXd v = natural(theta);
        const auto n = X_.rows();

        detail::KernelEval ev;
        int offset = 0;
        detail::eval_tree(expr_, v, offset, geo_, grad != nullptr, ev);
        const double noise = v[v.size() - 1];
        auto factor = detail::robust_cholesky(ev.K, noise);
        if (!factor) { return kNegInf; }
        const Eigen::MatrixXd& Lm = factor->first;
        const auto L = Lm.triangularView<Eigen::Lower>();
        const auto U = Lm.transpose().triangularView<Eigen::Upper>();
        const Eigen::VectorXd alpha = U.solve(L.solve(y_));
        double value = -0.5 * y_.dot(alpha) - factor->first.diagonal().array().log().sum() -
                       0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
        for (std::size_t i = 0; i < spec_.size(); ++i) { value += spec_[i].prior.log_pdf(v[static_cast<Eigen::Index>(i)]); }
        if (!std::isfinite(value)) { return kNegInf; }

        if (grad != nullptr) {
            grad->resize(dim());
            Eigen::MatrixXd Kinv = L.solve(Eigen::MatrixXd::Identity(n, n));
            Kinv = U.solve(Kinv);
            const Eigen::MatrixXd W = alpha * alpha.transpose() - Kinv;
            for (std::size_t i = 0; i < ev.grads.size(); ++i) {
                const auto idx = static_cast<Eigen::Index>(i);
                (*grad)[idx] = 0.5 * W.cwiseProduct(ev.grads[i]).sum() +
                               spec_[i].prior.dlog_pdf(v[idx]) * v[idx];
            }
            const auto last = static_cast<Eigen::Index>(dim() - 1);
            const double dn = std::exp(theta[last]);
            (*grad)[last] = 0.5 * W.trace() * dn + spec_.back().prior.dlog_pdf(v[last]) * dn;
        }
        return value;
    }

private:
    KernelExpr expr_;
    Eigen::MatrixXd X_;
    Eigen::VectorXd y_;
    double floor_;
    std::vector<ParamInfo> spec_;
    PairGeometry geo_;
};

struct MapRun {
    Eigen::VectorXd theta;
    double objective = -std::numeric_limits<double>::infinity();
    std::vector<double> trace; // objective after each accepted step (non-decreasing)
};

/// Local ascent of a MAP objective from one start.
inline MapRun ascend(const MapObjective& obj, const Eigen::VectorXd& theta0, const FitOptions& opt = {})
{
    LbfgsOptions lo;
    lo.max_iter = opt.max_iter;
    lo.f_tol = opt.tol;
    auto res = lbfgs_minimize(
        [&](const Eigen::VectorXd& th, Eigen::VectorXd& g) {
            const double f = obj(th, &g);
            g = -g;
            return std::isfinite(f) ? -f : std::numeric_limits<double>::infinity();
        },
        theta0, lo);
    MapRun run;
    run.theta = std::move(res.x);
    run.objective = std::isfinite(res.f) ? -res.f : -std::numeric_limits<double>::infinity();
    run.trace.reserve(res.trace.size());
    for (double f : res.trace) { run.trace.push_back(-f); }
    return run;
}

/// MAP hyperparameters by multi-start L-BFGS in log space. Inputs are mapped
/// to the unit box and targets standardized before fitting. Deterministic in
/// (expr, data, rng state).
inline FittedModel fit_map(const KernelExpr& expr, const Observations& data, Rng& rng, const FitOptions& opt = {})
{
    if (data.empty()) { throw FitFailed("cannot fit '" + print(expr) + "' without observations"); }
    validate(expr, data.dim(), std::numeric_limits<int>::max());
    auto transform = DataTransform::fit(data);
    Eigen::MatrixXd X = transform.inputs(data.X());
    Eigen::VectorXd y = transform.targets(data.y());
    const MapObjective obj(expr, X, y, opt.noise_floor);
    const auto spec = hyperparam_spec(expr);

    MapRun best;
    for (int r = 0; r < std::max(1, opt.restarts); ++r) {
        Eigen::VectorXd start(obj.dim());
        for (std::size_t i = 0; i < spec.size(); ++i) {
            const auto& pr = spec[i].prior;
            start[static_cast<Eigen::Index>(i)] =
                r == 0 ? pr.mean() : std::gamma_distribution<double>(pr.shape, 1.0 / pr.rate)(rng);
        }
        Eigen::VectorXd theta0 = obj.coordinates(start.cwiseMax(1e-6));
        theta0 = theta0.cwiseMax(-MapObjective::kBound + 1e-9).cwiseMin(MapObjective::kBound - 1e-9);
        auto run = ascend(obj, theta0, opt);
        if (run.objective > best.objective) { best = std::move(run); }
    }
    if (!std::isfinite(best.objective)) {
        throw FitFailed("every restart failed to factorize the covariance of '" + print(expr) + "'");
    }
    return condition(expr, Hyperparams::from_values(obj.natural(best.theta)), std::move(X), std::move(y),
                     std::move(transform));
}

} // namespace cake

#endif
