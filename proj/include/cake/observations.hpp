// SPDX-License-Identifier: Apache-2.0

#ifndef CAKE_OBSERVATIONS_HPP
#define CAKE_OBSERVATIONS_HPP

#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "errors.hpp"

namespace cake {

/// Axis-aligned search box.
struct Box {
    Eigen::VectorXd lower;
    Eigen::VectorXd upper;

    Box() = default;
    Box(Eigen::VectorXd lo, Eigen::VectorXd hi) : lower(std::move(lo)), upper(std::move(hi))
    {
        if (lower.size() != upper.size() || lower.size() == 0) {
            throw DimensionMismatch("box bounds must be non-empty and of equal length");
        }
        for (Eigen::Index i = 0; i < lower.size(); ++i) {
            if (!std::isfinite(lower[i]) || !std::isfinite(upper[i]) || !(lower[i] < upper[i])) {
                throw DimensionMismatch("box bound " + std::to_string(i) + " is empty or not finite");
            }
        }
    }

    static Box cube(int d, double lo, double hi)
    {
        return {Eigen::VectorXd::Constant(d, lo), Eigen::VectorXd::Constant(d, hi)};
    }

    [[nodiscard]] int dim() const noexcept { return static_cast<int>(lower.size()); }
    [[nodiscard]] Eigen::VectorXd width() const { return upper - lower; }

    [[nodiscard]] bool contains(const Eigen::VectorXd& x, double tol = 1e-12) const
    {
        if (x.size() != lower.size()) { return false; }
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            const double slack = tol * std::max(1.0, upper[i] - lower[i]);
            if (!(x[i] >= lower[i] - slack && x[i] <= upper[i] + slack)) { return false; }
        }
        return true;
    }

    /// Maps a point of the unit cube into the box.
    [[nodiscard]] Eigen::VectorXd from_unit(const Eigen::VectorXd& u) const
    {
        return lower + (u.array() * width().array()).matrix();
    }

    [[nodiscard]] Eigen::VectorXd to_unit(const Eigen::VectorXd& x) const
    {
        return ((x - lower).array() / width().array()).matrix();
    }

    [[nodiscard]] Eigen::VectorXd clamp(Eigen::VectorXd x) const
    {
        return x.cwiseMax(lower).cwiseMin(upper);
    }
};

/// Running dataset {(x_i, y_i)} in problem units.
class Observations {
public:
    explicit Observations(Box box) : box_(std::move(box)), X_(0, box_.dim()), y_(0) {}

    Observations(Box box, Eigen::MatrixXd X, Eigen::VectorXd y) : Observations(std::move(box))
    {
        if (X.rows() != y.size() || X.cols() != box_.dim()) {
            throw DimensionMismatch("observation matrix shape does not match targets or box");
        }
        for (Eigen::Index i = 0; i < X.rows(); ++i) { add(X.row(i).transpose(), y[i]); }
    }

    void add(const Eigen::VectorXd& x, double y)
    {
        if (x.size() != box_.dim()) { throw DimensionMismatch("observation has wrong dimensionality"); }
        if (!x.allFinite() || !std::isfinite(y)) { throw ObjectiveError("non-finite observation"); }
        if (!box_.contains(x)) { throw OutOfDomain("observation lies outside the search box"); }
        X_.conservativeResize(X_.rows() + 1, Eigen::NoChange);
        X_.row(X_.rows() - 1) = x.transpose();
        y_.conservativeResize(y_.size() + 1);
        y_[y_.size() - 1] = y;
    }

    [[nodiscard]] const Box& box() const noexcept { return box_; }
    [[nodiscard]] const Eigen::MatrixXd& X() const noexcept { return X_; }
    [[nodiscard]] const Eigen::VectorXd& y() const noexcept { return y_; }
    [[nodiscard]] int size() const noexcept { return static_cast<int>(y_.size()); }
    [[nodiscard]] int dim() const noexcept { return box_.dim(); }
    [[nodiscard]] bool empty() const noexcept { return y_.size() == 0; }

private:
    Box box_;
    Eigen::MatrixXd X_;
    Eigen::VectorXd y_;
};

} // namespace cake

#endif
