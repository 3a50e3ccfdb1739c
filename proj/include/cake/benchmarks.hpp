// SPDX-License-Identifier: Apache-2.0

#ifndef CAKE_BENCHMARKS_HPP
#define CAKE_BENCHMARKS_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "errors.hpp"
#include "observations.hpp"

namespace cake {

/// A synthetic objective to be minimized over `box`.
struct Benchmark {
    std::string name;
    Box box;
    double f_opt = 0.0;       // minimum over the box
    Eigen::VectorXd x_opt;    // a minimizer inside the box
    std::function<double(const Eigen::VectorXd&)> fn;

    [[nodiscard]] int dim() const noexcept { return box.dim(); }

    [[nodiscard]] double evaluate(const Eigen::VectorXd& x) const
    {
        if (!box.contains(x)) { throw OutOfDomain(name + ": point outside the domain"); }
        return fn(x);
    }
};

namespace fn {

constexpr double pi = std::numbers::pi;

inline double ackley(const Eigen::VectorXd& x)
{
    const double d = static_cast<double>(x.size());
    const double s1 = x.squaredNorm() / d;
    const double s2 = (2.0 * pi * x.array()).cos().sum() / d;
    return -20.0 * std::exp(-0.2 * std::sqrt(s1)) - std::exp(s2) + 20.0 + std::numbers::e;
}

inline double beale(const Eigen::VectorXd& x)
{
    const double a = x[0];
    const double b = x[1];
    return std::pow(1.5 - a + a * b, 2) + std::pow(2.25 - a + a * b * b, 2) + std::pow(2.625 - a + a * b * b * b, 2);
}

inline double branin(const Eigen::VectorXd& x)
{
    const double b = 5.1 / (4.0 * pi * pi);
    const double c = 5.0 / pi;
    const double t = 1.0 / (8.0 * pi);
    return std::pow(x[1] - b * x[0] * x[0] + c * x[0] - 6.0, 2) + 10.0 * (1.0 - t) * std::cos(x[0]) + 10.0;
}

inline double dropwave(const Eigen::VectorXd& x)
{
    const double r2 = x.squaredNorm();
    return -(1.0 + std::cos(12.0 * std::sqrt(r2))) / (0.5 * r2 + 2.0);
}

inline double eggholder(const Eigen::VectorXd& x)
{
    const double a = x[0];
    const double b = x[1] + 47.0;
    return -b * std::sin(std::sqrt(std::abs(b + a / 2.0))) - a * std::sin(std::sqrt(std::abs(a - b)));
}

inline double griewank(const Eigen::VectorXd& x)
{
    double prod = 1.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) { prod *= std::cos(x[i] / std::sqrt(static_cast<double>(i + 1))); }
    return x.squaredNorm() / 4000.0 - prod + 1.0;
}

inline double hartmann3(const Eigen::VectorXd& x)
{
    static const double alpha[4] = {1.0, 1.2, 3.0, 3.2};
    static const double A[4][3] = {{3.0, 10.0, 30.0}, {0.1, 10.0, 35.0}, {3.0, 10.0, 30.0}, {0.1, 10.0, 35.0}};
    static const double P[4][3] = {
        {0.3689, 0.1170, 0.2673}, {0.4699, 0.4387, 0.7470}, {0.1091, 0.8732, 0.5547}, {0.0381, 0.5743, 0.8828}};
    double s = 0.0;
    for (int i = 0; i < 4; ++i) {
        double inner = 0.0;
        for (int j = 0; j < 3; ++j) { inner += A[i][j] * std::pow(x[j] - P[i][j], 2); }
        s += alpha[i] * std::exp(-inner);
    }
    return -s;
}

inline double levy(const Eigen::VectorXd& x)
{
    const Eigen::Index d = x.size();
    auto w = [&](Eigen::Index i) { return 1.0 + (x[i] - 1.0) / 4.0; };
    double s = std::pow(std::sin(pi * w(0)), 2);
    for (Eigen::Index i = 0; i + 1 < d; ++i) {
        s += std::pow(w(i) - 1.0, 2) * (1.0 + 10.0 * std::pow(std::sin(pi * w(i) + 1.0), 2));
    }
    const double wd = w(d - 1);
    return s + std::pow(wd - 1.0, 2) * (1.0 + std::pow(std::sin(2.0 * pi * wd), 2));
}

inline double rastrigin(const Eigen::VectorXd& x)
{
    return 10.0 * static_cast<double>(x.size()) + (x.array().square() - 10.0 * (2.0 * pi * x.array()).cos()).sum();
}

inline double rosenbrock(const Eigen::VectorXd& x)
{
    double s = 0.0;
    for (Eigen::Index i = 0; i + 1 < x.size(); ++i) {
        s += 100.0 * std::pow(x[i + 1] - x[i] * x[i], 2) + std::pow(x[i] - 1.0, 2);
    }
    return s;
}

inline double sixhumpcamel(const Eigen::VectorXd& x)
{
    const double a = x[0];
    const double b = x[1];
    return (4.0 - 2.1 * a * a + std::pow(a, 4) / 3.0) * a * a + a * b + (-4.0 + 4.0 * b * b) * b * b;
}

} // namespace fn

namespace detail {

inline Eigen::VectorXd vec(std::initializer_list<double> v)
{
    Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double e : v) { out[i++] = e; }
    return out;
}

inline Benchmark cube_benchmark(std::string name, int d, double lo, double hi, double f_opt, double x_opt,
                                double (*f)(const Eigen::VectorXd&))
{
    return {std::move(name), Box::cube(d, lo, hi), f_opt, Eigen::VectorXd::Constant(d, x_opt), f};
}

inline std::map<std::string, Benchmark> make_registry()
{
    std::map<std::string, Benchmark> r;
    auto put = [&](Benchmark b) { r.emplace(b.name, std::move(b)); };
    put(cube_benchmark("ackley2", 2, -5.0, 5.0, 0.0, 0.0, fn::ackley));
    put(cube_benchmark("ackley5", 5, -5.0, 5.0, 0.0, 0.0, fn::ackley));
    // The domain excludes the global minimizer (3, 0.5); the in-box minimum
    // sits on the edge x1 = 1.
    put({"beale", Box::cube(2, -1.0, 1.0), 4.368527115970509, vec({1.0, -0.18816236}), fn::beale});
    put(cube_benchmark("branin", 2, -5.0, 10.0, 0.39788735772973816, 0.0, fn::branin));
    r.at("branin").x_opt = vec({std::numbers::pi, 2.275});
    put(cube_benchmark("dropwave", 2, -5.12, 5.12, -1.0, 0.0, fn::dropwave));
    put({"eggholder", Box::cube(2, -512.0, 512.0), -959.6406627208506, vec({512.0, 404.2318050}), fn::eggholder});
    put(cube_benchmark("griewank2", 2, -600.0, 600.0, 0.0, 0.0, fn::griewank));
    put(cube_benchmark("griewank5", 5, -600.0, 600.0, 0.0, 0.0, fn::griewank));
    put({"hartmann3", Box::cube(3, 0.0, 1.0), -3.8627797869493365, vec({0.114614, 0.555649, 0.852547}),
         fn::hartmann3});
    put(cube_benchmark("levy2", 2, -10.0, 10.0, 0.0, 1.0, fn::levy));
    put(cube_benchmark("levy3", 3, -10.0, 10.0, 0.0, 1.0, fn::levy));
    put(cube_benchmark("rastrigin2", 2, -5.12, 5.12, 0.0, 0.0, fn::rastrigin));
    put(cube_benchmark("rastrigin4", 4, -5.12, 5.12, 0.0, 0.0, fn::rastrigin));
    put({"rosenbrock", Box::cube(2, -5.0, 10.0), 0.0, vec({1.0, 1.0}), fn::rosenbrock});
    put({"sixhumpcamel", Box(vec({-3.0, -2.0}), vec({3.0, 2.0})), -1.031628453489877, vec({0.0898420, -0.7126564}),
         fn::sixhumpcamel});
    return r;
}

} // namespace detail

inline const std::map<std::string, Benchmark>& benchmark_registry()
{
    static const auto registry = detail::make_registry();
    return registry;
}

inline std::vector<std::string> benchmark_names()
{
    std::vector<std::string> out;
    for (const auto& [k, _] : benchmark_registry()) { out.push_back(k); }
    return out;
}

inline const Benchmark& get_benchmark(const std::string& name)
{
    const auto& r = benchmark_registry();
    const auto it = r.find(name);
    if (it == r.end()) { throw UnknownBenchmark("unknown benchmark '" + name + "'"); }
    return it->second;
}

inline double evaluate(const std::string& name, const Eigen::VectorXd& x) { return get_benchmark(name).evaluate(x); }

struct Metric {
    double value = 0.0;
    bool degenerate = false;
};

/// (f_opt - f_best) / (f_opt - f_init) clamped to [0, 1]. A degenerate initial
/// design (f_init == f_opt) reports 0 with the flag set.
inline Metric normalized_regret(double f_init, double f_best, double f_opt)
{
    if (f_init == f_opt) { return {0.0, true}; }
    return {std::clamp((f_opt - f_best) / (f_opt - f_init), 0.0, 1.0), false};
}

/// (f_t - f_0) / (f_star - f_0); reports 1 with the flag set when f_star == f_0.
inline Metric normalized_improvement(double f_0, double f_t, double f_star)
{
    if (f_star == f_0) { return {1.0, true}; }
    return {(f_t - f_0) / (f_star - f_0), false};
}

} // namespace cake

#endif
