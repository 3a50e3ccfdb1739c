// SPDX-License-Identifier: Apache-2.0

#ifndef CAKE_KERNEL_GRAMMAR_HPP
#define CAKE_KERNEL_GRAMMAR_HPP

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "errors.hpp"
#include "random.hpp"

namespace cake {

inline constexpr int kDefaultMaxDepth = 5;

enum class BaseKernel : std::uint8_t { SE, PER, LIN, RQ, M3, M5 };

inline constexpr std::array<BaseKernel, 6> kBaseKernels{
    BaseKernel::SE, BaseKernel::PER, BaseKernel::LIN, BaseKernel::RQ, BaseKernel::M3, BaseKernel::M5};

constexpr std::string_view to_string(BaseKernel kind) noexcept
{
    switch (kind) {
    case BaseKernel::SE: return "SE";
    case BaseKernel::PER: return "PER";
    case BaseKernel::LIN: return "LIN";
    case BaseKernel::RQ: return "RQ";
    case BaseKernel::M3: return "M3";
    case BaseKernel::M5: return "M5";
    }
    return "?";
}

inline std::optional<BaseKernel> base_kernel_from_string(std::string_view name) noexcept
{
    for (auto kind : kBaseKernels) {
        if (to_string(kind) == name) { return kind; }
    }
    return std::nullopt;
}

enum class Op : std::uint8_t { Add, Mul };

// Immutable binary expression tree. Copies share structure, so passing by
// value is cheap and instances may be shared freely across threads.
class KernelExpr {
public:
    static KernelExpr leaf(BaseKernel kind, std::optional<int> dim = std::nullopt);
    static KernelExpr combine(Op op, KernelExpr lhs, KernelExpr rhs);
    static KernelExpr add(KernelExpr lhs, KernelExpr rhs) { return combine(Op::Add, std::move(lhs), std::move(rhs)); }
    static KernelExpr mul(KernelExpr lhs, KernelExpr rhs) { return combine(Op::Mul, std::move(lhs), std::move(rhs)); }

    [[nodiscard]] bool is_leaf() const noexcept;
    [[nodiscard]] BaseKernel base() const;
    [[nodiscard]] std::optional<int> dim() const;
    [[nodiscard]] Op op() const;
    [[nodiscard]] const KernelExpr& left() const;
    [[nodiscard]] const KernelExpr& right() const;

    /// A single leaf has depth 1.
    [[nodiscard]] int depth() const noexcept;
    [[nodiscard]] int leaf_count() const noexcept;
    [[nodiscard]] int node_count() const noexcept { return 2 * leaf_count() - 1; }

    friend bool operator==(const KernelExpr& a, const KernelExpr& b) noexcept;

private:
    struct Node;
    explicit KernelExpr(std::shared_ptr<const Node> node) : node_(std::move(node)) {}
    std::shared_ptr<const Node> node_;
};

struct KernelExpr::Node {
    bool leaf = true;
    BaseKernel kind = BaseKernel::SE;
    std::optional<int> dim;
    Op op = Op::Add;
    std::optional<KernelExpr> lhs;
    std::optional<KernelExpr> rhs;
    int depth = 1;
    int leaves = 1;
};

inline KernelExpr KernelExpr::leaf(BaseKernel kind, std::optional<int> dim)
{
    if (dim && *dim < 0) { throw InvalidKernel("dimension index must be non-negative"); }
    auto n = std::make_shared<Node>();
    n->kind = kind;
    n->dim = dim;
    return KernelExpr(std::move(n));
}

inline KernelExpr KernelExpr::combine(Op op, KernelExpr lhs, KernelExpr rhs)
{
    auto n = std::make_shared<Node>();
    n->leaf = false;
    n->op = op;
    n->depth = 1 + std::max(lhs.depth(), rhs.depth());
    n->leaves = lhs.leaf_count() + rhs.leaf_count();
    n->lhs = std::move(lhs);
    n->rhs = std::move(rhs);
    return KernelExpr(std::move(n));
}

inline bool KernelExpr::is_leaf() const noexcept { return node_->leaf; }
inline int KernelExpr::depth() const noexcept { return node_->depth; }
inline int KernelExpr::leaf_count() const noexcept { return node_->leaves; }

inline BaseKernel KernelExpr::base() const
{
    if (!is_leaf()) { throw InvalidKernel("base() called on an operator node"); }
    return node_->kind;
}

inline std::optional<int> KernelExpr::dim() const
{
    if (!is_leaf()) { throw InvalidKernel("dim() called on an operator node"); }
    return node_->dim;
}

inline Op KernelExpr::op() const
{
    if (is_leaf()) { throw InvalidKernel("op() called on a leaf"); }
    return node_->op;
}

inline const KernelExpr& KernelExpr::left() const
{
    if (is_leaf()) { throw InvalidKernel("left() called on a leaf"); }
    return *node_->lhs;
}

inline const KernelExpr& KernelExpr::right() const
{
    if (is_leaf()) { throw InvalidKernel("right() called on a leaf"); }
    return *node_->rhs;
}

inline bool operator==(const KernelExpr& a, const KernelExpr& b) noexcept
{
    if (a.node_ == b.node_) { return true; }
    if (a.node_->leaf != b.node_->leaf) { return false; }
    if (a.node_->leaf) { return a.node_->kind == b.node_->kind && a.node_->dim == b.node_->dim; }
    return a.node_->op == b.node_->op && *a.node_->lhs == *b.node_->lhs && *a.node_->rhs == *b.node_->rhs;
}

// ---------------------------------------------------------------------------
// Hyperparameter bookkeeping

struct GammaPrior {
    double shape;
    double rate;

    [[nodiscard]] double mean() const noexcept { return shape / rate; }

    [[nodiscard]] double log_pdf(double v) const noexcept
    {
        if (!(v > 0.0)) { return -INFINITY; }
        return shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * std::log(v) - rate * v;
    }

    /// d log_pdf / d v
    [[nodiscard]] double dlog_pdf(double v) const noexcept { return (shape - 1.0) / v - rate; }
};

inline constexpr GammaPrior kScalePrior{2.0, 2.0};    // lengthscale, period, alpha
inline constexpr GammaPrior kVariancePrior{2.0, 3.0}; // amplitude, offset variance
inline constexpr GammaPrior kNoisePrior{1.1, 10.0};

enum class ParamRole : std::uint8_t { Lengthscale, Variance, Period, Alpha, Offset, Noise };

struct ParamInfo {
    ParamRole role;
    std::string name;
    GammaPrior prior;
};

/// Per-leaf parameter layout; the order here is the order used in every
/// parameter vector throughout the library.
inline std::vector<ParamInfo> leaf_params(BaseKernel kind)
{
    const auto tag = std::string(to_string(kind));
    const ParamInfo len{ParamRole::Lengthscale, tag + ".lengthscale", kScalePrior};
    const ParamInfo var{ParamRole::Variance, tag + ".variance", kVariancePrior};
    switch (kind) {
    case BaseKernel::SE:
    case BaseKernel::M3:
    case BaseKernel::M5: return {len, var};
    case BaseKernel::PER: return {len, var, {ParamRole::Period, tag + ".period", kScalePrior}};
    case BaseKernel::LIN: return {var, {ParamRole::Offset, tag + ".offset", kVariancePrior}};
    case BaseKernel::RQ: return {len, var, {ParamRole::Alpha, tag + ".alpha", kScalePrior}};
    }
    return {};
}

constexpr int leaf_param_count(BaseKernel kind) noexcept
{
    return (kind == BaseKernel::PER || kind == BaseKernel::RQ) ? 3 : 2;
}

namespace detail {
inline void collect_leaves(const KernelExpr& e, std::vector<KernelExpr>& out)
{
    if (e.is_leaf()) {
        out.push_back(e);
        return;
    }
    collect_leaves(e.left(), out);
    collect_leaves(e.right(), out);
}

inline void collect_preorder(const KernelExpr& e, int depth, std::vector<std::pair<KernelExpr, int>>& out)
{
    out.emplace_back(e, depth);
    if (e.is_leaf()) { return; }
    collect_preorder(e.left(), depth + 1, out);
    collect_preorder(e.right(), depth + 1, out);
}
} // namespace detail

/// Leaves in left-to-right order.
inline std::vector<KernelExpr> leaves(const KernelExpr& e)
{
    std::vector<KernelExpr> out;
    out.reserve(static_cast<std::size_t>(e.leaf_count()));
    detail::collect_leaves(e, out);
    return out;
}

/// Every subtree in preorder, paired with the level it sits at (root = 1).
inline std::vector<std::pair<KernelExpr, int>> subtrees(const KernelExpr& e)
{
    std::vector<std::pair<KernelExpr, int>> out;
    detail::collect_preorder(e, 1, out);
    return out;
}

/// Parameter layout of a whole expression: leaves left to right, then the
/// shared observation-noise variance last.
inline std::vector<ParamInfo> hyperparam_spec(const KernelExpr& e)
{
    std::vector<ParamInfo> out;
    for (const auto& lf : leaves(e)) {
        auto ps = leaf_params(lf.base());
        out.insert(out.end(), ps.begin(), ps.end());
    }
    out.push_back({ParamRole::Noise, "noise", kNoisePrior});
    return out;
}

inline int param_count(const KernelExpr& e)
{
    int count = 1;
    for (const auto& lf : leaves(e)) { count += leaf_param_count(lf.base()); }
    return count;
}

// ---------------------------------------------------------------------------
// Printing

namespace detail {
inline int precedence(const KernelExpr& e) noexcept
{
    if (e.is_leaf()) { return 3; }
    return e.op() == Op::Mul ? 2 : 1;
}

inline void print_into(const KernelExpr& e, std::string& out)
{
    if (e.is_leaf()) {
        out += to_string(e.base());
        if (auto d = e.dim()) { out += "[" + std::to_string(*d) + "]"; }
        return;
    }
    const int prec = precedence(e);
    // left-associative: a right child of equal precedence needs parentheses
    const auto child = [&](const KernelExpr& c, bool right) {
        const int cp = precedence(c);
        const bool parens = cp < prec || (right && cp == prec);
        if (parens) { out += '('; }
        print_into(c, out);
        if (parens) { out += ')'; }
    };
    child(e.left(), false);
    out += e.op() == Op::Add ? " + " : " * ";
    child(e.right(), true);
}
} // namespace detail

inline std::string print(const KernelExpr& e)
{
    std::string out;
    detail::print_into(e, out);
    return out;
}

// ---------------------------------------------------------------------------
// Parsing

namespace detail {

class Parser {
public:
    Parser(std::string_view text, int max_depth) : text_(text), max_depth_(max_depth) {}

    KernelExpr run()
    {
        skip_ws();
        if (pos_ >= text_.size()) { throw SyntaxError(pos_, "kernel expression"); }
        auto e = expr();
        skip_ws();
        if (pos_ != text_.size()) { throw SyntaxError(pos_, "'+', '*' or end of input"); }
        if (e.depth() > max_depth_) {
            throw DepthExceeded("expression depth " + std::to_string(e.depth()) + " exceeds maximum " +
                                std::to_string(max_depth_));
        }
        return e;
    }

private:
    KernelExpr expr()
    {
        auto lhs = term();
        while (true) {
            skip_ws();
            if (!consume("+")) { break; }
            lhs = KernelExpr::add(std::move(lhs), term());
        }
        return lhs;
    }

    KernelExpr term()
    {
        auto lhs = factor();
        while (true) {
            skip_ws();
            if (!consume("*") && !consume("\xC3\x97")) { break; } // U+00D7
            lhs = KernelExpr::mul(std::move(lhs), factor());
        }
        return lhs;
    }

    KernelExpr factor()
    {
        skip_ws();
        if (pos_ >= text_.size()) { throw SyntaxError(pos_, "base kernel or '('"); }
        if (consume("(")) {
            auto inner = expr();
            skip_ws();
            if (!consume(")")) { throw SyntaxError(pos_, "')'"); }
            return inner;
        }
        const auto start = pos_;
        while (pos_ < text_.size() && (std::isalnum(static_cast<unsigned char>(text_[pos_])) != 0 || text_[pos_] == '_')) {
            ++pos_;
        }
        if (pos_ == start) { throw SyntaxError(pos_, "base kernel or '('"); }
        const auto token = text_.substr(start, pos_ - start);
        auto kind = base_kernel_from_string(token);
        if (!kind) { throw UnknownKernel(std::string(token)); }

        std::optional<int> dim;
        skip_ws();
        if (consume("[")) {
            skip_ws();
            const auto digits = pos_;
            while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_])) != 0) { ++pos_; }
            if (pos_ == digits || pos_ - digits > 6) { throw SyntaxError(digits, "dimension index"); }
            dim = std::stoi(std::string(text_.substr(digits, pos_ - digits)));
            skip_ws();
            if (!consume("]")) { throw SyntaxError(pos_, "']'"); }
        }
        return KernelExpr::leaf(*kind, dim);
    }

    void skip_ws()
    {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_])) != 0) { ++pos_; }
    }

    bool consume(std::string_view tok)
    {
        if (text_.substr(pos_, tok.size()) == tok) {
            pos_ += tok.size();
            return true;
        }
        return false;
    }

    std::string_view text_;
    int max_depth_;
    std::size_t pos_ = 0;
};

} // namespace detail

/// Parses the textual kernel language. `*` and `×` both denote a product;
/// products bind tighter than sums and both associate to the left.
inline KernelExpr parse(std::string_view text, int max_depth = kDefaultMaxDepth)
{
    return detail::Parser(text, max_depth).run();
}

/// Throws if the expression exceeds `max_depth` or indexes a dimension that
/// does not exist in a `dim`-dimensional problem.
inline void validate(const KernelExpr& e, int dim, int max_depth = kDefaultMaxDepth)
{
    if (e.depth() > max_depth) {
        throw DepthExceeded("expression depth " + std::to_string(e.depth()) + " exceeds maximum " +
                            std::to_string(max_depth));
    }
    for (const auto& lf : leaves(e)) {
        if (auto d = lf.dim(); d && *d >= dim) {
            throw InvalidKernel("dimension index " + std::to_string(*d) + " out of range for d=" + std::to_string(dim));
        }
    }
}

inline bool is_valid(const KernelExpr& e, int dim, int max_depth = kDefaultMaxDepth) noexcept
{
    try {
        validate(e, dim, max_depth);
        return true;
    } catch (const Error&) {
        return false;
    }
}

// ---------------------------------------------------------------------------
// Canonical form and structural editing

/// Children of every operator node ordered by printed form.
inline KernelExpr canonicalize(const KernelExpr& e)
{
    if (e.is_leaf()) { return e; }
    auto l = canonicalize(e.left());
    auto r = canonicalize(e.right());
    if (print(r) < print(l)) { std::swap(l, r); }
    return KernelExpr::combine(e.op(), std::move(l), std::move(r));
}

/// Identity key modulo commutativity; used for every duplicate check.
inline std::string canonical_key(const KernelExpr& e) { return print(canonicalize(e)); }

namespace detail {
inline KernelExpr replace_nth(const KernelExpr& e, int& counter, int target, const KernelExpr& replacement)
{
    if (counter == target) {
        ++counter;
        return replacement;
    }
    ++counter;
    if (e.is_leaf()) { return e; }
    auto l = replace_nth(e.left(), counter, target, replacement);
    auto r = replace_nth(e.right(), counter, target, replacement);
    return KernelExpr::combine(e.op(), std::move(l), std::move(r));
}

inline KernelExpr replace_leaf_nth(const KernelExpr& e, int& counter, int target, BaseKernel kind)
{
    if (e.is_leaf()) {
        return counter++ == target ? KernelExpr::leaf(kind, e.dim()) : e;
    }
    auto l = replace_leaf_nth(e.left(), counter, target, kind);
    auto r = replace_leaf_nth(e.right(), counter, target, kind);
    return KernelExpr::combine(e.op(), std::move(l), std::move(r));
}
} // namespace detail

/// Replaces the `index`-th subtree in preorder (root is 0).
inline KernelExpr replace_subtree(const KernelExpr& e, int index, const KernelExpr& replacement)
{
    int counter = 0;
    return detail::replace_nth(e, counter, index, replacement);
}

/// Replaces the kind of the `index`-th leaf (left to right); a dimension
/// subscript on that leaf is kept.
inline KernelExpr replace_leaf(const KernelExpr& e, int index, BaseKernel kind)
{
    int counter = 0;
    return detail::replace_leaf_nth(e, counter, index, kind);
}

/// One-step grammar productions: S + B, S * B for each base B, and every
/// single-leaf replacement B -> B'. Results are distinct modulo
/// commutativity, never equal to the input, and within `max_depth`.
inline std::vector<KernelExpr> expand(const KernelExpr& e, std::span<const BaseKernel> base_set,
                                      int max_depth = kDefaultMaxDepth)
{
    std::vector<KernelExpr> out;
    std::set<std::string> seen{canonical_key(e)};
    const auto push = [&](KernelExpr cand) {
        if (cand.depth() > max_depth) { return; }
        if (seen.insert(canonical_key(cand)).second) { out.push_back(std::move(cand)); }
    };
    for (auto b : base_set) {
        push(KernelExpr::add(e, KernelExpr::leaf(b)));
        push(KernelExpr::mul(e, KernelExpr::leaf(b)));
    }
    for (int i = 0; i < e.leaf_count(); ++i) {
        for (auto b : base_set) { push(replace_leaf(e, i, b)); }
    }
    return out;
}

inline std::vector<KernelExpr> expand(const KernelExpr& e, int max_depth = kDefaultMaxDepth)
{
    return expand(e, std::span<const BaseKernel>(kBaseKernels), max_depth);
}

namespace detail {
inline KernelExpr random_expr_impl(Rng& rng, int remaining, std::span<const BaseKernel> base_set)
{
    std::uniform_int_distribution<std::size_t> pick(0, base_set.size() - 1);
    if (remaining <= 1 || uniform01(rng) < 0.5) { return KernelExpr::leaf(base_set[pick(rng)]); }
    const Op op = uniform01(rng) < 0.5 ? Op::Add : Op::Mul;
    auto l = random_expr_impl(rng, remaining - 1, base_set);
    auto r = random_expr_impl(rng, remaining - 1, base_set);
    return KernelExpr::combine(op, std::move(l), std::move(r));
}
} // namespace detail

/// Random expression: each node stops as a uniformly chosen leaf with
/// probability 1/2 (always at `max_depth`), otherwise becomes a uniformly
/// chosen operator over two random children.
inline KernelExpr random_expr(Rng& rng, int max_depth, std::span<const BaseKernel> base_set = kBaseKernels)
{
    if (max_depth < 1) { throw InvalidKernel("max_depth must be at least 1"); }
    if (base_set.empty()) { throw InvalidKernel("empty base kernel set"); }
    return detail::random_expr_impl(rng, max_depth, base_set);
}

} // namespace cake

#endif
