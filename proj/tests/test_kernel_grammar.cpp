// SPDX-License-Identifier: Apache-2.0

#include <map>
#include <set>

#include <gtest/gtest.h>

#include "cake/gp.hpp"
#include "cake/kernel_grammar.hpp"

using namespace cake;

namespace {

KernelExpr L(BaseKernel k) { return KernelExpr::leaf(k); }

const auto SE = BaseKernel::SE;
const auto PER = BaseKernel::PER;
const auto LIN = BaseKernel::LIN;
const auto RQ = BaseKernel::RQ;

} // namespace

TEST(Parse, NestedExampleSubexpression)
{
    EXPECT_EQ(parse("LIN + (PER * SE)"), KernelExpr::add(L(LIN), KernelExpr::mul(L(PER), L(SE))));
}

TEST(Parse, SingleLeaf) { EXPECT_EQ(parse("SE"), L(SE)); }

TEST(Parse, ProductBindsTighter)
{
    EXPECT_EQ(parse("SE + PER * LIN"), KernelExpr::add(L(SE), KernelExpr::mul(L(PER), L(LIN))));
}

TEST(Parse, LeftAssociative)
{
    EXPECT_EQ(parse("SE + PER + LIN"), KernelExpr::add(KernelExpr::add(L(SE), L(PER)), L(LIN)));
    EXPECT_EQ(parse("SE * PER * LIN"), KernelExpr::mul(KernelExpr::mul(L(SE), L(PER)), L(LIN)));
}

TEST(Parse, UnicodeTimesIsProduct)
{
    EXPECT_EQ(parse("PER \xC3\x97 SE"), parse("PER * SE"));
}

TEST(Parse, DimensionSubscript)
{
    const auto e = parse("SE[1] * LIN");
    EXPECT_EQ(e.left().dim(), 1);
    EXPECT_FALSE(e.right().dim().has_value());
    EXPECT_EQ(print(e), "SE[1] * LIN");
}

TEST(Parse, Errors)
{
    EXPECT_THROW(parse("SE +"), SyntaxError);
    EXPECT_THROW(parse("(SE + PER"), SyntaxError);
    EXPECT_THROW(parse("SE PER"), SyntaxError);
    EXPECT_THROW(parse(""), SyntaxError);
    EXPECT_THROW(parse("SE[]"), SyntaxError);
    EXPECT_THROW(parse("RBF"), UnknownKernel);
    EXPECT_THROW(parse("se"), UnknownKernel);
    EXPECT_THROW(parse("M1 + SE"), UnknownKernel);
    EXPECT_THROW(parse("SE * (PER + (LIN * (RQ + (M3 * M5))))"), DepthExceeded);
    EXPECT_NO_THROW(parse("SE * (PER + (LIN * (RQ + M3)))"));

    try {
        parse("SE + * PER");
        FAIL();
    } catch (const SyntaxError& e) {
        EXPECT_EQ(e.position(), 5U);
    }
}

TEST(Print, MinimalParentheses)
{
    EXPECT_EQ(print(KernelExpr::add(L(LIN), KernelExpr::mul(L(PER), L(SE)))), "LIN + PER * SE");
    EXPECT_EQ(print(L(SE)), "SE");
    EXPECT_EQ(print(KernelExpr::mul(KernelExpr::add(L(SE), L(PER)), L(LIN))), "(SE + PER) * LIN");
    EXPECT_EQ(print(KernelExpr::add(L(SE), KernelExpr::add(L(PER), L(LIN)))), "SE + (PER + LIN)");
}

TEST(ParamCount, PerLeafPlusNoise)
{
    EXPECT_EQ(param_count(L(SE)), 3);
    EXPECT_EQ(param_count(parse("SE + PER")), 6);
    EXPECT_EQ(param_count(L(LIN)), 3);
    EXPECT_EQ(param_count(parse("RQ * M3 + M5")), 3 + 2 + 2 + 1);
}

TEST(ParamCount, AdditiveOverOperators)
{
    Rng rng(3);
    for (int i = 0; i < 200; ++i) {
        const auto e = random_expr(rng, 4);
        if (e.is_leaf()) { continue; }
        EXPECT_EQ(param_count(e), param_count(e.left()) + param_count(e.right()) - 1);
    }
}

TEST(HyperparamSpec, PriorsAndLayout)
{
    const auto spec = hyperparam_spec(parse("PER + LIN"));
    ASSERT_EQ(spec.size(), 6U);
    EXPECT_EQ(spec[0].name, "PER.lengthscale");
    EXPECT_EQ(spec[2].name, "PER.period");
    EXPECT_DOUBLE_EQ(spec[0].prior.shape, 2.0);
    EXPECT_DOUBLE_EQ(spec[0].prior.rate, 2.0);
    EXPECT_DOUBLE_EQ(spec[1].prior.rate, 3.0);
    EXPECT_EQ(spec[3].role, ParamRole::Variance);
    EXPECT_EQ(spec[4].role, ParamRole::Offset);
    EXPECT_DOUBLE_EQ(spec[4].prior.rate, 3.0);
    EXPECT_EQ(spec[5].role, ParamRole::Noise);
}

TEST(Expand, FirstLevelOfGrammarHas48Kernels)
{
    // Oracle: unordered pairs {a, b} with repetition, two operators, plus the
    // six bases themselves: 6 + 2 * C(6 + 1, 2).
    std::set<std::string> oracle;
    for (auto a : kBaseKernels) {
        oracle.insert(std::string(to_string(a)));
        for (auto b : kBaseKernels) {
            auto lo = std::min(to_string(a), to_string(b));
            auto hi = std::max(to_string(a), to_string(b));
            oracle.insert(std::string(lo) + " + " + std::string(hi));
            oracle.insert(std::string(lo) + " * " + std::string(hi));
        }
    }
    ASSERT_EQ(oracle.size(), 48U);

    std::set<std::string> level1;
    for (auto b : kBaseKernels) {
        for (const auto& e : expand(L(b))) { level1.insert(canonical_key(e)); }
    }
    EXPECT_EQ(level1, oracle);
}

TEST(Expand, SingletonBaseSet)
{
    const std::array<BaseKernel, 1> only{SE};
    const auto out = expand(L(SE), only);
    ASSERT_EQ(out.size(), 2U);
    EXPECT_EQ(out[0], parse("SE + SE"));
    EXPECT_EQ(out[1], parse("SE * SE"));
}

TEST(Expand, CompositeProductions)
{
    const auto base = parse("SE + PER");
    std::set<std::string> keys;
    for (const auto& e : expand(base)) { keys.insert(canonical_key(e)); }
    EXPECT_TRUE(keys.count(canonical_key(parse("(SE + PER) * LIN"))));
    EXPECT_TRUE(keys.count(canonical_key(parse("LIN + (SE + PER)"))));
    EXPECT_TRUE(keys.count(canonical_key(parse("LIN + PER"))));
    EXPECT_FALSE(keys.count(canonical_key(base)));
    // 12 compositions + 2 leaves * 5 replacements, all distinct
    EXPECT_EQ(keys.size(), 22U);
}

TEST(Expand, DropsResultsBeyondMaxDepth)
{
    const auto e = parse("SE * (PER + (LIN * (RQ + M3)))");
    for (const auto& c : expand(e)) { EXPECT_LE(c.depth(), kDefaultMaxDepth); }
    EXPECT_EQ(expand(e).size(), 5U * 5U); // replacements only
}

TEST(Canonical, CommutativeAtEveryNode)
{
    EXPECT_EQ(canonical_key(parse("PER + SE")), canonical_key(parse("SE + PER")));
    EXPECT_EQ(canonical_key(parse("LIN * (PER + SE)")), canonical_key(parse("(SE + PER) * LIN")));
    EXPECT_NE(canonical_key(parse("SE + PER")), canonical_key(parse("SE * PER")));
}

TEST(RandomExpr, DepthOneIsLeaf)
{
    Rng rng(1);
    for (int i = 0; i < 100; ++i) { EXPECT_TRUE(random_expr(rng, 1).is_leaf()); }
}

TEST(RandomExpr, Deterministic)
{
    Rng a(42);
    Rng b(42);
    for (int i = 0; i < 50; ++i) { EXPECT_EQ(random_expr(a, 5), random_expr(b, 5)); }
}

TEST(RandomExpr, CoversAllBasesAndRespectsDepth)
{
    Rng rng(7);
    std::set<BaseKernel> seen;
    for (int i = 0; i < 10000; ++i) {
        const auto e = random_expr(rng, 3);
        ASSERT_LE(e.depth(), 3);
        for (const auto& lf : leaves(e)) { seen.insert(lf.base()); }
    }
    EXPECT_EQ(seen.size(), 6U);
}

TEST(RoundTrip, ThousandRandomExpressions)
{
    Rng rng(2024);
    for (int i = 0; i < 1000; ++i) {
        const auto e = random_expr(rng, 5);
        ASSERT_EQ(parse(print(e)), e) << print(e);
    }
}

TEST(Validate, DimensionAndDepth)
{
    EXPECT_NO_THROW(validate(parse("SE[1]"), 2));
    EXPECT_THROW(validate(parse("SE[2]"), 2), InvalidKernel);
    EXPECT_FALSE(is_valid(parse("SE * (PER + LIN)"), 1, 2));
}

TEST(SubtreeEditing, ReplaceLeafAndSubtree)
{
    const auto e = parse("SE + PER * LIN");
    EXPECT_EQ(replace_leaf(e, 1, RQ), parse("SE + RQ * LIN"));
    EXPECT_EQ(replace_subtree(e, 2, L(RQ)), parse("SE + RQ"));
    EXPECT_EQ(replace_subtree(e, 0, L(RQ)), L(RQ));
    EXPECT_EQ(subtrees(e).size(), 5U);
    EXPECT_EQ(subtrees(e)[3].second, 3);
}

// Every grammar expression with prior-drawn hyperparameters is a valid
// covariance: its Gram matrix admits a Cholesky factor with tiny jitter.
TEST(Closure, RandomExpressionsArePositiveSemidefinite)
{
    Rng rng(99);
    std::uniform_real_distribution<double> coord(-5.0, 5.0);
    for (int trial = 0; trial < 100; ++trial) {
        const int d = 1 + trial % 3;
        const auto e = random_expr(rng, 3);
        const auto spec = hyperparam_spec(e);
        Eigen::VectorXd v(static_cast<Eigen::Index>(spec.size()));
        for (std::size_t i = 0; i < spec.size(); ++i) {
            v[static_cast<Eigen::Index>(i)] =
                std::gamma_distribution<double>(spec[i].prior.shape, 1.0 / spec[i].prior.rate)(rng);
        }
        Eigen::MatrixXd X(20, d);
        for (Eigen::Index i = 0; i < X.size(); ++i) { X.data()[i] = coord(rng); }
        Eigen::MatrixXd K = gram(e, Hyperparams::from_values(v), X, X);
        bool ok = false;
        for (double jitter : {0.0, 1e-10, 1e-8, 1e-6}) {
            Eigen::MatrixXd Kj = K;
            Kj.diagonal().array() += jitter;
            if (Eigen::LLT<Eigen::MatrixXd>(Kj).info() == Eigen::Success) {
                ok = true;
                break;
            }
        }
        EXPECT_TRUE(ok) << print(e);
    }
}
