// SPDX-License-Identifier: Apache-2.0

#ifndef CAKE_EVOLUTION_HPP
#define CAKE_EVOLUTION_HPP

#include <algorithm>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "errors.hpp"
#include "gp.hpp"
#include "kernel_grammar.hpp"
#include "prompt_context.hpp"
#include "random.hpp"

namespace cake {

struct ScoredKernel {
    KernelExpr expr;
    std::shared_ptr<const FittedModel> model; // null when the fit failed
    double raw_bic = std::numeric_limits<double>::infinity();
    double fitness = 0.0;
    std::string key; // canonical form, used for deduplication

    ScoredKernel(KernelExpr e, std::shared_ptr<const FittedModel> m, double bic)
        : expr(std::move(e)), model(std::move(m)), raw_bic(bic), key(canonical_key(expr))
    {
    }

    [[nodiscard]] std::string printed() const { return print(expr); }
};

using Fitter = std::function<ScoredKernel(const KernelExpr&)>;

/// Fits `expr` by MAP with a seed derived from (seed, stream, expression).
/// Failed fits score +inf and carry no model.
inline ScoredKernel fit_scored(const KernelExpr& expr, const Observations& data, std::uint64_t seed,
                               std::uint64_t stream = 0, const FitOptions& opt = {})
{
    Rng rng(derive_seed({seed, stream, stable_hash(canonical_key(expr))}));
    try {
        auto m = std::make_shared<const FittedModel>(fit_map(expr, data, rng, opt));
        const double b = m->bic;
        return {expr, std::move(m), std::isfinite(b) ? b : std::numeric_limits<double>::infinity()};
    } catch (const Error&) {
        return {expr, nullptr, std::numeric_limits<double>::infinity()};
    }
}

/// Min-max normalized negative BIC; non-finite entries get 0.
inline std::vector<double> normalize_fitness(const std::vector<double>& bics)
{
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (double b : bics) {
        if (std::isfinite(b)) {
            lo = std::min(lo, b);
            hi = std::max(hi, b);
        }
    }
    std::vector<double> out(bics.size(), 0.0);
    for (std::size_t i = 0; i < bics.size(); ++i) {
        if (!std::isfinite(bics[i])) { continue; }
        out[i] = hi > lo ? (hi - bics[i]) / (hi - lo) : 1.0;
    }
    return out;
}

/// Members sorted by fitness (descending), ties by lower BIC then printed form.
class Population {
public:
    explicit Population(int capacity = 10) : capacity_(capacity)
    {
        if (capacity < 1) { throw ConfigError("population capacity must be at least 1"); }
    }

    Population(std::vector<ScoredKernel> members, int capacity) : Population(capacity)
    {
        merge(std::move(members));
    }

    [[nodiscard]] const std::vector<ScoredKernel>& members() const noexcept { return members_; }
    [[nodiscard]] int size() const noexcept { return static_cast<int>(members_.size()); }
    [[nodiscard]] bool empty() const noexcept { return members_.empty(); }
    [[nodiscard]] int capacity() const noexcept { return capacity_; }
    [[nodiscard]] const ScoredKernel& fittest() const
    {
        if (members_.empty()) { throw EmptyPopulation("population is empty"); }
        return members_.front();
    }

    [[nodiscard]] bool contains_key(const std::string& key) const
    {
        return std::any_of(members_.begin(), members_.end(), [&](const ScoredKernel& s) { return s.key == key; });
    }

    /// Adds members, drops duplicate keys (first occurrence wins), renormalizes
    /// fitness over the merged pool and keeps the best `capacity` members.
    void merge(std::vector<ScoredKernel> extra)
    {
        for (auto& s : extra) {
            if (!contains_key(s.key)) { members_.push_back(std::move(s)); }
        }
        rescore();
    }

    /// Replaces every member by `fitter(expr)`, then renormalizes and truncates.
    void refit(const Fitter& fitter)
    {
        for (auto& s : members_) { s = fitter(s.expr); }
        rescore();
    }

    [[nodiscard]] double mean_fitness() const
    {
        if (members_.empty()) { return 0.0; }
        double s = 0.0;
        for (const auto& m : members_) { s += m.fitness; }
        return s / static_cast<double>(members_.size());
    }

private:
    void rescore()
    {
        std::vector<double> bics;
        bics.reserve(members_.size());
        for (const auto& m : members_) { bics.push_back(m.raw_bic); }
        const auto fit = normalize_fitness(bics);
        for (std::size_t i = 0; i < members_.size(); ++i) { members_[i].fitness = fit[i]; }
        std::stable_sort(members_.begin(), members_.end(), [](const ScoredKernel& a, const ScoredKernel& b) {
            if (a.fitness != b.fitness) { return a.fitness > b.fitness; }
            if (a.raw_bic != b.raw_bic) { return a.raw_bic < b.raw_bic; }
            return a.printed() < b.printed();
        });
        if (size() > capacity_) { members_.erase(members_.begin() + capacity_, members_.end()); }
    }

    int capacity_;
    std::vector<ScoredKernel> members_;
};

/// Two distinct members drawn without replacement with probability
/// proportional to fitness + 1e-3.
inline std::pair<const ScoredKernel*, const ScoredKernel*> sample_parents(const Population& pop, Rng& rng)
{
    constexpr double kFloor = 1e-3;
    if (pop.size() < 2) { throw EmptyPopulation("parent sampling needs at least two members"); }
    const auto& m = pop.members();
    std::vector<double> w;
    w.reserve(m.size());
    for (const auto& s : m) { w.push_back(s.fitness + kFloor); }
    auto draw = [&]() {
        double total = 0.0;
        for (double v : w) { total += v; }
        double u = uniform01(rng) * total;
        std::size_t i = 0;
        for (; i + 1 < w.size(); ++i) {
            if (u < w[i]) { break; }
            u -= w[i];
        }
        while (w[i] == 0.0) { i = (i + w.size() - 1) % w.size(); }
        return i;
    };
    const auto a = draw();
    w[a] = 0.0;
    const auto b = draw();
    return {&m[a], &m[b]};
}

/// Proposes kernels from parents. A nullopt or an invalid expression makes
/// the caller fall back to random recombination.
class GeneticOperator {
public:
    virtual ~GeneticOperator() = default;
    [[nodiscard]] virtual std::string name() const = 0;
    virtual std::optional<KernelExpr> crossover(const ScoredKernel& p1, const ScoredKernel& p2,
                                                const PromptContext& ctx, Rng& rng) = 0;
    virtual std::optional<KernelExpr> mutation(const ScoredKernel& fittest, const PromptContext& ctx, Rng& rng) = 0;
};

/// Random composition with + or *, and uniform leaf replacement.
class RandomOperator final : public GeneticOperator {
public:
    [[nodiscard]] std::string name() const override { return "random"; }

    std::optional<KernelExpr> crossover(const ScoredKernel& p1, const ScoredKernel& p2, const PromptContext&,
                                        Rng& rng) override
    {
        const Op op = uniform01(rng) < 0.5 ? Op::Add : Op::Mul;
        return KernelExpr::combine(op, p1.expr, p2.expr);
    }

    std::optional<KernelExpr> mutation(const ScoredKernel& fittest, const PromptContext&, Rng& rng) override
    {
        const int n = fittest.expr.leaf_count();
        const int leaf = std::uniform_int_distribution<int>(0, n - 1)(rng);
        const auto kind = kBaseKernels[std::uniform_int_distribution<std::size_t>(0, kBaseKernels.size() - 1)(rng)];
        return replace_leaf(fittest.expr, leaf, kind);
    }
};

/// Subtree exchange and subtree mutation.
class GaOperator final : public GeneticOperator {
public:
    [[nodiscard]] std::string name() const override { return "ga"; }

    std::optional<KernelExpr> crossover(const ScoredKernel& p1, const ScoredKernel& p2, const PromptContext& ctx,
                                        Rng& rng) override
    {
        const auto targets = subtrees(p1.expr);
        const auto donors = subtrees(p2.expr);
        const int t = std::uniform_int_distribution<int>(0, static_cast<int>(targets.size()) - 1)(rng);
        std::vector<KernelExpr> fits;
        for (const auto& [d, _] : donors) {
            auto child = replace_subtree(p1.expr, t, d);
            if (child.depth() <= ctx.max_depth) { fits.push_back(std::move(child)); }
        }
        if (fits.empty()) { return std::nullopt; }
        return fits[std::uniform_int_distribution<std::size_t>(0, fits.size() - 1)(rng)];
    }

    /// Subtree mutation: a uniformly chosen leaf becomes a random expression
    /// that fits the remaining depth budget and differs from the old leaf.
    std::optional<KernelExpr> mutation(const ScoredKernel& fittest, const PromptContext& ctx, Rng& rng) override
    {
        const auto all = subtrees(fittest.expr);
        std::vector<int> leaf_index;
        for (std::size_t i = 0; i < all.size(); ++i) {
            if (all[i].first.is_leaf()) { leaf_index.push_back(static_cast<int>(i)); }
        }
        const int pick = leaf_index[std::uniform_int_distribution<std::size_t>(0, leaf_index.size() - 1)(rng)];
        const auto& [old, level] = all[static_cast<std::size_t>(pick)];
        const int budget = std::max(1, ctx.max_depth - level + 1);
        for (int attempt = 0; attempt < 16; ++attempt) {
            auto sub = random_expr(rng, budget);
            if (!(sub == old)) { return replace_subtree(fittest.expr, pick, sub); }
        }
        return std::nullopt;
    }
};

enum class ProposalKind { Crossover, Mutation };

struct ProposalRecord {
    ProposalKind kind = ProposalKind::Crossover;
    std::vector<std::string> parents;
    std::string proposed; // empty when dropped
    bool fallback = false;
    bool duplicate = false;
    std::string note;
};

struct EvolveLog {
    std::vector<ProposalRecord> proposals;
    int fallbacks = 0;
    int dropped = 0;
};

/// One generation: n_c crossovers from the pre-step population, then with
/// probability p_m one mutation of the fittest member. Proposals are
/// validated, fitted and merged; the top `capacity` survive.
inline Population evolve_step(const Population& pop, GeneticOperator& op, const PromptContext& ctx, int n_c,
                              double p_m, Rng& rng, const Fitter& fitter, EvolveLog* log = nullptr)
{
    if (pop.empty()) { throw EmptyPopulation("cannot evolve an empty population"); }
    if (n_c < 0 || !(p_m >= 0.0 && p_m <= 1.0)) { throw ConfigError("n_c must be >= 0 and p_m in [0, 1]"); }

    RandomOperator fallback;
    EvolveLog local;
    EvolveLog& lg = log != nullptr ? *log : local;
    std::vector<KernelExpr> accepted;
    std::set<std::string> seen;

    auto settle = [&](ProposalKind kind, std::vector<const ScoredKernel*> parents, std::optional<KernelExpr> e) {
        ProposalRecord rec;
        rec.kind = kind;
        for (const auto* p : parents) { rec.parents.push_back(p->printed()); }
        if (!e || !is_valid(*e, ctx.dim, ctx.max_depth)) {
            rec.fallback = true;
            ++lg.fallbacks;
            rec.note = e ? "invalid proposal '" + print(*e) + "'" : "operator gave no proposal";
            e = kind == ProposalKind::Crossover ? fallback.crossover(*parents[0], *parents[1], ctx, rng)
                                                : fallback.mutation(*parents[0], ctx, rng);
            if (!is_valid(*e, ctx.dim, ctx.max_depth)) {
                ++lg.dropped;
                rec.note += "; fallback '" + print(*e) + "' invalid, dropped";
                lg.proposals.push_back(std::move(rec));
                return;
            }
        }
        rec.proposed = print(*e);
        const auto key = canonical_key(*e);
        rec.duplicate = pop.contains_key(key) || seen.count(key) > 0;
        if (!rec.duplicate) {
            seen.insert(key);
            accepted.push_back(*e);
        }
        lg.proposals.push_back(std::move(rec));
    };

    for (int i = 0; i < n_c; ++i) {
        const ScoredKernel* a = &pop.members().front();
        const ScoredKernel* b = a;
        if (pop.size() >= 2) { std::tie(a, b) = sample_parents(pop, rng); }
        settle(ProposalKind::Crossover, {a, b}, op.crossover(*a, *b, ctx, rng));
    }
    if (uniform01(rng) < p_m) {
        const auto& best = pop.fittest();
        settle(ProposalKind::Mutation, {&best}, op.mutation(best, ctx, rng));
    }

    std::vector<ScoredKernel> scored;
    scored.reserve(accepted.size());
    for (const auto& e : accepted) { scored.push_back(fitter(e)); }
    Population next = pop;
    next.merge(std::move(scored));
    return next;
}

/// Initial population: the six base kernels.
inline Population base_population(const Fitter& fitter, int capacity)
{
    std::vector<ScoredKernel> members;
    for (auto b : kBaseKernels) { members.push_back(fitter(KernelExpr::leaf(b))); }
    return {std::move(members), capacity};
}

} // namespace cake

#endif
