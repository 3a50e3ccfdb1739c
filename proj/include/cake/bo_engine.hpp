// SPDX-License-Identifier: Apache-2.0

#ifndef CAKE_BO_ENGINE_HPP
#define CAKE_BO_ENGINE_HPP

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdint>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "acquisition.hpp"
#include "benchmarks.hpp"
#include "errors.hpp"
#include "evolution.hpp"
#include "gp.hpp"
#include "kernel_grammar.hpp"
#include "observations.hpp"
#include "prompt_context.hpp"
#include "random.hpp"

namespace cake {

enum class StrategyKind { Cake, Fixed, AdaptiveRandom, AdaptiveUtility, AdaptiveBic, Cks, CakeBicOnly, CakeUtilityOnly };

inline constexpr std::array<std::pair<StrategyKind, std::string_view>, 8> kStrategyNames{{
    {StrategyKind::Cake, "cake"},
    {StrategyKind::Fixed, "fixed"},
    {StrategyKind::AdaptiveRandom, "adaptive_random"},
    {StrategyKind::AdaptiveUtility, "adaptive_utility"},
    {StrategyKind::AdaptiveBic, "adaptive_bic"},
    {StrategyKind::Cks, "cks"},
    {StrategyKind::CakeBicOnly, "cake_bic"},
    {StrategyKind::CakeUtilityOnly, "cake_utility"},
}};

inline std::string_view to_string(StrategyKind k) noexcept
{
    for (const auto& [kind, name] : kStrategyNames) {
        if (kind == k) { return name; }
    }
    return "?";
}

enum class BakerNorm { Joint, PerKernel };

inline std::string_view to_string(BakerNorm n) noexcept { return n == BakerNorm::Joint ? "joint" : "per_kernel"; }

inline BakerNorm baker_norm_from_string(std::string_view s)
{
    if (s == "joint") { return BakerNorm::Joint; }
    if (s == "per_kernel") { return BakerNorm::PerKernel; }
    throw ConfigError("unknown baker_norm '" + std::string(s) + "'");
}

struct Strategy {
    StrategyKind kind = StrategyKind::Cake;
    std::optional<KernelExpr> fixed; // required for Fixed
    AcqConfig acq;
    BakerNorm norm = BakerNorm::Joint;

    /// "cake", "fixed(SE)", "adaptive_bic", ...
    static Strategy parse_name(std::string_view text)
    {
        Strategy s;
        if (text.starts_with("fixed(") && text.ends_with(")")) {
            s.kind = StrategyKind::Fixed;
            s.fixed = parse(text.substr(6, text.size() - 7));
            return s;
        }
        for (const auto& [kind, name] : kStrategyNames) {
            if (text == name && kind != StrategyKind::Fixed) {
                s.kind = kind;
                return s;
            }
        }
        throw ConfigError("unknown strategy '" + std::string(text) + "'");
    }

    [[nodiscard]] std::string label() const
    {
        if (kind == StrategyKind::Fixed) { return "fixed(" + print(*fixed) + ")"; }
        return std::string(to_string(kind));
    }

    [[nodiscard]] bool evolves() const noexcept
    {
        return kind == StrategyKind::Cake || kind == StrategyKind::CakeBicOnly || kind == StrategyKind::CakeUtilityOnly;
    }
};

// ---------------------------------------------------------------------------
// BAKER

/// softmax(-BIC) with a max shift; non-finite BICs get weight 0.
inline std::vector<double> softmax_weights(const std::vector<double>& bics)
{
    double lo = std::numeric_limits<double>::infinity();
    for (double b : bics) { lo = std::min(lo, b); }
    std::vector<double> w(bics.size(), 0.0);
    if (!std::isfinite(lo)) { return w; }
    double total = 0.0;
    for (std::size_t i = 0; i < bics.size(); ++i) {
        w[i] = std::isfinite(bics[i]) ? std::exp(-(bics[i] - lo)) : 0.0;
        total += w[i];
    }
    for (auto& v : w) { v /= total; }
    return w;
}

/// Joint min-max over all values (all-equal maps to 1). Per-kernel maps every
/// kernel's own maximum to 1.
inline std::vector<double> normalize_acquisition(const std::vector<double>& raw, BakerNorm norm)
{
    std::vector<double> out(raw.size(), 1.0);
    if (norm == BakerNorm::PerKernel || raw.empty()) { return out; }
    const auto [lo, hi] = std::minmax_element(raw.begin(), raw.end());
    if (*hi > *lo) {
        for (std::size_t i = 0; i < raw.size(); ++i) { out[i] = (raw[i] - *lo) / (*hi - *lo); }
    }
    return out;
}

struct KernelScore {
    std::string kernel;
    double bic = 0.0;
    double weight = 0.0;
    Eigen::VectorXd x;
    double acq_raw = 0.0;
    double acq_norm = 0.0;
    double score = 0.0;
};

/// Index of the best combined score; ties go to lower BIC, then printed form.
inline std::size_t baker_choose(const std::vector<KernelScore>& rows)
{
    if (rows.empty()) { throw EmptyPopulation("no kernel to choose from"); }
    std::size_t best = 0;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& a = rows[i];
        const auto& b = rows[best];
        if (a.score != b.score ? a.score > b.score : (a.bic != b.bic ? a.bic < b.bic : a.kernel < b.kernel)) {
            best = i;
        }
    }
    return best;
}

/// Recomputes weights, normalized acquisition and scores from (bic, acq_raw).
inline void baker_score(std::vector<KernelScore>& rows, BakerNorm norm)
{
    std::vector<double> bics;
    std::vector<double> raw;
    for (const auto& r : rows) {
        bics.push_back(r.bic);
        raw.push_back(r.acq_raw);
    }
    const auto w = softmax_weights(bics);
    const auto a = normalize_acquisition(raw, norm);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        rows[i].weight = w[i];
        rows[i].acq_norm = a[i];
        rows[i].score = w[i] * a[i];
    }
}

struct BakerDecision {
    std::vector<KernelScore> per_kernel;
    std::size_t chosen = 0;
};

namespace detail {

/// Every modelled member proposes its acquisition argmax; all members see the
/// same candidate set.
inline std::vector<KernelScore> propose_all(const std::vector<const ScoredKernel*>& members, const AcqConfig& acq,
                                            const Box& box, Rng& rng)
{
    const std::uint64_t sub = rng();
    std::vector<KernelScore> rows;
    for (const auto* m : members) {
        Rng local(sub);
        const auto r = maximize(*m->model, acq, box, local);
        rows.push_back({m->printed(), m->raw_bic, 0.0, r.x, r.value, 0.0, 0.0});
    }
    return rows;
}

inline std::vector<const ScoredKernel*> modelled(const Population& pop)
{
    std::vector<const ScoredKernel*> out;
    for (const auto& m : pop.members()) {
        if (m.model && std::isfinite(m.raw_bic)) { out.push_back(&m); }
    }
    return out;
}

} // namespace detail

inline BakerDecision baker_select(const Population& pop, const AcqConfig& acq, BakerNorm norm, const Box& box, Rng& rng)
{
    const auto members = detail::modelled(pop);
    if (members.empty()) { throw EmptyPopulation("no population member has a fitted model"); }
    BakerDecision d;
    d.per_kernel = detail::propose_all(members, acq, box, rng);
    baker_score(d.per_kernel, norm);
    d.chosen = baker_choose(d.per_kernel);
    return d;
}

// ---------------------------------------------------------------------------
// Compositional kernel search

/// Greedy BIC descent over grammar expansions, `levels` rounds deep.
inline ScoredKernel cks_search(const Fitter& fitter, int levels = 3, std::span<const BaseKernel> base_set = kBaseKernels,
                               int max_depth = kDefaultMaxDepth)
{
    std::optional<ScoredKernel> best;
    auto consider = [&](const KernelExpr& e) {
        auto s = fitter(e);
        if (!std::isfinite(s.raw_bic)) { return false; }
        if (!best || s.raw_bic < best->raw_bic ||
            (s.raw_bic == best->raw_bic && s.printed() < best->printed())) {
            best = std::move(s);
            return true;
        }
        return false;
    };
    for (auto b : base_set) { consider(KernelExpr::leaf(b)); }
    if (!best) { throw FitFailed("no base kernel could be fitted"); }
    for (int level = 0; level < levels; ++level) {
        bool improved = false;
        const auto incumbent = best->expr;
        for (const auto& child : expand(incumbent, base_set, max_depth)) { improved = consider(child) || improved; }
        if (!improved) { break; }
    }
    return *best;
}

// ---------------------------------------------------------------------------
// Optimization loop

using Objective = std::function<double(const Eigen::VectorXd&)>;

struct CakeConfig {
    int n_c = 5;
    double p_m = 0.7;
    int n_p = 10;
    int max_depth = kDefaultMaxDepth;
    PromptMode prompt = PromptMode::Full;
    int cks_levels = 3;
};

struct MemberSnapshot {
    std::string kernel;
    double bic = 0.0;
    double fitness = 0.0;
};

struct IterationLog {
    int t = 0;
    std::vector<KernelScore> per_kernel; // BAKER table, or the candidates a baseline compared
    std::string chosen;
    std::vector<MemberSnapshot> population;
    EvolveLog evolve;
    std::vector<std::string> notes;
};

struct RunOptions {
    Strategy strategy;
    CakeConfig cake;
    int T = 0;      // 0 means 10 * d
    int n_init = 0; // 0 means max(5, d + 1)
    std::uint64_t seed = 0;
    std::optional<double> f_opt;        // enables regret
    GeneticOperator* op = nullptr;      // evolving strategies; GA when null
    FitOptions fit;
    std::function<void(const IterationLog&)> on_iteration; // called after each query
};

struct TrialRecord {
    int t = 0;
    std::string status; // init | bo | fit_failed
    std::string kernel;
    Eigen::VectorXd x;
    double y = 0.0;
    double best_so_far = 0.0;
    std::optional<double> regret;
    std::optional<double> acq_raw;
    std::optional<double> acq_norm;
    std::optional<double> bic;
    std::optional<double> w;
    std::int64_t wall_ms = 0;
};

struct RunResult {
    std::vector<TrialRecord> trials;
    std::vector<IterationLog> iterations;
    double f_init = 0.0;
    int fallbacks = 0;
};

inline std::vector<MemberSnapshot> snapshot(const Population& pop)
{
    std::vector<MemberSnapshot> out;
    for (const auto& m : pop.members()) { out.push_back({m.printed(), m.raw_bic, m.fitness}); }
    return out;
}

inline int default_budget(int d) { return 10 * d; }
inline int default_n_init(int d) { return std::max(5, d + 1); }

namespace detail {

inline double checked(const Objective& f, const Eigen::VectorXd& x)
{
    const double y = f(x);
    if (!std::isfinite(y)) { throw ObjectiveError("objective returned a non-finite value"); }
    return y;
}

} // namespace detail

/// Runs one optimization (minimization of `objective` over `box`).
inline RunResult run(const Objective& objective, const Box& box, const RunOptions& opt)
{
    using Clock = std::chrono::steady_clock;
    const int d = box.dim();
    const int T = opt.T > 0 ? opt.T : default_budget(d);
    const int n_init = opt.n_init > 0 ? opt.n_init : default_n_init(d);
    if (n_init < 2) { throw ConfigError("n_init must be at least 2"); }
    const auto& strat = opt.strategy;
    strat.acq.validate();
    if (strat.kind == StrategyKind::Fixed && !strat.fixed) { throw ConfigError("fixed strategy needs a kernel"); }

    Rng init_rng(derive_seed({opt.seed, 1}));
    Rng evo_rng(derive_seed({opt.seed, 2}));
    Rng acq_rng(derive_seed({opt.seed, 3}));

    RunResult out;
    Observations data(box); // targets are negated objective values
    double best = std::numeric_limits<double>::infinity();

    auto record = [&](TrialRecord rec, Clock::time_point t0) {
        best = std::min(best, rec.y);
        rec.best_so_far = best;
        rec.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - t0).count();
        out.trials.push_back(std::move(rec));
    };

    const Eigen::MatrixXd X0 = sobol_candidates(box, n_init, init_rng);
    for (int i = 0; i < n_init; ++i) {
        const auto t0 = Clock::now();
        const Eigen::VectorXd x = X0.row(i).transpose();
        const double y = detail::checked(objective, x);
        data.add(x, -y);
        TrialRecord rec;
        rec.t = 0;
        rec.status = "init";
        rec.x = x;
        rec.y = y;
        record(std::move(rec), t0);
    }
    out.f_init = best;

    GaOperator ga_op;
    GeneticOperator& op = opt.op != nullptr ? *opt.op : static_cast<GeneticOperator&>(ga_op);
    std::optional<Population> pop;

    for (int t = 1; t <= T; ++t) {
        const auto t0 = Clock::now();
        const Fitter fitter = [&](const KernelExpr& e) {
            return fit_scored(e, data, opt.seed, static_cast<std::uint64_t>(t), opt.fit);
        };
        IterationLog it;
        it.t = t;
        TrialRecord rec;
        rec.t = t;
        rec.status = "bo";
        std::optional<AcqResult> query;

        auto use_single = [&](const ScoredKernel& s) {
            rec.kernel = s.printed();
            if (!s.model) {
                rec.status = "fit_failed";
                return;
            }
            const auto r = maximize(*s.model, strat.acq, box, acq_rng);
            query = r;
            rec.bic = s.raw_bic;
            rec.w = 1.0;
            rec.acq_raw = r.value;
            rec.acq_norm = 1.0;
            it.per_kernel.push_back({s.printed(), s.raw_bic, 1.0, r.x, r.value, 1.0, 1.0});
        };

        auto pick_from_table = [&](std::vector<KernelScore> rows, std::size_t idx) {
            const auto& c = rows[idx];
            rec.kernel = c.kernel;
            rec.bic = c.bic;
            rec.w = c.weight;
            rec.acq_raw = c.acq_raw;
            rec.acq_norm = c.acq_norm;
            query = AcqResult{c.x, c.acq_raw};
            it.per_kernel = std::move(rows);
        };

        switch (strat.kind) {
        case StrategyKind::Fixed: use_single(fitter(*strat.fixed)); break;
        case StrategyKind::AdaptiveRandom: {
            const auto k = kBaseKernels[std::uniform_int_distribution<std::size_t>(0, kBaseKernels.size() - 1)(evo_rng)];
            use_single(fitter(KernelExpr::leaf(k)));
            break;
        }
        case StrategyKind::AdaptiveBic: use_single(base_population(fitter, 6).fittest()); break;
        case StrategyKind::AdaptiveUtility: {
            const auto bases = base_population(fitter, 6);
            const auto members = detail::modelled(bases);
            if (members.empty()) {
                rec.status = "fit_failed";
                break;
            }
            auto rows = detail::propose_all(members, strat.acq, box, acq_rng);
            for (auto& r : rows) {
                r.score = r.acq_raw;
                r.weight = 1.0 / static_cast<double>(rows.size());
            }
            const auto idx = baker_choose(rows);
            pick_from_table(std::move(rows), idx);
            break;
        }
        case StrategyKind::Cks: use_single(cks_search(fitter, opt.cake.cks_levels, kBaseKernels, opt.cake.max_depth)); break;
        case StrategyKind::Cake:
        case StrategyKind::CakeBicOnly:
        case StrategyKind::CakeUtilityOnly: {
            if (!pop) {
                pop = base_population(fitter, opt.cake.n_p);
            } else {
                pop->refit(fitter);
            }
            auto ctx = PromptContext::make(&data, opt.cake.prompt, opt.cake.max_depth);
            *pop = evolve_step(*pop, op, ctx, opt.cake.n_c, opt.cake.p_m, evo_rng, fitter, &it.evolve);
            out.fallbacks += it.evolve.fallbacks;
            it.population = snapshot(*pop);
            if (detail::modelled(*pop).empty()) {
                rec.status = "fit_failed";
                break;
            }
            if (strat.kind == StrategyKind::CakeBicOnly) {
                use_single(pop->fittest());
                break;
            }
            auto rows = detail::propose_all(detail::modelled(*pop), strat.acq, box, acq_rng);
            if (strat.kind == StrategyKind::Cake) {
                baker_score(rows, strat.norm);
            } else {
                for (auto& r : rows) { r.score = r.acq_raw; }
            }
            const auto idx = baker_choose(rows);
            pick_from_table(std::move(rows), idx);
            break;
        }
        }

        if (!query) {
            // No usable surrogate: query a random point so the loop progresses.
            Eigen::VectorXd u(d);
            for (int k = 0; k < d; ++k) { u[k] = uniform01(acq_rng); }
            query = AcqResult{box.from_unit(u), 0.0};
            it.notes.push_back("no fitted model; random query");
        }
        it.chosen = rec.kernel;
        rec.x = box.clamp(query->x);
        rec.y = detail::checked(objective, rec.x);
        data.add(rec.x, -rec.y);
        if (opt.on_iteration) { opt.on_iteration(it); }
        out.iterations.push_back(std::move(it));
        record(std::move(rec), t0);
    }

    if (opt.f_opt) {
        for (auto& r : out.trials) { r.regret = normalized_regret(out.f_init, r.best_so_far, *opt.f_opt).value; }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Population evolution on fixed data

/// Snapshots before any edit (index 0) and after each of `edits` evolve steps.
/// Fits use one stream, so a kernel's BIC is identical across snapshots.
inline std::vector<std::vector<MemberSnapshot>> evolve_on_fixed_data(const Observations& data, GeneticOperator& op,
                                                                     const CakeConfig& cfg, int edits,
                                                                     std::uint64_t seed, EvolveLog* log = nullptr,
                                                                     const std::function<void(int)>& after_edit = {})
{
    const Fitter fitter = [&](const KernelExpr& e) { return fit_scored(e, data, seed); };
    Rng rng(derive_seed({seed, 2}));
    auto ctx = PromptContext::make(&data, cfg.prompt, cfg.max_depth);
    auto pop = base_population(fitter, cfg.n_p);
    std::vector<std::vector<MemberSnapshot>> out{snapshot(pop)};
    for (int k = 0; k < edits; ++k) {
        pop = evolve_step(pop, op, ctx, cfg.n_c, cfg.p_m, rng, fitter, log);
        out.push_back(snapshot(pop));
        if (after_edit) { after_edit(k + 1); }
    }
    return out;
}

/// Min-max of -BIC over every member of every snapshot, so fitness values are
/// comparable across edits. Non-finite BICs map to 0.
inline std::vector<std::vector<double>> common_scale_fitness(const std::vector<std::vector<MemberSnapshot>>& snaps)
{
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (const auto& s : snaps) {
        for (const auto& m : s) {
            if (std::isfinite(m.bic)) {
                lo = std::min(lo, m.bic);
                hi = std::max(hi, m.bic);
            }
        }
    }
    std::vector<std::vector<double>> out;
    for (const auto& s : snaps) {
        auto& row = out.emplace_back();
        for (const auto& m : s) {
            if (!std::isfinite(m.bic)) {
                row.push_back(0.0);
            } else {
                row.push_back(hi > lo ? (hi - m.bic) / (hi - lo) : 1.0);
            }
        }
    }
    return out;
}

} // namespace cake

#endif
