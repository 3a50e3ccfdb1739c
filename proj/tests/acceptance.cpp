// SPDX-License-Identifier: Apache-2.0
//
// Acceptance checks. Prints one PASS/FAIL line per criterion; exit status is
// the number of failures.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "cake/runner.hpp"

using namespace cake;
namespace fs = std::filesystem;

namespace {

const std::string kData = CAKE_TEST_DATA_DIR;

struct Outcome {
    bool pass = false;
    std::string detail;
};

int failures = 0;

void criterion(int id, const char* name, double budget_s, const std::function<Outcome()>& body)
{
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = body();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (s > budget_s) {
        o.pass = false;
        o.detail += "; over the " + std::to_string(static_cast<int>(budget_s)) + " s budget";
    }
    std::printf("%s [%d] %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str(), s);
    std::fflush(stdout);
    failures += o.pass ? 0 : 1;
}

std::string fmt(const char* f, double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

Eigen::VectorXd prior_draw(const KernelExpr& e, Rng& rng)
{
    const auto spec = hyperparam_spec(e);
    Eigen::VectorXd v(static_cast<Eigen::Index>(spec.size()));
    for (std::size_t i = 0; i < spec.size(); ++i) {
        v[static_cast<Eigen::Index>(i)] = std::gamma_distribution<double>(spec[i].prior.shape, 1.0 / spec[i].prior.rate)(rng);
    }
    return v;
}

Eigen::MatrixXd uniform_points(Rng& rng, int n, int d, double lo, double hi)
{
    Eigen::MatrixXd X(n, d);
    for (Eigen::Index i = 0; i < X.size(); ++i) { X.data()[i] = lo + (hi - lo) * uniform01(rng); }
    return X;
}

double mean_of(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

// 1 -------------------------------------------------------------------------
Outcome gp_oracle()
{
    Rng rng(101);
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 1 + trial % 6;
        const int d = 1 + trial % 3;
        const auto e = random_expr(rng, 3);
        Eigen::VectorXd v = prior_draw(e, rng);
        v[v.size() - 1] = 0.05 + 0.2 * uniform01(rng);
        const auto p = Hyperparams::from_values(v);
        const auto X = uniform_points(rng, n, d, 0.0, 1.0);
        const Eigen::VectorXd y = Eigen::VectorXd::NullaryExpr(n, [&] { return uniform01(rng) - 0.5; });
        const auto m = condition(e, p, X, y);

        Eigen::MatrixXd Ky = gram(e, p, X, X);
        Ky.diagonal().array() += p.noise();
        const Eigen::MatrixXd Kinv = Ky.inverse();
        const double lml = -0.5 * y.dot(Kinv * y) - 0.5 * std::log(Ky.determinant()) -
                           0.5 * n * std::log(2.0 * std::numbers::pi);
        worst = std::max(worst, std::abs(lml - m.lml));

        const auto Q = uniform_points(rng, 4, d, 0.0, 1.0);
        const auto post = posterior(m, Q);
        const Eigen::MatrixXd Ks = gram(e, p, X, Q);
        for (Eigen::Index j = 0; j < Q.rows(); ++j) {
            const double mean = Ks.col(j).dot(Kinv * y);
            const double var = kernel_value(e, p, Q.row(j), Q.row(j)) - Ks.col(j).dot(Kinv * Ks.col(j));
            worst = std::max({worst, std::abs(mean - post.mean[j]), std::abs(std::max(var, 0.0) - post.var[j])});
        }
    }
    return {worst <= 1e-8, "50 instances, max abs error " + fmt("%.2e", worst)};
}

// 2 -------------------------------------------------------------------------
Outcome ei_oracle()
{
    Rng rng(202);
    std::normal_distribution<double> z(0.0, 1.0);
    int inside = 0;
    double worst_z = 0.0;
    for (int k = 0; k < 20; ++k) {
        const double mu = 4.0 * uniform01(rng) - 2.0;
        const double sigma = 0.05 + 2.0 * uniform01(rng);
        const double inc = 4.0 * uniform01(rng) - 2.0;
        const double closed = ei(Posterior{mu, sigma * sigma}, inc);
        const int N = 1000000;
        double sum = 0.0;
        double sq = 0.0;
        for (int i = 0; i < N; ++i) {
            const double g = std::max(0.0, mu + sigma * z(rng) - inc);
            sum += g;
            sq += g * g;
        }
        const double mean = sum / N;
        const double se = std::sqrt(std::max(0.0, sq / N - mean * mean) / N);
        const double zscore = se > 0.0 ? std::abs(mean - closed) / se : std::abs(mean - closed) * 1e12;
        worst_z = std::max(worst_z, zscore);
        inside += zscore <= 3.0 ? 1 : 0;
    }
    return {inside == 20, std::to_string(inside) + "/20 within 3 SE, worst " + fmt("%.2f", worst_z) + " SE"};
}

// 3 -------------------------------------------------------------------------
Outcome psd_and_round_trip()
{
    Rng rng(303);
    int factored = 0;
    double max_jitter = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const int d = 1 + trial % 3;
        const auto e = random_expr(rng, 3);
        const auto v = prior_draw(e, rng);
        const auto X = uniform_points(rng, 20, d, -5.0, 5.0);
        const Eigen::MatrixXd K = gram(e, Hyperparams::from_values(v), X, X);
        const auto f = detail::robust_cholesky(K, 0.0);
        if (f && f->second <= 1e-6) {
            ++factored;
            max_jitter = std::max(max_jitter, f->second);
        }
    }
    int round_trips = 0;
    for (int i = 0; i < 1000; ++i) {
        const auto e = random_expr(rng, 5);
        const auto text = print(e);
        round_trips += (parse(text) == e && print(parse(text)) == text) ? 1 : 0;
    }
    return {factored == 100 && round_trips == 1000,
            std::to_string(factored) + "/100 Cholesky with jitter <= " + fmt("%.0e", max_jitter) + ", " +
                std::to_string(round_trips) + "/1000 exact round-trips"};
}

// 4 -------------------------------------------------------------------------
std::string rescore(const std::vector<KernelScore>& rows)
{
    double lo_b = INFINITY;
    double lo_a = INFINITY;
    double hi_a = -INFINITY;
    for (const auto& r : rows) {
        lo_b = std::min(lo_b, r.bic);
        lo_a = std::min(lo_a, r.acq_raw);
        hi_a = std::max(hi_a, r.acq_raw);
    }
    double z = 0.0;
    for (const auto& r : rows) { z += std::exp(lo_b - r.bic); }
    const KernelScore* best = nullptr;
    double best_s = -1.0;
    for (const auto& r : rows) {
        const double a = hi_a > lo_a ? (r.acq_raw - lo_a) / (hi_a - lo_a) : 1.0;
        const double s = std::exp(lo_b - r.bic) / z * a;
        if (best == nullptr || s > best_s ||
            (s == best_s && (r.bic < best->bic || (r.bic == best->bic && r.kernel < best->kernel)))) {
            best = &r;
            best_s = s;
        }
    }
    return best != nullptr ? best->kernel : "";
}

Outcome baker()
{
    const auto w = softmax_weights({10.0, 12.0});
    const bool example = std::abs(w[0] - 0.8808) <= 1e-4 && std::abs(w[1] - 0.1192) <= 1e-4;

    Rng rng(404);
    double shift_err = 0.0;
    for (int k = 0; k < 1000; ++k) {
        std::vector<double> b(6);
        for (auto& v : b) { v = 200.0 * uniform01(rng) - 100.0; }
        auto s = b;
        const double c = 1e3 * (uniform01(rng) - 0.5);
        for (auto& v : s) { v += c; }
        const auto w0 = softmax_weights(b);
        const auto w1 = softmax_weights(s);
        for (std::size_t i = 0; i < b.size(); ++i) { shift_err = std::max(shift_err, std::abs(w0[i] - w1[i])); }
    }

    const auto dir = fs::temp_directory_path() / ("cake_accept4_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    auto cfg = RunConfig{};
    cfg.benchmark = "branin";
    cfg.strategies = {"cake"};
    cfg.seeds = {1};
    cfg.T = 20;
    cfg.op = OperatorKind::Llm;
    cfg.llm.replay = kData + "/replay_run.jsonl";
    const auto jobs = run_sweep(cfg);
    write_artifacts(dir, cfg, jobs, 0.0);
    std::ifstream in(dir / "baker.jsonl");
    const auto rows = read_baker_jsonl(in);
    int agree = 0;
    for (const auto& r : rows) { agree += rescore(r.per_kernel) == r.chosen ? 1 : 0; }
    fs::remove_all(dir);
    const bool ok = example && shift_err <= 1e-12 && rows.size() == 20 && agree == 20;
    return {ok, "w(10,12) = (" + fmt("%.4f", w[0]) + ", " + fmt("%.4f", w[1]) + "), shift error " +
                    fmt("%.1e", shift_err) + ", " + std::to_string(agree) + "/" + std::to_string(rows.size()) +
                    " logged iterations re-scored to the same kernel"};
}

// 5 -------------------------------------------------------------------------
Outcome regret()
{
    const auto& b = get_benchmark("branin");
    const auto f = [&](const Eigen::VectorXd& x) { return b.evaluate(x); };
    std::vector<double> cake_regret;
    std::vector<double> fixed_regret;
    bool monotone = true;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        RunOptions opt;
        opt.T = default_budget(2);
        opt.seed = seed;
        opt.f_opt = b.f_opt;
        opt.strategy = Strategy::parse_name("cake");
        cake_regret.push_back(*run(f, b.box, opt).trials.back().regret);

        opt.strategy = Strategy::parse_name("fixed(SE)");
        const auto fixed = run(f, b.box, opt);
        for (std::size_t i = 1; i < fixed.trials.size(); ++i) {
            monotone = monotone && fixed.trials[i].best_so_far <= fixed.trials[i - 1].best_so_far;
        }
        fixed_regret.push_back(*fixed.trials.back().regret);
    }
    auto median = [](std::vector<double> v) {
        std::sort(v.begin(), v.end());
        return 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]);
    };
    const double m = median(cake_regret);
    return {m <= 0.10 && monotone, "CAKE+GA median regret " + fmt("%.4f", m) + " over 20 seeds (bound 0.10); Fixed(SE) median " +
                                       fmt("%.4f", median(fixed_regret)) + ", best_so_far " +
                                       (monotone ? "monotone" : "NOT monotone")};
}

// 6 -------------------------------------------------------------------------
Outcome fitness_evolution()
{
    Rng data_rng(derive_seed({6, 0}));
    const auto data = lin_per_dataset(30, data_rng);
    int improved = 0;
    int elitist = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        GaOperator ga;
        const auto snaps = evolve_on_fixed_data(data, ga, CakeConfig{}, 10, seed);
        const auto fit = common_scale_fitness(snaps);
        improved += mean_of(fit.back()) > mean_of(fit.front()) ? 1 : 0;
        bool ok = true;
        for (std::size_t k = 1; k < fit.size(); ++k) {
            ok = ok && *std::max_element(fit[k].begin(), fit[k].end()) >= *std::max_element(fit[k - 1].begin(), fit[k - 1].end());
        }
        elitist += ok ? 1 : 0;
    }
    return {improved >= 18 && elitist == 20, "mean fitness rose after 10 edits in " + std::to_string(improved) +
                                                 "/20 seeds; best fitness non-decreasing in " + std::to_string(elitist) +
                                                 "/20"};
}

// 7 -------------------------------------------------------------------------
Outcome structure_recovery()
{
    int wins = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(derive_seed({7, seed}));
        const auto data = lin_per_dataset(40, rng);
        const Fitter fitter = [&](const KernelExpr& e) { return fit_scored(e, data, seed); };
        const auto best = cks_search(fitter, 3);
        double base = INFINITY;
        for (auto k : kBaseKernels) { base = std::min(base, fitter(KernelExpr::leaf(k)).raw_bic); }
        wins += (!best.expr.is_leaf() && best.raw_bic < base) ? 1 : 0;
    }
    return {wins >= 18, "composite beat every base kernel in " + std::to_string(wins) + "/20 seeds"};
}

// 8 -------------------------------------------------------------------------
Outcome offline_llm()
{
    auto examples = ReplayTransport::from_file(kData + "/replay_examples.jsonl");
    const auto ctx = PromptContext::make(nullptr);
    const auto c = propose(ProposalKind::Crossover, {}, examples, ctx, 3);
    const auto m = propose(ProposalKind::Mutation, {}, examples, ctx, 3);
    const bool parsed = c.kernel && print(*c.kernel) == "LIN + SE" && m.kernel && print(*m.kernel) == "LIN + RQ";

    auto garbage = ReplayTransport::from_file(kData + "/replay_garbage.jsonl");
    const auto g = propose(ProposalKind::Crossover, {}, garbage, ctx, 3);
    const bool fallback = !g.kernel && g.attempts == 3;

    // 8 replies, 5 valid: see replay_validity.jsonl
    const auto dir = fs::temp_directory_path() / ("cake_accept8_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    RunConfig cfg;
    cfg.benchmark = "branin";
    cfg.strategies = {"cake"};
    cfg.T = 1;
    cfg.cake.p_m = 1.0;
    cfg.op = OperatorKind::Llm;
    cfg.llm.replay = kData + "/replay_validity.jsonl";
    write_artifacts(dir, cfg, run_sweep(cfg), 0.0);
    std::ifstream in(dir / "summary.json");
    const auto summary = read_summary(in);
    fs::remove_all(dir);
    const double rate = summary["validity_rate"].get<double>();
    const bool rate_ok = rate == 5.0 / 8.0;
    return {parsed && fallback && rate_ok, std::string("example replies ") + (parsed ? "parsed" : "NOT parsed") +
                                               ", garbage " + (fallback ? "fell back" : "did NOT fall back") +
                                               ", summary validity " + fmt("%.4f", rate) + " vs hand count 0.6250"};
}

// 9 -------------------------------------------------------------------------
Outcome determinism()
{
    RunConfig cfg;
    cfg.benchmark = "branin";
    cfg.strategies = {"cake", "fixed(SE)", "adaptive_utility"};
    cfg.seeds = {3, 8};
    cfg.T = 6;
    cfg.op = OperatorKind::Llm;
    cfg.llm.replay = kData + "/replay_run.jsonl";
    std::vector<std::string> files;
    for (int k = 0; k < 2; ++k) {
        const auto dir = fs::temp_directory_path() / ("cake_accept9_" + std::to_string(::getpid()) + "_" + std::to_string(k));
        fs::remove_all(dir);
        write_artifacts(dir, cfg, run_sweep(cfg), 0.0);
        std::ifstream in(dir / "trials.csv", std::ios::binary);
        std::stringstream ss;
        ss << in.rdbuf();
        files.push_back(ss.str());
        fs::remove_all(dir);
    }
    const bool same = files[0] == files[1] && !files[0].empty();
    return {same, std::string("two executions ") + (same ? "byte-identical" : "DIFFER") + " (" +
                      std::to_string(files[0].size()) + " bytes)"};
}

} // namespace

int main(int argc, char** argv)
{
    struct Entry {
        const char* name;
        double budget_s;
        Outcome (*body)();
    };
    const std::vector<Entry> all{
        {"GP oracle equivalence", 10, gp_oracle},
        {"EI Monte-Carlo oracle", 30, ei_oracle},
        {"PSD and grammar round-trip", 20, psd_and_round_trip},
        {"BAKER correctness", 60, baker},
        {"desk-scale regret on Branin", 300, regret},
        {"fitness evolution on fixed data", 180, fitness_evolution},
        {"structure recovery (CKS on LIN+PER)", 120, structure_recovery},
        {"offline LLM pipeline", 60, offline_llm},
        {"determinism", 60, determinism},
    };
    // With arguments, run only the listed criteria (1-based).
    std::vector<int> ids;
    for (int i = 1; i < argc; ++i) { ids.push_back(std::atoi(argv[i])); }
    if (ids.empty()) {
        for (int i = 1; i <= static_cast<int>(all.size()); ++i) { ids.push_back(i); }
    }
    for (int id : ids) {
        if (id < 1 || id > static_cast<int>(all.size())) {
            std::fprintf(stderr, "no criterion %d\n", id);
            return 1;
        }
        const auto& e = all[static_cast<std::size_t>(id - 1)];
        criterion(id, e.name, e.budget_s, e.body);
    }
    std::printf("%zu/%zu criteria passed\n", ids.size() - static_cast<std::size_t>(failures), ids.size());
    return failures;
}
