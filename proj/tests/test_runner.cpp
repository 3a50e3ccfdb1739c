// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cake/runner.hpp"

using namespace cake;
namespace fs = std::filesystem;

namespace {

const std::string kData = CAKE_TEST_DATA_DIR;

RunConfig cfg_from(const std::string& text, const std::vector<std::string>& overrides = {})
{
    std::istringstream in(text);
    boost::property_tree::ptree tree;
    boost::property_tree::ini_parser::read_ini(in, tree);
    for (const auto& o : overrides) { apply_override(tree, o); }
    return config_from_tree(tree);
}

fs::path scratch(const std::string& name)
{
    auto p = fs::temp_directory_path() / ("cake_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

const char* kBraninFixed = R"(
[objective]
benchmark = branin
[run]
strategies = fixed(SE)
seeds = 0,1
T = 6
)";

} // namespace

TEST(Config, DefaultsMatchPublishedSetup)
{
    const auto c = cfg_from("[objective]\nbenchmark = branin\n");
    EXPECT_EQ(c.cake.n_c, 5);
    EXPECT_DOUBLE_EQ(c.cake.p_m, 0.7);
    EXPECT_EQ(c.cake.n_p, 10);
    EXPECT_EQ(c.T, 0);
    EXPECT_EQ(c.acq.kind, AcqKind::EI);
    EXPECT_EQ(c.norm, BakerNorm::Joint);
    EXPECT_NO_THROW(validate(c));
}

TEST(Config, ParsesEveryField)
{
    const auto c = cfg_from(R"(
[objective]
command = ./f
lower = 0 -1
upper = 1, 2
f_opt = -3.5
[run]
strategies = cake, fixed(SE * PER), cks
seeds = 0-2, 9
T = 12
n_init = 4
workers = 2
timing = true
[cake]
operator = random
n_c = 3
p_m = 0.25
n_p = 7
max_depth = 4
prompt = no_context
cks_levels = 2
[acq]
kind = ucb
ucb_beta = 1.5
candidates = 64
refine_steps = 5
baker_norm = per_kernel
)");
    EXPECT_EQ(c.command, "./f");
    EXPECT_EQ(c.lower, (std::vector<double>{0.0, -1.0}));
    EXPECT_EQ(c.upper, (std::vector<double>{1.0, 2.0}));
    EXPECT_DOUBLE_EQ(*c.f_opt, -3.5);
    EXPECT_EQ(c.strategies, (std::vector<std::string>{"cake", "fixed(SE * PER)", "cks"}));
    EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{0, 1, 2, 9}));
    EXPECT_EQ(c.T, 12);
    EXPECT_EQ(c.n_init, 4);
    EXPECT_EQ(c.workers, 2);
    EXPECT_TRUE(c.timing);
    EXPECT_EQ(c.op, OperatorKind::Random);
    EXPECT_EQ(c.cake.n_c, 3);
    EXPECT_DOUBLE_EQ(c.cake.p_m, 0.25);
    EXPECT_EQ(c.cake.n_p, 7);
    EXPECT_EQ(c.cake.max_depth, 4);
    EXPECT_EQ(c.cake.prompt, PromptMode::NoContext);
    EXPECT_EQ(c.cake.cks_levels, 2);
    EXPECT_EQ(c.acq.kind, AcqKind::UCB);
    EXPECT_DOUBLE_EQ(c.acq.ucb_beta, 1.5);
    EXPECT_EQ(c.acq.candidates, 64);
    EXPECT_EQ(c.acq.refine_steps, 5);
    EXPECT_EQ(c.norm, BakerNorm::PerKernel);
    EXPECT_EQ(c.box().dim(), 2);
    EXPECT_NO_THROW(validate(c));
}

TEST(Config, OverridesWin)
{
    const auto c = cfg_from(kBraninFixed, {"run.T=3", "cake.p_m=0.1", "run.seeds=5"});
    EXPECT_EQ(c.T, 3);
    EXPECT_DOUBLE_EQ(c.cake.p_m, 0.1);
    EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{5}));
    boost::property_tree::ptree tree;
    EXPECT_THROW(apply_override(tree, "no_equals_sign"), ConfigError);
}

TEST(Config, RejectsBadInput)
{
    EXPECT_THROW(cfg_from("[run]\nbogus = 1\n"), ConfigError);
    EXPECT_THROW(cfg_from("[run]\nT = ten\n"), ConfigError);
    EXPECT_THROW(cfg_from("[run]\nseeds = 5-2\n"), ConfigError);
    EXPECT_THROW(cfg_from("[cake]\noperator = human\n"), ConfigError);
    EXPECT_THROW(cfg_from("[acq]\nkind = pi\n"), ConfigError);
    EXPECT_THROW(validate(cfg_from("[run]\nT = 3\n")), ConfigError); // no objective
    EXPECT_THROW(validate(cfg_from("[objective]\nbenchmark = nope\n")), UnknownBenchmark);
    EXPECT_THROW(validate(cfg_from("[objective]\ncommand = x\nlower = 0\nupper = 1 1\n")), ConfigError);
    EXPECT_THROW(validate(cfg_from(kBraninFixed, {"run.strategies=fixed(SE +)"})), SyntaxError);
    EXPECT_THROW(validate(cfg_from(kBraninFixed, {"run.seeds=1,1"})), ConfigError);
    EXPECT_THROW(validate(cfg_from(kBraninFixed, {"cake.p_m=1.5"})), ConfigError);
    EXPECT_THROW(validate(cfg_from(kBraninFixed, {"cake.operator=llm"})), ConfigError); // no fixture
    EXPECT_THROW(validate(cfg_from(kBraninFixed, {"cake.operator=llm", "llm.replay=/nonexistent"})), ConfigError);
    EXPECT_THROW(load_config("/nonexistent.ini"), ConfigError);
}

TEST(Config, RelativeFixturePathResolvesAgainstConfigFile)
{
    const auto dir = scratch("cfgpath");
    std::ofstream(dir / "c.ini") << "[objective]\nbenchmark = branin\n[cake]\noperator = llm\n[llm]\nreplay = f.jsonl\n";
    const auto c = load_config((dir / "c.ini").string());
    EXPECT_EQ(fs::path(c.llm.replay), dir / "f.jsonl");
}

TEST(Sweep, RowCountAndByteIdenticalReruns)
{
    auto cfg = cfg_from(kBraninFixed);
    const auto a = run_sweep(cfg);
    const auto b = run_sweep(cfg);
    std::ostringstream sa;
    std::ostringstream sb;
    write_trials_csv(sa, trial_rows(a), 2);
    write_trials_csv(sb, trial_rows(b), 2);
    EXPECT_EQ(sa.str(), sb.str());
    EXPECT_EQ(trial_rows(a).size(), 2U * (5U + 6U));
    for (const auto& job : a) {
        for (std::size_t i = 1; i < job.result.trials.size(); ++i) {
            EXPECT_LE(job.result.trials[i].best_so_far, job.result.trials[i - 1].best_so_far);
        }
    }
}

TEST(Sweep, WorkerCountDoesNotChangeOutput)
{
    auto cfg = cfg_from(kBraninFixed, {"run.strategies=fixed(SE), cake_bic", "run.T=3"});
    const auto serial = run_sweep(cfg);
    cfg.workers = 3;
    const auto parallel = run_sweep(cfg);
    std::ostringstream a;
    std::ostringstream b;
    write_trials_csv(a, trial_rows(serial), 2);
    write_trials_csv(b, trial_rows(parallel), 2);
    EXPECT_EQ(a.str(), b.str());
}

TEST(Sweep, ArtifactsRoundTrip)
{
    const auto dir = scratch("roundtrip");
    auto cfg = cfg_from(kBraninFixed, {"run.strategies=cake, fixed(SE)", "run.T=3", "run.seeds=4"});
    const auto jobs = run_sweep(cfg);
    write_artifacts(dir, cfg, jobs, 0.0);

    // trials.csv: re-reading and re-writing reproduces the bytes
    std::ifstream tin(dir / "trials.csv");
    int d = 0;
    const auto rows = read_trials_csv(tin, &d);
    EXPECT_EQ(d, 2);
    std::ostringstream again;
    write_trials_csv(again, rows, d);
    EXPECT_EQ(again.str(), slurp(dir / "trials.csv"));
    const auto text = slurp(dir / "trials.csv");
    EXPECT_EQ(text.find("nan"), std::string::npos);
    EXPECT_EQ(text.find("inf"), std::string::npos);

    // baker.jsonl agrees with the in-memory tables
    std::ifstream bin(dir / "baker.jsonl");
    const auto baker = read_baker_jsonl(bin);
    ASSERT_EQ(baker.size(), 6U);
    std::size_t k = 0;
    for (const auto& job : jobs) {
        for (const auto& it : job.result.iterations) {
            const auto& row = baker[k++];
            EXPECT_EQ(row.run_id, job.run_id);
            EXPECT_EQ(row.chosen, it.chosen);
            ASSERT_EQ(row.per_kernel.size(), it.per_kernel.size());
            for (std::size_t i = 0; i < it.per_kernel.size(); ++i) {
                EXPECT_EQ(row.per_kernel[i].kernel, it.per_kernel[i].kernel);
                EXPECT_EQ(row.per_kernel[i].bic, it.per_kernel[i].bic);
                EXPECT_EQ(row.per_kernel[i].acq_raw, it.per_kernel[i].acq_raw);
                EXPECT_EQ(row.per_kernel[i].x, it.per_kernel[i].x);
            }
        }
    }

    // population.jsonl holds the evolving strategy only
    std::ifstream pin(dir / "population.jsonl");
    const auto pop = read_population_jsonl(pin);
    ASSERT_EQ(pop.size(), 3U);
    for (const auto& p : pop) {
        EXPECT_EQ(p.strategy, "cake");
        EXPECT_FALSE(p.members.empty());
    }

    std::ifstream sin(dir / "summary.json");
    const auto summary = read_summary(sin);
    EXPECT_EQ(summary["runs"].size(), 2U);
    EXPECT_TRUE(summary["validity_rate"].is_null());
}

TEST(Sweep, LoadersRejectForeignFiles)
{
    std::istringstream no_schema("{\"run_id\": \"x\"}\n");
    EXPECT_THROW(read_jsonl(no_schema), FormatError);
    std::istringstream garbage("not json\n");
    EXPECT_THROW(read_jsonl(garbage), FormatError);
    std::istringstream bad_header("a,b,c\n");
    EXPECT_THROW(read_trials_csv(bad_header), FormatError);
    std::istringstream summary("{\"schema\": 2}");
    EXPECT_THROW(read_summary(summary), FormatError);
}

TEST(Summary, StandardErrorIsSampleStdOverRootN)
{
    const auto m = mean_se({1.0, 2.0, 3.0, 6.0});
    EXPECT_DOUBLE_EQ(m.mean, 3.0);
    EXPECT_NEAR(*m.se, std::sqrt(14.0 / 3.0) / 2.0, 1e-15);
    EXPECT_FALSE(mean_se({4.0}).se.has_value());
}

TEST(Summary, RegretMeanMatchesTrials)
{
    auto cfg = cfg_from(kBraninFixed, {"run.seeds=0-3", "run.T=3"});
    const auto jobs = run_sweep(cfg);
    const auto s = make_summary(cfg, jobs, 0.0);
    std::vector<double> finals;
    for (const auto& j : jobs) { finals.push_back(*j.result.trials.back().regret); }
    double mean = 0.0;
    for (double v : finals) { mean += v / 4.0; }
    EXPECT_NEAR(s["strategies"][0]["final_regret_mean"].get<double>(), mean, 1e-12);
    EXPECT_EQ(s["strategies"][0]["seeds"].get<int>(), 4);
}

TEST(Llm, ValidityRateMatchesHandCount)
{
    // 5 crossovers: valid, 3 x invalid (fallback), valid, valid, valid; then 1 valid mutation.
    auto cfg = cfg_from(kBraninFixed, {"run.strategies=cake", "run.seeds=0", "run.T=1", "cake.operator=llm",
                                       "cake.p_m=1", "llm.replay=" + kData + "/replay_validity.jsonl"});
    const auto jobs = run_sweep(cfg);
    const auto s = make_summary(cfg, jobs, 0.0);
    EXPECT_EQ(s["llm_replies"].get<int>(), 8);
    EXPECT_EQ(s["llm_valid"].get<int>(), 5);
    EXPECT_DOUBLE_EQ(s["validity_rate"].get<double>(), 5.0 / 8.0);
    EXPECT_EQ(s["fallbacks"].get<int>(), 1);
    ASSERT_EQ(jobs[0].llm_calls.size(), 8U);
    EXPECT_EQ(jobs[0].llm_calls[0]["kernel"], "LIN + SE");
    EXPECT_EQ(jobs[0].llm_calls[7]["kernel"], "LIN + RQ");
    EXPECT_EQ(jobs[0].llm_calls[7]["kind"], "mutation");
}

TEST(ExternalObjectiveTest, SpeaksTheJsonProtocol)
{
    const ExternalObjective f(R"(read line; echo "{\"y\": 2.5}")");
    Eigen::VectorXd x(2);
    x << 0.1, 0.2;
    EXPECT_DOUBLE_EQ(f(x), 2.5);

    const auto dir = scratch("extobj");
    std::ofstream(dir / "echo_sum.py") << "import json,sys\nx=json.loads(sys.stdin.readline())['x']\n"
                                          "print(json.dumps({'y': sum(x)}))\n";
    const ExternalObjective sum("python3 " + (dir / "echo_sum.py").string());
    EXPECT_DOUBLE_EQ(sum(x), 0.1 + 0.2);
}

TEST(ExternalObjectiveTest, FailuresAreObjectiveErrors)
{
    Eigen::VectorXd x = Eigen::VectorXd::Zero(1);
    EXPECT_THROW(ExternalObjective("exit 3")(x), ObjectiveError);
    EXPECT_THROW(ExternalObjective("echo hello")(x), ObjectiveError);
    EXPECT_THROW(ExternalObjective("echo '{\"z\": 1}'")(x), ObjectiveError);
}

TEST(ExternalObjectiveTest, DrivesASweep)
{
    auto cfg = cfg_from(R"ini(
[objective]
command = read l; python3 -c "import json,sys; x=json.loads(sys.argv[1])['x']; print(json.dumps({'y': (x[0]-0.3)**2}))" "$l"
lower = 0
upper = 1
f_opt = 0
[run]
strategies = fixed(SE)
T = 4
)ini");
    const auto jobs = run_sweep(cfg);
    ASSERT_EQ(jobs[0].result.trials.size(), 9U);
    EXPECT_LT(jobs[0].result.trials.back().best_so_far, 0.05);
}

TEST(Export, FitnessHistogramGroups)
{
    const auto dir = scratch("evolve");
    auto cfg = cfg_from(kBraninFixed, {"run.seeds=0,1", "dataset.n=15", "dataset.edits=10", "cake.n_c=2"});
    run_evolution(cfg, dir);
    std::ifstream in(dir / "population.jsonl");
    const auto rows = read_population_jsonl(in);
    ASSERT_EQ(rows.size(), 22U); // t = 0..10 per seed

    const auto csv = export_fitness_histogram(rows, {1, 5, 10});
    std::istringstream lines(csv);
    std::string line;
    std::getline(lines, line);
    EXPECT_EQ(line, "edit_count,fitness");
    std::map<int, std::vector<double>> groups;
    while (std::getline(lines, line)) {
        const auto comma = line.find(',');
        const double f = std::stod(line.substr(comma + 1));
        EXPECT_GE(f, 0.0);
        EXPECT_LE(f, 1.0);
        groups[std::stoi(line.substr(0, comma))].push_back(f);
    }
    EXPECT_EQ(groups.size(), 3U);
    EXPECT_TRUE(groups.contains(1) && groups.contains(5) && groups.contains(10));

    EXPECT_EQ(export_fitness_histogram(rows, {}), "edit_count,fitness\n");
    EXPECT_THROW(export_fitness_histogram(rows, {11}), MissingSnapshot);
    EXPECT_THROW(export_fitness_histogram({}, {1}), MissingSnapshot);
}

TEST(Export, RegretCurveAveragesSeeds)
{
    auto cfg = cfg_from(kBraninFixed, {"run.T=2"});
    const auto rows = trial_rows(run_sweep(cfg));
    const auto csv = export_regret_curve(rows);
    std::istringstream lines(csv);
    std::string line;
    std::getline(lines, line);
    EXPECT_EQ(line, "strategy,evaluation,n,regret_mean,regret_se,best_mean,best_se");
    int count = 0;
    while (std::getline(lines, line)) {
        ++count;
        EXPECT_EQ(line.rfind("fixed(SE),", 0), 0U);
    }
    EXPECT_EQ(count, 7);
    const double r0 = *rows[0].rec.regret;
    const double r1 = *rows[7].rec.regret;
    EXPECT_NE(csv.find("fixed(SE),1,2," + detail::fmt_double((r0 + r1) / 2.0)), std::string::npos);
}

TEST(ErrorRecord, CarriesKind)
{
    const auto j = error_record(ObjectiveError("boom"));
    EXPECT_EQ(j["error"], "ObjectiveError");
    EXPECT_EQ(j["schema"], 1);
    EXPECT_EQ(error_record(std::runtime_error("x"))["error"], "Error");
}
