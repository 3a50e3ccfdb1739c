// SPDX-License-Identifier: Apache-2.0
//
// cake_cli: run, sweep, evolve, export, validate-config.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

// Eigen before httplib (see http_transport.hpp).
#include "cake/runner.hpp"

#include <CLI11.hpp>

namespace {

using namespace cake;

struct CommonFlags {
    std::string config;
    std::vector<std::string> sets;
    std::optional<std::string> output;
    std::optional<std::string> seeds;
    std::optional<std::string> strategies;
    std::optional<int> T;
    std::optional<int> workers;
    bool timing = false;
};

void add_common(CLI::App* cmd, CommonFlags& f)
{
    cmd->add_option("config", f.config, "INI configuration file")->required()->check(CLI::ExistingFile);
    cmd->add_option("--set", f.sets, "override, section.key=value (repeatable)");
    cmd->add_option("-o,--output", f.output, "output directory");
    cmd->add_option("--seeds", f.seeds, "seeds, e.g. 0-19 or 1,4");
    cmd->add_option("--strategies", f.strategies, "comma-separated strategies");
    cmd->add_option("-T,--budget", f.T, "BO iterations (0 = 10 * d)");
    cmd->add_option("-j,--workers", f.workers, "parallel runs");
    cmd->add_flag("--timing", f.timing, "record wall_ms (breaks byte-identical output)");
}

RunConfig resolve(const CommonFlags& f)
{
    auto overrides = f.sets;
    if (f.output) { overrides.push_back("run.output=" + *f.output); }
    if (f.seeds) { overrides.push_back("run.seeds=" + *f.seeds); }
    if (f.strategies) { overrides.push_back("run.strategies=" + *f.strategies); }
    if (f.T) { overrides.push_back("run.T=" + std::to_string(*f.T)); }
    if (f.workers) { overrides.push_back("run.workers=" + std::to_string(*f.workers)); }
    if (f.timing) { overrides.push_back("run.timing=true"); }
    auto cfg = load_config(f.config, overrides);
    validate(cfg);
    return cfg;
}

json describe(const RunConfig& c)
{
    json j{{"objective", c.objective_name()},
           {"strategies", c.strategies},
           {"seeds", c.seeds},
           {"T", c.T > 0 ? c.T : default_budget(c.box().dim())},
           {"n_init", c.n_init > 0 ? c.n_init : default_n_init(c.box().dim())},
           {"output", c.output},
           {"workers", c.workers},
           {"operator", to_string(c.op)},
           {"n_c", c.cake.n_c},
           {"p_m", c.cake.p_m},
           {"n_p", c.cake.n_p},
           {"max_depth", c.cake.max_depth},
           {"prompt", to_string(c.cake.prompt)},
           {"acq", to_string(c.acq.kind)},
           {"baker_norm", to_string(c.norm)}};
    if (!c.command.empty()) { j["command"] = c.command; }
    if (c.op == OperatorKind::Llm) {
        j["transport"] = c.llm.transport;
        if (c.llm.transport == "replay") { j["replay"] = c.llm.replay; }
    }
    return j;
}

int execute(const RunConfig& cfg)
{
    const auto t0 = std::chrono::steady_clock::now();
    const auto jobs = run_sweep(cfg);
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_artifacts(cfg.output, cfg, jobs, wall);
    const auto summary = make_summary(cfg, jobs, wall);
    for (const auto& s : summary["strategies"]) {
        std::cout << s["strategy"].get<std::string>() << ": final regret "
                  << (s["final_regret_mean"].is_null() ? "n/a" : s["final_regret_mean"].dump()) << " over "
                  << s["seeds"] << " seed(s)\n";
    }
    std::cout << "wrote " << cfg.output << '\n';
    return 0;
}

std::vector<int> parse_edits(const std::string& text)
{
    std::vector<int> out;
    for (const auto& part : detail::split(text, ',')) { out.push_back(detail::parse_number<int>("edits", part)); }
    return out;
}

void emit(const std::string& text, const std::optional<std::string>& path)
{
    if (!path) {
        std::cout << text;
        return;
    }
    std::ofstream out(*path, std::ios::binary);
    if (!out) { throw ConfigError("cannot write " + *path); }
    out << text;
}

int exit_code_for(const std::exception& e)
{
    if (dynamic_cast<const ConfigError*>(&e) != nullptr || dynamic_cast<const UnknownBenchmark*>(&e) != nullptr ||
        dynamic_cast<const SyntaxError*>(&e) != nullptr || dynamic_cast<const UnknownKernel*>(&e) != nullptr) {
        return 2;
    }
    if (dynamic_cast<const ObjectiveError*>(&e) != nullptr || dynamic_cast<const OutOfDomain*>(&e) != nullptr) {
        return 3;
    }
    return 1;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Kernel-evolving Bayesian optimization"};
    app.require_subcommand(1);

    CommonFlags run_flags;
    auto* run_cmd = app.add_subcommand("run", "one (strategy, seed) run; the first of each unless given");
    add_common(run_cmd, run_flags);
    std::optional<std::uint64_t> run_seed;
    std::optional<std::string> run_strategy;
    run_cmd->add_option("--seed", run_seed, "seed");
    run_cmd->add_option("--strategy", run_strategy, "strategy");

    CommonFlags sweep_flags;
    auto* sweep_cmd = app.add_subcommand("sweep", "every strategy x seed in the config");
    add_common(sweep_cmd, sweep_flags);

    CommonFlags evolve_flags;
    auto* evolve_cmd = app.add_subcommand("evolve", "population evolution on a fixed dataset");
    add_common(evolve_cmd, evolve_flags);

    auto* export_cmd = app.add_subcommand("export", "plot-ready CSVs");
    export_cmd->require_subcommand(1);
    std::string pop_path;
    std::string edits_text = "1,5,10";
    std::optional<std::string> hist_out;
    auto* hist_cmd = export_cmd->add_subcommand("histogram", "fitness after given edit counts");
    hist_cmd->add_option("population", pop_path, "population.jsonl")->required()->check(CLI::ExistingFile);
    hist_cmd->add_option("--edits", edits_text, "comma-separated edit counts (may be empty)");
    hist_cmd->add_option("-o,--out", hist_out, "output CSV (default stdout)");
    std::string trials_path;
    std::optional<std::string> curve_out;
    auto* curve_cmd = export_cmd->add_subcommand("regret", "regret curve per strategy");
    curve_cmd->add_option("trials", trials_path, "trials.csv")->required()->check(CLI::ExistingFile);
    curve_cmd->add_option("-o,--out", curve_out, "output CSV (default stdout)");

    CommonFlags check_flags;
    auto* check_cmd = app.add_subcommand("validate-config", "check a config and print the resolved settings");
    add_common(check_cmd, check_flags);

    CLI11_PARSE(app, argc, argv);

    std::optional<std::string> output_dir;
    try {
        if (*run_cmd) {
            auto cfg = resolve(run_flags);
            output_dir = cfg.output;
            cfg.strategies = {run_strategy ? *run_strategy : cfg.strategies.front()};
            cfg.seeds = {run_seed ? *run_seed : cfg.seeds.front()};
            validate(cfg);
            return execute(cfg);
        }
        if (*sweep_cmd) {
            const auto cfg = resolve(sweep_flags);
            output_dir = cfg.output;
            return execute(cfg);
        }
        if (*evolve_cmd) {
            const auto cfg = resolve(evolve_flags);
            output_dir = cfg.output;
            run_evolution(cfg, cfg.output);
            std::cout << "wrote " << cfg.output << '\n';
            return 0;
        }
        if (*hist_cmd) {
            std::ifstream in(pop_path);
            emit(export_fitness_histogram(read_population_jsonl(in), parse_edits(edits_text)), hist_out);
            return 0;
        }
        if (*curve_cmd) {
            std::ifstream in(trials_path);
            emit(export_regret_curve(read_trials_csv(in)), curve_out);
            return 0;
        }
        if (*check_cmd) {
            std::cout << describe(resolve(check_flags)).dump(2) << '\n';
            return 0;
        }
    } catch (const std::exception& e) {
        const auto record = error_record(e);
        std::cerr << record.dump() << '\n';
        if (output_dir) {
            std::error_code ec;
            std::filesystem::create_directories(*output_dir, ec);
            std::ofstream(std::filesystem::path(*output_dir) / "error.json") << record.dump(2) << '\n';
        }
        return exit_code_for(e);
    }
    return 1;
}
