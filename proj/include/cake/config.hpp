// SPDX-License-Identifier: Apache-2.0

#ifndef CAKE_CONFIG_HPP
#define CAKE_CONFIG_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "acquisition.hpp"
#include "benchmarks.hpp"
#include "bo_engine.hpp"
#include "errors.hpp"
#include "prompt_context.hpp"

namespace cake {

enum class OperatorKind { Ga, Random, Llm };

inline std::string_view to_string(OperatorKind k) noexcept
{
    switch (k) {
    case OperatorKind::Ga: return "ga";
    case OperatorKind::Random: return "random";
    case OperatorKind::Llm: return "llm";
    }
    return "?";
}

struct LlmSettings {
    std::string transport = "replay"; // replay | live
    std::string replay;               // fixture path
    std::string endpoint = "https://api.openai.com/v1/chat/completions";
    std::string model = "gpt-4o-mini";
    double temperature = 0.7;
    int max_tokens = 256;
    int timeout_s = 60;
    int retries = 3;
    std::string api_key_env = "CAKE_LLM_API_KEY";
};

/// Synthetic structure-recovery data for the `evolve` command.
struct DatasetSettings {
    std::string source = "lin_per"; // lin_per | path to a CSV of x..., y
    int n = 30;
    std::uint64_t seed = 0;
    int edits = 10;
};

struct RunConfig {
    // objective: a registered benchmark or an external command over a box
    std::string benchmark;
    std::string command;
    std::vector<double> lower;
    std::vector<double> upper;
    std::optional<double> f_opt;

    std::vector<std::string> strategies{"cake"};
    std::vector<std::uint64_t> seeds{0};
    int T = 0;
    int n_init = 0;
    std::string output = "runs/out";
    int workers = 1;
    bool timing = false;

    OperatorKind op = OperatorKind::Ga;
    CakeConfig cake;
    AcqConfig acq;
    BakerNorm norm = BakerNorm::Joint;
    LlmSettings llm;
    DatasetSettings dataset;

    [[nodiscard]] Box box() const
    {
        if (!benchmark.empty()) { return get_benchmark(benchmark).box; }
        return {Eigen::Map<const Eigen::VectorXd>(lower.data(), static_cast<Eigen::Index>(lower.size())),
                Eigen::Map<const Eigen::VectorXd>(upper.data(), static_cast<Eigen::Index>(upper.size()))};
    }

    [[nodiscard]] std::string objective_name() const { return benchmark.empty() ? "command" : benchmark; }
};

namespace detail {

inline const std::set<std::string>& known_keys()
{
    static const std::set<std::string> keys{
        "objective.benchmark", "objective.command", "objective.lower", "objective.upper", "objective.f_opt",
        "run.strategies",      "run.seeds",         "run.T",           "run.n_init",      "run.output",
        "run.workers",         "run.timing",        "cake.operator",   "cake.n_c",        "cake.p_m",
        "cake.n_p",            "cake.max_depth",    "cake.prompt",     "cake.cks_levels", "acq.kind",
        "acq.ucb_beta",        "acq.candidates",    "acq.refine_steps", "acq.baker_norm", "llm.transport",
        "llm.replay",          "llm.endpoint",      "llm.model",       "llm.temperature", "llm.max_tokens",
        "llm.timeout_s",       "llm.retries",       "llm.api_key_env", "dataset.source",  "dataset.n",
        "dataset.seed",        "dataset.edits",
    };
    return keys;
}

inline std::string trim_copy(std::string s)
{
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) { return {}; }
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep)
{
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(s);
    while (std::getline(in, item, sep)) {
        item = trim_copy(item);
        if (!item.empty()) { out.push_back(item); }
    }
    return out;
}

template <typename T>
T parse_number(const std::string& key, const std::string& text)
{
    std::istringstream in(text);
    T v{};
    in >> v;
    if (in.fail() || !(in >> std::ws).eof()) { throw ConfigError("'" + key + "': cannot parse '" + text + "'"); }
    return v;
}

inline bool parse_bool(const std::string& key, const std::string& text)
{
    if (text == "true" || text == "1" || text == "yes") { return true; }
    if (text == "false" || text == "0" || text == "no") { return false; }
    throw ConfigError("'" + key + "': expected a boolean, got '" + text + "'");
}

/// "0-3,7" -> {0, 1, 2, 3, 7}
inline std::vector<std::uint64_t> parse_seeds(const std::string& text)
{
    std::vector<std::uint64_t> out;
    for (const auto& part : split(text, ',')) {
        const auto dash = part.find('-', 1);
        if (dash == std::string::npos) {
            out.push_back(parse_number<std::uint64_t>("run.seeds", part));
            continue;
        }
        const auto a = parse_number<std::uint64_t>("run.seeds", part.substr(0, dash));
        const auto b = parse_number<std::uint64_t>("run.seeds", part.substr(dash + 1));
        if (b < a) { throw ConfigError("run.seeds: empty range '" + part + "'"); }
        for (auto s = a; s <= b; ++s) { out.push_back(s); }
    }
    return out;
}

inline std::vector<double> parse_vector(const std::string& key, const std::string& text)
{
    std::vector<double> out;
    for (const auto& item : split(text, ' ')) {
        for (const auto& v : split(item, ',')) { out.push_back(parse_number<double>(key, v)); }
    }
    return out;
}

} // namespace detail

/// Applies one `section.key=value` override.
inline void apply_override(boost::property_tree::ptree& tree, const std::string& assignment)
{
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) { throw ConfigError("override must look like section.key=value"); }
    tree.put(detail::trim_copy(assignment.substr(0, eq)), detail::trim_copy(assignment.substr(eq + 1)));
}

/// Builds a RunConfig from a key-value tree. Relative input paths (replay
/// fixture, dataset) resolve against `base_dir`; the output directory does not.
inline RunConfig config_from_tree(const boost::property_tree::ptree& tree, const std::filesystem::path& base_dir = {})
{
    using detail::parse_number;
    for (const auto& [section, body] : tree) {
        if (body.empty()) { throw ConfigError("top-level key '" + section + "' outside a section"); }
        for (const auto& [key, value] : body) {
            if (!detail::known_keys().contains(section + "." + key)) {
                throw ConfigError("unknown key '" + section + "." + key + "'");
            }
        }
    }
    auto get = [&](const std::string& key) -> std::optional<std::string> {
        if (auto v = tree.get_optional<std::string>(key)) {
            auto t = detail::trim_copy(*v);
            if (!t.empty()) { return t; }
        }
        return std::nullopt;
    };
    auto resolve = [&](const std::string& p) {
        const std::filesystem::path path(p);
        return (path.is_absolute() || base_dir.empty() ? path : base_dir / path).lexically_normal().string();
    };

    RunConfig c;
    if (auto v = get("objective.benchmark")) { c.benchmark = *v; }
    if (auto v = get("objective.command")) { c.command = *v; }
    if (auto v = get("objective.lower")) { c.lower = detail::parse_vector("objective.lower", *v); }
    if (auto v = get("objective.upper")) { c.upper = detail::parse_vector("objective.upper", *v); }
    if (auto v = get("objective.f_opt")) { c.f_opt = parse_number<double>("objective.f_opt", *v); }

    if (auto v = get("run.strategies")) { c.strategies = detail::split(*v, ','); }
    if (auto v = get("run.seeds")) { c.seeds = detail::parse_seeds(*v); }
    if (auto v = get("run.T")) { c.T = parse_number<int>("run.T", *v); }
    if (auto v = get("run.n_init")) { c.n_init = parse_number<int>("run.n_init", *v); }
    if (auto v = get("run.output")) { c.output = *v; }
    if (auto v = get("run.workers")) { c.workers = parse_number<int>("run.workers", *v); }
    if (auto v = get("run.timing")) { c.timing = detail::parse_bool("run.timing", *v); }

    if (auto v = get("cake.operator")) {
        if (*v == "ga") {
            c.op = OperatorKind::Ga;
        } else if (*v == "random") {
            c.op = OperatorKind::Random;
        } else if (*v == "llm") {
            c.op = OperatorKind::Llm;
        } else {
            throw ConfigError("cake.operator must be ga, random or llm");
        }
    }
    if (auto v = get("cake.n_c")) { c.cake.n_c = parse_number<int>("cake.n_c", *v); }
    if (auto v = get("cake.p_m")) { c.cake.p_m = parse_number<double>("cake.p_m", *v); }
    if (auto v = get("cake.n_p")) { c.cake.n_p = parse_number<int>("cake.n_p", *v); }
    if (auto v = get("cake.max_depth")) { c.cake.max_depth = parse_number<int>("cake.max_depth", *v); }
    if (auto v = get("cake.prompt")) { c.cake.prompt = prompt_mode_from_string(*v); }
    if (auto v = get("cake.cks_levels")) { c.cake.cks_levels = parse_number<int>("cake.cks_levels", *v); }

    if (auto v = get("acq.kind")) { c.acq.kind = acq_kind_from_string(*v); }
    if (auto v = get("acq.ucb_beta")) { c.acq.ucb_beta = parse_number<double>("acq.ucb_beta", *v); }
    if (auto v = get("acq.candidates")) { c.acq.candidates = parse_number<int>("acq.candidates", *v); }
    if (auto v = get("acq.refine_steps")) { c.acq.refine_steps = parse_number<int>("acq.refine_steps", *v); }
    if (auto v = get("acq.baker_norm")) { c.norm = baker_norm_from_string(*v); }

    if (auto v = get("llm.transport")) { c.llm.transport = *v; }
    if (auto v = get("llm.replay")) { c.llm.replay = resolve(*v); }
    if (auto v = get("llm.endpoint")) { c.llm.endpoint = *v; }
    if (auto v = get("llm.model")) { c.llm.model = *v; }
    if (auto v = get("llm.temperature")) { c.llm.temperature = parse_number<double>("llm.temperature", *v); }
    if (auto v = get("llm.max_tokens")) { c.llm.max_tokens = parse_number<int>("llm.max_tokens", *v); }
    if (auto v = get("llm.timeout_s")) { c.llm.timeout_s = parse_number<int>("llm.timeout_s", *v); }
    if (auto v = get("llm.retries")) { c.llm.retries = parse_number<int>("llm.retries", *v); }
    if (auto v = get("llm.api_key_env")) { c.llm.api_key_env = *v; }

    if (auto v = get("dataset.source")) { c.dataset.source = *v == "lin_per" ? *v : resolve(*v); }
    if (auto v = get("dataset.n")) { c.dataset.n = parse_number<int>("dataset.n", *v); }
    if (auto v = get("dataset.seed")) { c.dataset.seed = parse_number<std::uint64_t>("dataset.seed", *v); }
    if (auto v = get("dataset.edits")) { c.dataset.edits = parse_number<int>("dataset.edits", *v); }
    return c;
}

/// Rejects inconsistent settings; returns the config for chaining.
inline const RunConfig& validate(const RunConfig& c)
{
    if (c.benchmark.empty() == c.command.empty()) {
        throw ConfigError("set exactly one of objective.benchmark and objective.command");
    }
    if (!c.benchmark.empty()) {
        (void)get_benchmark(c.benchmark);
    } else {
        if (c.lower.empty() || c.lower.size() != c.upper.size()) {
            throw ConfigError("objective.lower and objective.upper must be non-empty and of equal length");
        }
        (void)c.box();
    }
    if (c.strategies.empty()) { throw ConfigError("run.strategies is empty"); }
    for (const auto& s : c.strategies) { (void)Strategy::parse_name(s); }
    if (c.seeds.empty()) { throw ConfigError("run.seeds is empty"); }
    if (std::set<std::uint64_t>(c.seeds.begin(), c.seeds.end()).size() != c.seeds.size()) {
        throw ConfigError("run.seeds contains duplicates");
    }
    if (c.T < 0) { throw ConfigError("run.T must be positive (0 selects 10 * d)"); }
    if (c.n_init != 0 && c.n_init < 2) { throw ConfigError("run.n_init must be at least 2"); }
    if (c.workers < 1) { throw ConfigError("run.workers must be at least 1"); }
    if (c.cake.n_c < 0 || c.cake.n_p < 1) { throw ConfigError("cake.n_c must be >= 0 and cake.n_p >= 1"); }
    if (!(c.cake.p_m >= 0.0 && c.cake.p_m <= 1.0)) { throw ConfigError("cake.p_m must lie in [0, 1]"); }
    if (c.cake.max_depth < 1) { throw ConfigError("cake.max_depth must be at least 1"); }
    if (c.cake.cks_levels < 0) { throw ConfigError("cake.cks_levels must be >= 0"); }
    c.acq.validate();
    if (c.op == OperatorKind::Llm) {
        if (c.llm.transport == "replay") {
            if (c.llm.replay.empty()) { throw ConfigError("llm.replay is required for the replay transport"); }
            if (!std::filesystem::exists(c.llm.replay)) { throw ConfigError("replay fixture not found: " + c.llm.replay); }
        } else if (c.llm.transport != "live") {
            throw ConfigError("llm.transport must be replay or live");
        }
        if (c.llm.retries < 1) { throw ConfigError("llm.retries must be at least 1"); }
    }
    if (c.dataset.n < 2 || c.dataset.edits < 0) { throw ConfigError("dataset.n must be >= 2 and dataset.edits >= 0"); }
    return c;
}

inline boost::property_tree::ptree read_config_tree(const std::string& path)
{
    boost::property_tree::ptree tree;
    try {
        boost::property_tree::ini_parser::read_ini(path, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw ConfigError(e.what());
    }
    return tree;
}

inline RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {})
{
    auto tree = read_config_tree(path);
    for (const auto& o : overrides) { apply_override(tree, o); }
    return config_from_tree(tree, std::filesystem::path(path).parent_path());
}

} // namespace cake

#endif
