// SPDX-License-Identifier: Apache-2.0

#ifndef CAKE_RUNNER_HPP
#define CAKE_RUNNER_HPP

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <boost/process.hpp>

#include "bo_engine.hpp"
#include "config.hpp"
#include "http_transport.hpp"
#include "llm_client.hpp"
#include "synthetic.hpp"

#include <json.hpp>

namespace cake {

using json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

// ---------------------------------------------------------------------------
// Objectives

/// Black box in a child process: writes {"x": [...]} to its stdin and reads
/// {"y": v} from its stdout.
class ExternalObjective {
public:
    explicit ExternalObjective(std::string command) : command_(std::move(command)) {}

    double operator()(const Eigen::VectorXd& x) const
    {
        namespace bp = boost::process;
        bp::opstream in;
        bp::ipstream out;
        std::string reply;
        int code = 0;
        try {
            bp::child child("/bin/sh", std::vector<std::string>{"-c", command_}, bp::std_in < in, bp::std_out > out);
            in << json{{"x", std::vector<double>(x.data(), x.data() + x.size())}}.dump() << '\n';
            in.flush();
            in.pipe().close();
            std::string line;
            while (std::getline(out, line)) {
                if (reply.empty() && line.find_first_not_of(" \t\r") != std::string::npos) { reply = line; }
            }
            child.wait();
            code = child.exit_code();
        } catch (const std::system_error& e) {
            throw ObjectiveError(std::string("cannot run objective command: ") + e.what());
        }
        if (code != 0) { throw ObjectiveError("objective command exited with status " + std::to_string(code)); }
        try {
            const auto j = json::parse(reply);
            return j.at("y").get<double>();
        } catch (const json::exception&) {
            throw ObjectiveError("objective command printed '" + reply + "', expected {\"y\": <number>}");
        }
    }

private:
    std::string command_;
};

struct ObjectiveSpec {
    Objective f;
    Box box;
    std::optional<double> f_opt;
};

inline ObjectiveSpec make_objective(const RunConfig& cfg)
{
    if (!cfg.benchmark.empty()) {
        const auto& b = get_benchmark(cfg.benchmark);
        return {[&b](const Eigen::VectorXd& x) { return b.evaluate(x); }, b.box, cfg.f_opt ? cfg.f_opt : b.f_opt};
    }
    return {ExternalObjective(cfg.command), cfg.box(), cfg.f_opt};
}

// ---------------------------------------------------------------------------
// Jobs

using TransportFactory = std::function<std::unique_ptr<Transport>()>;

inline TransportFactory default_transport_factory(const RunConfig& cfg)
{
    const auto settings = cfg.llm;
    return [settings]() -> std::unique_ptr<Transport> {
        if (settings.transport == "live") {
            LiveConfig live;
            live.endpoint = settings.endpoint;
            live.model = settings.model;
            live.temperature = settings.temperature;
            live.max_tokens = settings.max_tokens;
            live.timeout_s = settings.timeout_s;
            live.api_key_env = settings.api_key_env;
            return std::make_unique<LiveTransport>(live);
        }
        return std::make_unique<ReplayTransport>(ReplayTransport::from_file(settings.replay));
    };
}

inline std::string make_run_id(const std::string& strategy, std::uint64_t seed)
{
    return strategy + "/seed" + std::to_string(seed);
}

struct JobResult {
    std::string run_id;
    std::string strategy;
    std::uint64_t seed = 0;
    RunResult result;
    std::vector<json> llm_calls;
    std::optional<LlmStats> llm;
};

inline json to_json(const LlmCall& c)
{
    return {{"kind", to_string(c.kind)}, {"attempt", c.attempt},   {"prompt", c.prompt}, {"response", c.response},
            {"kernel", c.kernel},        {"analysis", c.analysis}, {"error", c.error},   {"valid", c.valid}};
}

/// Operator for the configured kind; `llm_op` is set when it is the LLM.
struct OperatorBundle {
    std::unique_ptr<Transport> transport;
    std::unique_ptr<GeneticOperator> op;
    LlmOperator* llm_op = nullptr;
};

inline OperatorBundle make_operator(const RunConfig& cfg, const TransportFactory& factory)
{
    OperatorBundle b;
    switch (cfg.op) {
    case OperatorKind::Ga: b.op = std::make_unique<GaOperator>(); break;
    case OperatorKind::Random: b.op = std::make_unique<RandomOperator>(); break;
    case OperatorKind::Llm: {
        b.transport = factory();
        auto op = std::make_unique<LlmOperator>(*b.transport, cfg.llm.retries);
        b.llm_op = op.get();
        b.op = std::move(op);
        break;
    }
    }
    return b;
}

inline JobResult run_job(const RunConfig& cfg, const std::string& strategy, std::uint64_t seed,
                         const TransportFactory& factory)
{
    auto spec = make_objective(cfg);
    JobResult job;
    job.strategy = Strategy::parse_name(strategy).label();
    job.run_id = make_run_id(job.strategy, seed);
    job.seed = seed;

    RunOptions opt;
    opt.strategy = Strategy::parse_name(strategy);
    opt.strategy.acq = cfg.acq;
    opt.strategy.norm = cfg.norm;
    opt.cake = cfg.cake;
    opt.T = cfg.T;
    opt.n_init = cfg.n_init;
    opt.seed = seed;
    opt.f_opt = spec.f_opt;

    OperatorBundle bundle;
    if (opt.strategy.evolves()) {
        bundle = make_operator(cfg, factory);
        opt.op = bundle.op.get();
    }
    if (bundle.llm_op != nullptr) {
        opt.on_iteration = [&](const IterationLog& it) {
            for (const auto& c : bundle.llm_op->drain_calls()) {
                auto j = to_json(c);
                j["t"] = it.t;
                job.llm_calls.push_back(std::move(j));
            }
        };
    }
    job.result = run(spec.f, spec.box, opt);
    if (bundle.llm_op != nullptr) { job.llm = bundle.llm_op->stats(); }
    if (!cfg.timing) {
        for (auto& r : job.result.trials) { r.wall_ms = 0; }
    }
    return job;
}

/// Strategy-major grid over seeds. Jobs run on up to `cfg.workers` threads;
/// results come back in grid order regardless of scheduling.
inline std::vector<JobResult> run_sweep(const RunConfig& cfg, const TransportFactory& factory = {})
{
    validate(cfg);
    const auto make = factory ? factory : default_transport_factory(cfg);
    std::vector<std::pair<std::string, std::uint64_t>> grid;
    for (const auto& s : cfg.strategies) {
        for (auto seed : cfg.seeds) { grid.emplace_back(s, seed); }
    }
    std::vector<std::optional<JobResult>> slots(grid.size());
    std::vector<std::exception_ptr> errors(grid.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (std::size_t i = next++; i < grid.size(); i = next++) {
            try {
                slots[i] = run_job(cfg, grid[i].first, grid[i].second, make);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const auto n_threads = std::min<std::size_t>(static_cast<std::size_t>(cfg.workers), grid.size());
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t k = 0; k < n_threads; ++k) { pool.emplace_back(worker); }
        for (auto& t : pool) { t.join(); }
    }
    for (const auto& e : errors) {
        if (e) { std::rethrow_exception(e); }
    }
    std::vector<JobResult> out;
    for (auto& s : slots) { out.push_back(std::move(*s)); }
    return out;
}

// ---------------------------------------------------------------------------
// trials.csv

namespace detail {

inline std::string fmt_double(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string fmt_opt(const std::optional<double>& v) { return v ? fmt_double(*v) : std::string(); }

inline std::string csv_field(const std::string& s)
{
    if (s.find_first_of(",\"\n\r") == std::string::npos) { return s; }
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') { out += '"'; }
        out += c;
    }
    return out + "\"";
}

inline std::vector<std::string> csv_split(const std::string& line)
{
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (quoted) { throw FormatError("unterminated quote in CSV line"); }
    out.push_back(std::move(cur));
    return out;
}

inline double parse_double(const std::string& s, const char* what)
{
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != s.size()) { throw FormatError(std::string("bad number for ") + what + ": '" + s + "'"); }
    return v;
}

inline std::optional<double> parse_opt(const std::string& s, const char* what)
{
    if (s.empty()) { return std::nullopt; }
    return parse_double(s, what);
}

} // namespace detail

/// One trials.csv row.
struct TrialRow {
    std::string run_id;
    std::uint64_t seed = 0;
    std::string strategy;
    TrialRecord rec;
};

inline std::string trials_header(int d)
{
    std::string h = "run_id,seed,t,strategy,kernel";
    for (int k = 0; k < d; ++k) { h += ",x" + std::to_string(k); }
    return h + ",y,best_so_far,regret,acq_raw,acq_norm,bic,w,wall_ms,status";
}

inline void write_trial_row(std::ostream& out, const TrialRow& row)
{
    using detail::fmt_double;
    using detail::fmt_opt;
    const auto& r = row.rec;
    out << detail::csv_field(row.run_id) << ',' << row.seed << ',' << r.t << ',' << detail::csv_field(row.strategy)
        << ',' << detail::csv_field(r.kernel);
    for (Eigen::Index k = 0; k < r.x.size(); ++k) { out << ',' << fmt_double(r.x[k]); }
    out << ',' << fmt_double(r.y) << ',' << fmt_double(r.best_so_far) << ',' << fmt_opt(r.regret) << ','
        << fmt_opt(r.acq_raw) << ',' << fmt_opt(r.acq_norm) << ',' << fmt_opt(r.bic) << ',' << fmt_opt(r.w) << ','
        << r.wall_ms << ',' << r.status << '\n';
}

inline std::vector<TrialRow> trial_rows(const std::vector<JobResult>& jobs)
{
    std::vector<TrialRow> rows;
    for (const auto& j : jobs) {
        for (const auto& r : j.result.trials) { rows.push_back({j.run_id, j.seed, j.strategy, r}); }
    }
    return rows;
}

inline void write_trials_csv(std::ostream& out, const std::vector<TrialRow>& rows, int d)
{
    out << trials_header(d) << '\n';
    for (const auto& r : rows) { write_trial_row(out, r); }
}

inline std::vector<TrialRow> read_trials_csv(std::istream& in, int* dim = nullptr)
{
    std::string line;
    if (!std::getline(in, line)) { throw FormatError("trials.csv is empty"); }
    const auto header = detail::csv_split(line);
    const int fixed = 14;
    const int d = static_cast<int>(header.size()) - fixed;
    if (d < 1 || line != trials_header(d)) { throw FormatError("unexpected trials.csv header"); }
    if (dim != nullptr) { *dim = d; }
    std::vector<TrialRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) { continue; }
        const auto f = detail::csv_split(line);
        if (f.size() != header.size()) { throw FormatError("trials.csv row has " + std::to_string(f.size()) + " fields"); }
        TrialRow row;
        row.run_id = f[0];
        row.seed = static_cast<std::uint64_t>(std::stoull(f[1]));
        row.strategy = f[3];
        auto& r = row.rec;
        r.t = std::stoi(f[2]);
        r.kernel = f[4];
        r.x.resize(d);
        for (int k = 0; k < d; ++k) { r.x[k] = detail::parse_double(f[5 + k], "x"); }
        const auto o = static_cast<std::size_t>(5 + d);
        r.y = detail::parse_double(f[o], "y");
        r.best_so_far = detail::parse_double(f[o + 1], "best_so_far");
        r.regret = detail::parse_opt(f[o + 2], "regret");
        r.acq_raw = detail::parse_opt(f[o + 3], "acq_raw");
        r.acq_norm = detail::parse_opt(f[o + 4], "acq_norm");
        r.bic = detail::parse_opt(f[o + 5], "bic");
        r.w = detail::parse_opt(f[o + 6], "w");
        r.wall_ms = std::stoll(f[o + 7]);
        r.status = f[o + 8];
        rows.push_back(std::move(row));
    }
    return rows;
}

// ---------------------------------------------------------------------------
// JSONL artifacts

namespace detail {

inline json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline double number_from(const json& j) { return j.is_null() ? std::numeric_limits<double>::infinity() : j.get<double>(); }

inline json head(const JobResult& job, int t)
{
    return {{"schema", kSchemaVersion}, {"run_id", job.run_id}, {"seed", job.seed}, {"strategy", job.strategy}, {"t", t}};
}

} // namespace detail

inline json to_json(const KernelScore& k)
{
    return {{"kernel", k.kernel},
            {"bic", detail::number_or_null(k.bic)},
            {"w", k.weight},
            {"x", std::vector<double>(k.x.data(), k.x.data() + k.x.size())},
            {"acq_raw", k.acq_raw},
            {"acq_norm", k.acq_norm},
            {"score", k.score}};
}

inline KernelScore kernel_score_from_json(const json& j)
{
    KernelScore k;
    k.kernel = j.at("kernel").get<std::string>();
    k.bic = detail::number_from(j.at("bic"));
    k.weight = j.at("w").get<double>();
    const auto x = j.at("x").get<std::vector<double>>();
    k.x = Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
    k.acq_raw = j.at("acq_raw").get<double>();
    k.acq_norm = j.at("acq_norm").get<double>();
    k.score = j.at("score").get<double>();
    return k;
}

inline json baker_line(const JobResult& job, const IterationLog& it)
{
    auto j = detail::head(job, it.t);
    j["chosen"] = it.chosen;
    j["per_kernel"] = json::array();
    for (const auto& k : it.per_kernel) { j["per_kernel"].push_back(to_json(k)); }
    j["notes"] = it.notes;
    return j;
}

inline json population_line(const JobResult& job, int t, const std::vector<MemberSnapshot>& members)
{
    auto j = detail::head(job, t);
    j["members"] = json::array();
    for (const auto& m : members) {
        j["members"].push_back({{"kernel", m.kernel}, {"bic", detail::number_or_null(m.bic)}, {"fitness", m.fitness}});
    }
    return j;
}

inline json proposals_json(const EvolveLog& log)
{
    json out = json::array();
    for (const auto& p : log.proposals) {
        out.push_back({{"kind", to_string(p.kind)},
                       {"parents", p.parents},
                       {"proposed", p.proposed},
                       {"fallback", p.fallback},
                       {"duplicate", p.duplicate},
                       {"note", p.note}});
    }
    return out;
}

/// Reads every line, checking the schema version.
inline std::vector<json> read_jsonl(std::istream& in)
{
    std::vector<json> out;
    std::string line;
    int number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (line.empty()) { continue; }
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw FormatError("line " + std::to_string(number) + ": " + e.what());
        }
        if (!j.is_object() || j.value("schema", 0) != kSchemaVersion) {
            throw FormatError("line " + std::to_string(number) + ": missing or unsupported schema");
        }
        out.push_back(std::move(j));
    }
    return out;
}

struct BakerRow {
    std::string run_id;
    std::uint64_t seed = 0;
    std::string strategy;
    int t = 0;
    std::string chosen;
    std::vector<KernelScore> per_kernel;
};

inline std::vector<BakerRow> read_baker_jsonl(std::istream& in)
{
    std::vector<BakerRow> rows;
    for (const auto& j : read_jsonl(in)) {
        try {
            BakerRow r{j.at("run_id"), j.at("seed"), j.at("strategy"), j.at("t"), j.at("chosen"), {}};
            for (const auto& k : j.at("per_kernel")) { r.per_kernel.push_back(kernel_score_from_json(k)); }
            rows.push_back(std::move(r));
        } catch (const json::exception& e) {
            throw FormatError(std::string("baker.jsonl: ") + e.what());
        }
    }
    return rows;
}

struct PopulationRow {
    std::string run_id;
    std::uint64_t seed = 0;
    std::string strategy;
    int t = 0;
    std::vector<MemberSnapshot> members;
};

inline std::vector<PopulationRow> read_population_jsonl(std::istream& in)
{
    std::vector<PopulationRow> rows;
    for (const auto& j : read_jsonl(in)) {
        try {
            PopulationRow r{j.at("run_id"), j.at("seed"), j.at("strategy"), j.at("t"), {}};
            for (const auto& m : j.at("members")) {
                r.members.push_back({m.at("kernel"), detail::number_from(m.at("bic")), m.at("fitness")});
            }
            rows.push_back(std::move(r));
        } catch (const json::exception& e) {
            throw FormatError(std::string("population.jsonl: ") + e.what());
        }
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Summary

struct MeanSe {
    double mean = 0.0;
    std::optional<double> se; // needs two values
};

/// Mean and standard error (sample standard deviation / sqrt(n)).
inline MeanSe mean_se(const std::vector<double>& v)
{
    MeanSe out;
    if (v.empty()) { return out; }
    double sum = 0.0;
    for (double x : v) { sum += x; }
    out.mean = sum / static_cast<double>(v.size());
    if (v.size() > 1) {
        double ss = 0.0;
        for (double x : v) { ss += (x - out.mean) * (x - out.mean); }
        out.se = std::sqrt(ss / static_cast<double>(v.size() - 1)) / std::sqrt(static_cast<double>(v.size()));
    }
    return out;
}

inline json make_summary(const RunConfig& cfg, const std::vector<JobResult>& jobs, double wall_s)
{
    auto opt_json = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
    json runs = json::array();
    std::vector<std::string> order;
    std::map<std::string, std::vector<const JobResult*>> groups;
    int replies = 0;
    int valid = 0;
    int fallbacks = 0;
    bool any_llm = false;
    for (const auto& j : jobs) {
        const auto& last = j.result.trials.back();
        json r{{"run_id", j.run_id},
               {"strategy", j.strategy},
               {"seed", j.seed},
               {"evaluations", j.result.trials.size()},
               {"final_best", last.best_so_far},
               {"final_regret", opt_json(last.regret)},
               {"fallbacks", j.result.fallbacks}};
        if (j.llm) {
            any_llm = true;
            replies += j.llm->replies;
            valid += j.llm->valid;
            r["llm_replies"] = j.llm->replies;
            r["llm_valid"] = j.llm->valid;
            r["validity_rate"] = j.llm->replies > 0 ? json(j.llm->validity_rate()) : json(nullptr);
        }
        fallbacks += j.result.fallbacks;
        runs.push_back(std::move(r));
        if (!groups.contains(j.strategy)) { order.push_back(j.strategy); }
        groups[j.strategy].push_back(&j);
    }
    json strategies = json::array();
    for (const auto& name : order) {
        std::vector<double> regrets;
        std::vector<double> bests;
        for (const auto* j : groups[name]) {
            const auto& last = j->result.trials.back();
            bests.push_back(last.best_so_far);
            if (last.regret) { regrets.push_back(*last.regret); }
        }
        const auto b = mean_se(bests);
        json s{{"strategy", name},
               {"seeds", groups[name].size()},
               {"final_best_mean", b.mean},
               {"final_best_se", opt_json(b.se)}};
        if (regrets.size() == bests.size()) {
            const auto r = mean_se(regrets);
            s["final_regret_mean"] = r.mean;
            s["final_regret_se"] = opt_json(r.se);
        } else {
            s["final_regret_mean"] = nullptr;
            s["final_regret_se"] = nullptr;
        }
        strategies.push_back(std::move(s));
    }
    return {{"schema", kSchemaVersion},
            {"objective", cfg.objective_name()},
            {"operator", to_string(cfg.op)},
            {"runs", std::move(runs)},
            {"strategies", std::move(strategies)},
            {"llm_replies", replies},
            {"llm_valid", valid},
            {"validity_rate", any_llm && replies > 0 ? json(static_cast<double>(valid) / replies) : json(nullptr)},
            {"fallbacks", fallbacks},
            {"wall_s", wall_s}};
}

inline json read_summary(std::istream& in)
{
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw FormatError(std::string("summary.json: ") + e.what());
    }
    if (j.value("schema", 0) != kSchemaVersion) { throw FormatError("summary.json: missing or unsupported schema"); }
    return j;
}

// ---------------------------------------------------------------------------
// Writing a sweep to disk

namespace detail {

inline std::ofstream open_out(const std::filesystem::path& p)
{
    std::ofstream out(p, std::ios::binary);
    if (!out) { throw ConfigError("cannot write " + p.string()); }
    return out;
}

} // namespace detail

inline void write_artifacts(const std::filesystem::path& dir, const RunConfig& cfg, const std::vector<JobResult>& jobs,
                            double wall_s)
{
    std::filesystem::create_directories(dir);
    {
        auto out = detail::open_out(dir / "trials.csv");
        write_trials_csv(out, trial_rows(jobs), cfg.box().dim());
    }
    auto baker = detail::open_out(dir / "baker.jsonl");
    auto population = detail::open_out(dir / "population.jsonl");
    auto llm = detail::open_out(dir / "llm.jsonl");
    for (const auto& job : jobs) {
        for (const auto& it : job.result.iterations) {
            baker << baker_line(job, it).dump() << '\n';
            if (!it.population.empty()) {
                auto line = population_line(job, it.t, it.population);
                line["proposals"] = proposals_json(it.evolve);
                population << line.dump() << '\n';
            }
        }
        for (const auto& c : job.llm_calls) {
            auto line = detail::head(job, c.at("t").get<int>());
            line.update(c);
            llm << line.dump() << '\n';
        }
    }
    auto summary = detail::open_out(dir / "summary.json");
    summary << make_summary(cfg, jobs, wall_s).dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Population evolution on fixed data

inline Observations load_dataset_csv(const std::string& path)
{
    std::ifstream in(path);
    if (!in) { throw ConfigError("cannot open dataset " + path); }
    std::string line;
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') { continue; }
        const auto f = detail::csv_split(line);
        std::vector<double> v;
        try {
            for (const auto& s : f) { v.push_back(detail::parse_double(s, "dataset")); }
        } catch (const FormatError&) {
            if (rows.empty()) { continue; } // header
            throw;
        }
        if (v.size() < 2 || (!rows.empty() && v.size() != rows[0].size())) {
            throw FormatError("dataset rows need the same number (>= 2) of columns");
        }
        rows.push_back(std::move(v));
    }
    if (rows.size() < 2) { throw FormatError("dataset needs at least two rows"); }
    const auto d = static_cast<Eigen::Index>(rows[0].size() - 1);
    Eigen::MatrixXd X(static_cast<Eigen::Index>(rows.size()), d);
    Eigen::VectorXd y(X.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        for (Eigen::Index k = 0; k < d; ++k) { X(i, k) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)]; }
        y[i] = rows[static_cast<std::size_t>(i)].back();
    }
    const Box box(X.colwise().minCoeff().transpose(), X.colwise().maxCoeff().transpose());
    return {box, X, y};
}

inline Observations make_dataset(const DatasetSettings& s)
{
    if (s.source == "lin_per") {
        Rng rng(derive_seed({s.seed, 0}));
        return lin_per_dataset(s.n, rng);
    }
    return load_dataset_csv(s.source);
}

/// Snapshot series (t = 0 .. edits) for every seed, written as a sweep.
inline void run_evolution(const RunConfig& cfg, const std::filesystem::path& dir, const TransportFactory& factory = {})
{
    if (cfg.dataset.edits < 0) { throw ConfigError("dataset.edits must be >= 0"); }
    const auto data = make_dataset(cfg.dataset);
    const auto make = factory ? factory : default_transport_factory(cfg);
    std::filesystem::create_directories(dir);
    auto population = detail::open_out(dir / "population.jsonl");
    auto llm = detail::open_out(dir / "llm.jsonl");
    json runs = json::array();
    for (auto seed : cfg.seeds) {
        auto bundle = make_operator(cfg, make);
        JobResult job;
        job.strategy = "evolve(" + std::string(to_string(cfg.op)) + ")";
        job.run_id = make_run_id(job.strategy, seed);
        job.seed = seed;
        auto drain = [&](int t) {
            if (bundle.llm_op == nullptr) { return; }
            for (const auto& c : bundle.llm_op->drain_calls()) {
                auto line = detail::head(job, t);
                line.update(to_json(c));
                llm << line.dump() << '\n';
            }
        };
        EvolveLog log;
        const auto snaps = evolve_on_fixed_data(data, *bundle.op, cfg.cake, cfg.dataset.edits, seed, &log, drain);
        const auto common = common_scale_fitness(snaps);
        for (std::size_t t = 0; t < snaps.size(); ++t) {
            population << population_line(job, static_cast<int>(t), snaps[t]).dump() << '\n';
        }
        auto mean = [](const std::vector<double>& v) {
            double s = 0.0;
            for (double x : v) { s += x; }
            return v.empty() ? 0.0 : s / static_cast<double>(v.size());
        };
        json r{{"run_id", job.run_id},
               {"seed", seed},
               {"initial_mean_fitness", mean(common.front())},
               {"final_mean_fitness", mean(common.back())},
               {"final_best_kernel", snaps.back().empty() ? "" : snaps.back().front().kernel},
               {"fallbacks", log.fallbacks},
               {"dropped", log.dropped}};
        if (bundle.llm_op != nullptr) {
            const auto& st = bundle.llm_op->stats();
            r["llm_replies"] = st.replies;
            r["validity_rate"] = st.replies > 0 ? json(st.validity_rate()) : json(nullptr);
        }
        runs.push_back(std::move(r));
    }
    auto summary = detail::open_out(dir / "summary.json");
    summary << json{{"schema", kSchemaVersion}, {"mode", "evolve"}, {"n", data.size()}, {"runs", runs}}.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Exports

/// Long-format (edit_count, fitness) rows. Fitness is rescaled per run over
/// all of that run's snapshots so edit counts are comparable.
inline std::string export_fitness_histogram(const std::vector<PopulationRow>& rows, const std::vector<int>& edits)
{
    std::ostringstream out;
    out << "edit_count,fitness\n";
    if (edits.empty()) { return out.str(); }
    std::vector<std::string> order;
    std::map<std::string, std::vector<const PopulationRow*>> by_run;
    for (const auto& r : rows) {
        if (!by_run.contains(r.run_id)) { order.push_back(r.run_id); }
        by_run[r.run_id].push_back(&r);
    }
    if (order.empty()) { throw MissingSnapshot("no population snapshots"); }
    for (const int e : edits) {
        for (const auto& id : order) {
            const auto& runs = by_run[id];
            std::vector<std::vector<MemberSnapshot>> snaps;
            std::optional<std::size_t> at;
            for (const auto* r : runs) {
                if (r->t == e) { at = snaps.size(); }
                snaps.push_back(r->members);
            }
            if (!at) { throw MissingSnapshot("run '" + id + "' has no snapshot after " + std::to_string(e) + " edits"); }
            const auto fit = common_scale_fitness(snaps);
            for (double f : fit[*at]) { out << e << ',' << detail::fmt_double(f) << '\n'; }
        }
    }
    return out.str();
}

/// Per strategy and evaluation index: mean and standard error of regret and
/// best_so_far across seeds.
inline std::string export_regret_curve(const std::vector<TrialRow>& rows)
{
    struct Acc {
        std::vector<double> regret;
        std::vector<double> best;
    };
    std::vector<std::string> order;
    std::map<std::string, std::vector<Acc>> curves;
    std::map<std::string, std::size_t> position;
    for (const auto& r : rows) {
        if (!curves.contains(r.strategy)) { order.push_back(r.strategy); }
        auto& curve = curves[r.strategy];
        const auto i = position[r.run_id]++;
        if (curve.size() <= i) { curve.resize(i + 1); }
        curve[i].best.push_back(r.rec.best_so_far);
        if (r.rec.regret) { curve[i].regret.push_back(*r.rec.regret); }
    }
    std::ostringstream out;
    out << "strategy,evaluation,n,regret_mean,regret_se,best_mean,best_se\n";
    auto opt = [](const std::optional<double>& v) { return detail::fmt_opt(v); };
    for (const auto& s : order) {
        const auto& curve = curves[s];
        for (std::size_t i = 0; i < curve.size(); ++i) {
            const auto b = mean_se(curve[i].best);
            const bool has_regret = curve[i].regret.size() == curve[i].best.size();
            const auto r = mean_se(curve[i].regret);
            out << detail::csv_field(s) << ',' << i + 1 << ',' << curve[i].best.size() << ','
                << (has_regret ? detail::fmt_double(r.mean) : "") << ',' << (has_regret ? opt(r.se) : "") << ','
                << detail::fmt_double(b.mean) << ',' << opt(b.se) << '\n';
        }
    }
    return out.str();
}

/// Machine-readable failure record.
inline json error_record(const std::exception& e)
{
    const auto* ce = dynamic_cast<const Error*>(&e);
    return {{"schema", kSchemaVersion}, {"error", ce != nullptr ? ce->kind() : "Error"}, {"message", e.what()}};
}

} // namespace cake

#endif
