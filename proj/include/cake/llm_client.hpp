// SPDX-License-Identifier: Apache-2.0

#ifndef CAKE_LLM_CLIENT_HPP
#define CAKE_LLM_CLIENT_HPP

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <deque>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "errors.hpp"
#include "evolution.hpp"
#include "kernel_grammar.hpp"
#include "observations.hpp"
#include "prompt_context.hpp"

namespace cake {

struct Messages {
    std::string system;
    std::string user;
};

// ---------------------------------------------------------------------------
// Rendering

inline std::string format_g4(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

/// `[(x: [..], y: v), ...]`, 4 significant digits, most recent `limit` entries.
inline std::string serialize_observations(const Observations* obs, int limit = 50)
{
    if (obs == nullptr || obs->empty()) { return "[]"; }
    const int n = obs->size();
    const int first = std::max(0, n - limit);
    std::string out;
    if (first > 0) { out += "(most recent " + std::to_string(n - first) + " of " + std::to_string(n) + ") "; }
    out += '[';
    for (int i = first; i < n; ++i) {
        if (i > first) { out += ", "; }
        out += "(x: [";
        for (int k = 0; k < obs->dim(); ++k) {
            if (k > 0) { out += ", "; }
            out += format_g4(obs->X()(i, k));
        }
        out += "], y: " + format_g4(obs->y()[i]) + ')';
    }
    out += ']';
    return out;
}

inline std::string brace_list(const std::vector<std::string>& items)
{
    std::string out = "{";
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i > 0) { out += ", "; }
        out += items[i];
    }
    return out + "}";
}

inline std::string format_fitness(double f)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", f);
    return buf;
}

/// Substitutes `{name}` placeholders in one pass. A placeholder without a
/// value raises TemplateError; substituted text is never rescanned.
inline std::string render_template(std::string_view tmpl, const std::map<std::string, std::string>& values)
{
    std::string out;
    std::size_t i = 0;
    while (i < tmpl.size()) {
        if (tmpl[i] == '{') {
            const auto close = tmpl.find('}', i + 1);
            if (close != std::string_view::npos) {
                const auto name = tmpl.substr(i + 1, close - i - 1);
                const bool ident = !name.empty() && std::all_of(name.begin(), name.end(), [](char c) {
                    return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_';
                });
                if (ident) {
                    const auto it = values.find(std::string(name));
                    if (it == values.end()) { throw TemplateError("unresolved placeholder {" + std::string(name) + "}"); }
                    out += it->second;
                    i = close + 1;
                    continue;
                }
            }
        }
        out += tmpl[i++];
    }
    return out;
}

namespace detail {

inline std::map<std::string, std::string> common_values(const PromptContext& ctx)
{
    return {{"observations", serialize_observations(ctx.observations)},
            {"base_kernels", brace_list(ctx.base_kernels)},
            {"operators", brace_list(ctx.operators)}};
}

} // namespace detail

inline Messages render_crossover(const PromptContext& ctx, const ScoredKernel& k1, const ScoredKernel& k2)
{
    auto v = detail::common_values(ctx);
    v["kernel1"] = k1.printed();
    v["fitness1"] = format_fitness(k1.fitness);
    v["kernel2"] = k2.printed();
    v["fitness2"] = format_fitness(k2.fitness);
    return {render_template(ctx.system_text, v), render_template(ctx.crossover_text, v)};
}

inline Messages render_mutation(const PromptContext& ctx, const ScoredKernel& k)
{
    auto v = detail::common_values(ctx);
    v["kernel"] = k.printed();
    v["fitness"] = format_fitness(k.fitness);
    return {render_template(ctx.system_text, v), render_template(ctx.mutation_text, v)};
}

// ---------------------------------------------------------------------------
// Reply parsing

struct LlmReply {
    std::optional<KernelExpr> kernel;
    std::string analysis;
    std::string error; // why the kernel line was rejected
    int attempts = 1;
    bool valid = false;
};

namespace detail {

inline std::string trim(std::string_view s)
{
    std::size_t a = 0;
    std::size_t b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a])) != 0) { ++a; }
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1])) != 0) { --b; }
    return std::string(s.substr(a, b - a));
}

inline bool is_adornment(char c) { return c == '*' || c == '_' || c == '`' || c == '#' || c == '>' || c == '-'; }

inline std::string strip_adornments(std::string_view s)
{
    std::string t = trim(s);
    std::size_t a = 0;
    std::size_t b = t.size();
    while (a < b && (is_adornment(t[a]) || std::isspace(static_cast<unsigned char>(t[a])) != 0)) { ++a; }
    while (b > a && (is_adornment(t[b - 1]) || t[b - 1] == '.' || std::isspace(static_cast<unsigned char>(t[b - 1])) != 0)) {
        --b;
    }
    return t.substr(a, b - a);
}

inline std::string lower(std::string_view s)
{
    std::string out(s);
    for (auto& c : out) { c = static_cast<char>(std::tolower(static_cast<unsigned char>(c))); }
    return out;
}

/// Normalizes math markup inside an expression: `$`, `\times`, `\cdot`.
inline std::string clean_expression(std::string s)
{
    for (const auto& [from, to] : std::vector<std::pair<std::string, std::string>>{
             {"\\times", "*"}, {"\\cdot", "*"}, {"$", ""}, {"`", ""}, {"**", ""}}) {
        for (auto p = s.find(from); p != std::string::npos; p = s.find(from, p)) { s.replace(p, from.size(), to); }
    }
    return strip_adornments(s);
}

/// Position just past a case-insensitive `marker:` at the start of a line
/// (after adornments), or npos.
inline std::size_t after_marker(const std::string& line, std::string_view marker)
{
    std::size_t a = 0;
    while (a < line.size() && (is_adornment(line[a]) || std::isspace(static_cast<unsigned char>(line[a])) != 0)) { ++a; }
    if (lower(std::string_view(line).substr(a, marker.size())) != marker) { return std::string::npos; }
    std::size_t p = a + marker.size();
    while (p < line.size() && is_adornment(line[p])) { ++p; }
    if (p >= line.size() || line[p] != ':') { return std::string::npos; }
    return p + 1;
}

} // namespace detail

/// Extracts `Kernel: <expr>` and the analysis from a free-text reply.
inline LlmReply parse_reply(std::string_view text, int dim = std::numeric_limits<int>::max(),
                            int max_depth = kDefaultMaxDepth)
{
    LlmReply r;
    std::vector<std::string> lines;
    {
        std::istringstream in{std::string(text)};
        for (std::string line; std::getline(in, line);) { lines.push_back(line); }
    }

    std::optional<std::size_t> kernel_line;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const auto p = detail::after_marker(lines[i], "kernel");
        if (p == std::string::npos) { continue; }
        kernel_line = i;
        const auto expr = detail::clean_expression(lines[i].substr(p));
        try {
            auto e = parse(expr, max_depth);
            validate(e, dim, max_depth);
            r.kernel = std::move(e);
            r.valid = true;
        } catch (const Error& err) {
            r.error = err.what();
        }
        break;
    }
    if (!kernel_line) { r.error = "no 'Kernel:' line"; }

    std::string analysis;
    bool found = false;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (!found) {
            const auto p = detail::after_marker(lines[i], "analysis");
            if (p == std::string::npos) { continue; }
            found = true;
            analysis = detail::trim(lines[i].substr(p));
            continue;
        }
        analysis += '\n' + lines[i];
    }
    if (!found) {
        for (std::size_t i = 0; i < lines.size(); ++i) {
            if (kernel_line && i == *kernel_line) { continue; }
            if (!analysis.empty()) { analysis += '\n'; }
            analysis += lines[i];
        }
    }
    r.analysis = detail::trim(analysis);
    return r;
}

// ---------------------------------------------------------------------------
// Transports

inline std::string_view to_string(ProposalKind k) noexcept
{
    return k == ProposalKind::Crossover ? "crossover" : "mutation";
}

class Transport {
public:
    virtual ~Transport() = default;
    /// Returns the assistant text; throws TransportError on failure.
    virtual std::string complete(ProposalKind kind, const Messages& messages) = 0;
};

/// Offline fixture: JSONL records {"match": "crossover"|"mutation",
/// "response": "..."}, consumed in file order within each kind.
class ReplayTransport final : public Transport {
public:
    struct Record {
        ProposalKind kind;
        std::string response;
    };

    explicit ReplayTransport(const std::vector<Record>& records)
    {
        for (const auto& r : records) { queue(r.kind).push_back(r.response); }
    }

    static ReplayTransport from_jsonl(std::istream& in)
    {
        std::vector<Record> recs;
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (detail::trim(line).empty()) { continue; }
            try {
                const auto j = nlohmann::json::parse(line);
                const auto match = j.at("match").get<std::string>();
                ProposalKind kind{};
                if (match == "crossover") {
                    kind = ProposalKind::Crossover;
                } else if (match == "mutation") {
                    kind = ProposalKind::Mutation;
                } else {
                    throw FormatError("unknown match '" + match + "'");
                }
                recs.push_back({kind, j.at("response").get<std::string>()});
            } catch (const nlohmann::json::exception& e) {
                throw FormatError("replay fixture line " + std::to_string(lineno) + ": " + e.what());
            }
        }
        return ReplayTransport(recs);
    }

    static ReplayTransport from_file(const std::string& path)
    {
        std::ifstream in(path);
        if (!in) { throw ConfigError("cannot open replay fixture '" + path + "'"); }
        return from_jsonl(in);
    }

    std::string complete(ProposalKind kind, const Messages&) override
    {
        auto& q = queue(kind);
        if (q.empty()) { throw TransportError("replay fixture exhausted for " + std::string(to_string(kind))); }
        auto out = std::move(q.front());
        q.pop_front();
        ++served_;
        return out;
    }

    [[nodiscard]] std::size_t remaining(ProposalKind kind) const
    {
        return kind == ProposalKind::Crossover ? crossover_.size() : mutation_.size();
    }
    [[nodiscard]] int served() const noexcept { return served_; }

private:
    std::deque<std::string>& queue(ProposalKind k) { return k == ProposalKind::Crossover ? crossover_ : mutation_; }

    std::deque<std::string> crossover_;
    std::deque<std::string> mutation_;
    int served_ = 0;
};

// ---------------------------------------------------------------------------
// Proposal with retries

struct LlmCall {
    ProposalKind kind = ProposalKind::Crossover;
    int attempt = 0;
    std::string prompt;
    std::string response;
    std::string kernel; // printed, empty if invalid
    std::string analysis;
    std::string error;
    bool valid = false;
};

struct ProposeResult {
    std::optional<KernelExpr> kernel; // nullopt signals fallback
    int attempts = 0;
    std::string fallback_reason;
};

struct LlmStats {
    int replies = 0;
    int valid = 0;
    int transport_errors = 0;
    int fallbacks = 0;

    [[nodiscard]] double validity_rate() const noexcept
    {
        return replies > 0 ? static_cast<double>(valid) / replies : 0.0;
    }
};

/// Up to `retries` attempts; the first valid kernel wins.
inline ProposeResult propose(ProposalKind kind, const Messages& msgs, Transport& transport, const PromptContext& ctx,
                             int retries = 3, LlmStats* stats = nullptr, std::vector<LlmCall>* log = nullptr)
{
    ProposeResult res;
    std::string last_error;
    for (int attempt = 1; attempt <= retries; ++attempt) {
        res.attempts = attempt;
        LlmCall call{kind, attempt, msgs.user, {}, {}, {}, {}, false};
        try {
            call.response = transport.complete(kind, msgs);
        } catch (const TransportError& e) {
            if (stats != nullptr) { ++stats->transport_errors; }
            call.error = e.what();
            last_error = call.error;
            if (log != nullptr) { log->push_back(std::move(call)); }
            continue;
        }
        auto reply = parse_reply(call.response, ctx.dim, ctx.max_depth);
        call.valid = reply.valid;
        call.analysis = reply.analysis;
        call.error = reply.error;
        if (stats != nullptr) {
            ++stats->replies;
            stats->valid += reply.valid ? 1 : 0;
        }
        if (reply.valid) { call.kernel = print(*reply.kernel); }
        if (log != nullptr) { log->push_back(call); }
        if (reply.valid) {
            res.kernel = std::move(reply.kernel);
            return res;
        }
        last_error = reply.error;
    }
    res.fallback_reason = "no valid kernel after " + std::to_string(retries) + " attempts: " + last_error;
    if (stats != nullptr) { ++stats->fallbacks; }
    return res;
}

/// Genetic operator backed by a chat model. Exhausted retries return nullopt
/// and the evolution step falls back to random recombination.
class LlmOperator final : public GeneticOperator {
public:
    explicit LlmOperator(Transport& transport, int retries = 3) : transport_(transport), retries_(retries) {}

    [[nodiscard]] std::string name() const override { return "llm"; }

    std::optional<KernelExpr> crossover(const ScoredKernel& p1, const ScoredKernel& p2, const PromptContext& ctx,
                                        Rng&) override
    {
        return propose(ProposalKind::Crossover, render_crossover(ctx, p1, p2), transport_, ctx, retries_, &stats_,
                       &calls_)
            .kernel;
    }

    std::optional<KernelExpr> mutation(const ScoredKernel& fittest, const PromptContext& ctx, Rng&) override
    {
        return propose(ProposalKind::Mutation, render_mutation(ctx, fittest), transport_, ctx, retries_, &stats_,
                       &calls_)
            .kernel;
    }

    [[nodiscard]] const LlmStats& stats() const noexcept { return stats_; }
    /// Calls since the last drain.
    std::vector<LlmCall> drain_calls() { return std::exchange(calls_, {}); }

private:
    Transport& transport_;
    int retries_;
    LlmStats stats_;
    std::vector<LlmCall> calls_;
};

} // namespace cake

#endif
