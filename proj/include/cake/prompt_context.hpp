// SPDX-License-Identifier: Apache-2.0

#ifndef CAKE_PROMPT_CONTEXT_HPP
#define CAKE_PROMPT_CONTEXT_HPP

#include <string>
#include <string_view>
#include <vector>

#include "errors.hpp"
#include "kernel_grammar.hpp"
#include "observations.hpp"

namespace cake {

/// Prompt ablation variants.
enum class PromptMode { Full, NoContext, NoInstruct, NoReasoning };

inline std::string_view to_string(PromptMode m) noexcept
{
    switch (m) {
    case PromptMode::Full: return "full";
    case PromptMode::NoContext: return "no_context";
    case PromptMode::NoInstruct: return "no_instruct";
    case PromptMode::NoReasoning: return "no_reasoning";
    }
    return "?";
}

inline PromptMode prompt_mode_from_string(std::string_view s)
{
    for (auto m : {PromptMode::Full, PromptMode::NoContext, PromptMode::NoInstruct, PromptMode::NoReasoning}) {
        if (s == to_string(m)) { return m; }
    }
    throw ConfigError("unknown prompt mode '" + std::string(s) + "'");
}

namespace templates {

inline constexpr std::string_view kPersona =
    "You are an expert in machine learning, specializing in Gaussian processes.";
inline constexpr std::string_view kObservations =
    " Here are the observations we have collected so far: {observations}. Please analyze these observations to "
    "identify patterns in the data that can be captured by a kernel function.";
inline constexpr std::string_view kGrammar =
    " You can use any of the following base kernels: {base_kernels}, and combine these kernels using the following "
    "operators: {operators}.";
inline constexpr std::string_view kGoal =
    " Your goal is to construct a kernel expression that best explains the observed data. The kernel will be "
    "evaluated using a fitness score normalized between [0, 1], where higher values indicate better fit to the data.";

inline constexpr std::string_view kCrossoverHead =
    "You are given two parent kernels and their fitness scores:\n{kernel1} ({fitness1}), {kernel2} ({fitness2}).";
inline constexpr std::string_view kCrossoverHeadBare = "You are given two parent kernels:\n{kernel1}, {kernel2}.";
inline constexpr std::string_view kCrossoverRule =
    " You may combine the parent kernels using any of the operators from: {operators}.";

inline constexpr std::string_view kMutationHead =
    "You are given a kernel and its fitness score:\n{kernel} ({fitness}).";
inline constexpr std::string_view kMutationHeadBare = "You are given a kernel:\n{kernel}.";
inline constexpr std::string_view kMutationRule =
    " You may replace a base kernel in the current expression with another base kernel from the set: {base_kernels}.";

inline constexpr std::string_view kPropose = " Please propose a new kernel that has a potentially higher fitness score.";
inline constexpr std::string_view kReasoning = " Briefly explain your reasoning behind the proposed kernel.";
inline constexpr std::string_view kFormat = "\nAnswer in the format:\nKernel: <expression>\nAnalysis: <reasoning>";
inline constexpr std::string_view kFormatBare = "\nAnswer in the format:\nKernel: <expression>";

} // namespace templates

/// Everything a genetic operator may condition on besides its parents.
struct PromptContext {
    const Observations* observations = nullptr;
    std::vector<std::string> base_kernels;
    std::vector<std::string> operators;
    std::string system_text;
    std::string crossover_text;
    std::string mutation_text;
    PromptMode mode = PromptMode::Full;
    int max_depth = kDefaultMaxDepth;
    int dim = 1;

    /// Default templates for `mode`, assembled from the sentence fragments above.
    static PromptContext make(const Observations* obs, PromptMode mode = PromptMode::Full,
                              int max_depth = kDefaultMaxDepth)
    {
        namespace t = templates;
        PromptContext c;
        c.observations = obs;
        c.mode = mode;
        c.max_depth = max_depth;
        c.dim = obs != nullptr ? obs->dim() : 1;
        for (auto b : kBaseKernels) { c.base_kernels.emplace_back(to_string(b)); }
        c.operators = {"+", "*"};

        const bool context = mode != PromptMode::NoContext;
        const bool instruct = mode != PromptMode::NoInstruct;
        const bool reasoning = mode != PromptMode::NoReasoning;

        c.system_text = std::string(t::kPersona);
        if (context) { c.system_text += t::kObservations; }
        if (instruct) { c.system_text += t::kGrammar; }
        c.system_text += t::kGoal;

        c.crossover_text = std::string(context ? t::kCrossoverHead : t::kCrossoverHeadBare);
        c.crossover_text += t::kPropose;
        if (instruct) { c.crossover_text += t::kCrossoverRule; }
        if (reasoning) { c.crossover_text += t::kReasoning; }
        c.crossover_text += reasoning ? t::kFormat : t::kFormatBare;

        c.mutation_text = std::string(context ? t::kMutationHead : t::kMutationHeadBare);
        c.mutation_text += t::kPropose;
        if (instruct) { c.mutation_text += t::kMutationRule; }
        if (reasoning) { c.mutation_text += t::kReasoning; }
        c.mutation_text += reasoning ? t::kFormat : t::kFormatBare;
        return c;
    }
};

} // namespace cake

#endif
