#include "ael/credit.hpp"

#include <algorithm>
#include <cmath>

#include <spdlog/spdlog.h>

#include "ael/errors.hpp"

namespace ael::credit {

namespace {

double clip1(double x) { return std::clamp(x, -1.0, 1.0); }

// |S|! (n - |S| - 1)! / n! for n = 3, by coalition size.
constexpr double kShapleyWeight[3] = {1.0 / 3.0, 1.0 / 6.0, 1.0 / 3.0};

int popcount3(unsigned mask) { return static_cast<int>((mask & 1u) + ((mask >> 1) & 1u) + ((mask >> 2) & 1u)); }

}  // namespace

std::string module_name(Module m) {
    switch (m) {
        case Module::planner: return "planner";
        case Module::tools: return "tools";
        case Module::memory: return "memory";
    }
    return "planner";
}

std::string method_name(Method method) {
    switch (method) {
        case Method::uniform: return "uniform";
        case Method::fcc: return "fcc";
        case Method::llm_fcc: return "llm_fcc";
    }
    return "uniform";
}

Method parse_method(const std::string& name) {
    if (name == "uniform") return Method::uniform;
    if (name == "fcc") return Method::fcc;
    if (name == "llm_fcc") return Method::llm_fcc;
    throw ConfigError("unknown credit method '" + name + "'");
}

double& CreditVector::operator[](Module m) {
    switch (m) {
        case Module::planner: return planner;
        case Module::tools: return tools;
        case Module::memory: return memory;
    }
    return planner;
}

double CreditVector::operator[](Module m) const { return const_cast<CreditVector&>(*this)[m]; }

Json CreditVector::to_json() const { return {{"planner", planner}, {"tools", tools}, {"memory", memory}}; }

double uniform_reward(double s) {
    if (std::isnan(s)) {
        throw ContractViolation("outcome score is NaN");
    }
    return std::clamp((s + 1.0) / 2.0, 0.0, 1.0);
}

CreditVector structural_credit(const EpisodeOutcome& outcome) {
    CreditVector g;
    int correct = 0;
    int incorrect = 0;
    int total = 0;
    for (const auto& [tool, count] : outcome.per_tool_hits) {
        correct += count.correct;
        incorrect += count.incorrect;
        total += count.total;
    }
    g.tools = total > 0 ? clip1(static_cast<double>(correct - incorrect) / total) : 0.0;
    const double steps = std::clamp(outcome.steps_completed, 0.0, 1.0);
    g.planner = clip1(0.5 * steps + 0.5 * (outcome.prediction_correct ? 1.0 : -1.0));
    g.memory = clip1(2.0 * std::clamp(outcome.memory_usefulness, 0.0, 1.0) - 1.0);
    return g;
}

double counterfactual_credit(Module m, const ReplayFn& replay) {
    const auto actual = replay(kGrandCoalition);
    const auto swapped = replay(kGrandCoalition & ~bit(m));
    if (!actual || !swapped) {
        spdlog::warn("counterfactual replay unavailable for {}; credit 0", module_name(m));
        return 0.0;
    }
    return clip1(*actual - *swapped);
}

CreditVector counterfactual_credit(const ReplayFn& replay) {
    CreditVector g;
    for (Module m : kModules) {
        g[m] = counterfactual_credit(m, replay);
    }
    return g;
}

void CharacteristicFunction::set(unsigned mask, double value) {
    if (mask > kGrandCoalition) {
        throw ContractViolation("coalition mask out of range");
    }
    v_[mask] = value;
}

double CharacteristicFunction::at(unsigned mask) const {
    if (mask > kGrandCoalition || !v_[mask]) {
        throw ContractViolation("characteristic function lacks coalition " + std::to_string(mask));
    }
    return *v_[mask];
}

bool CharacteristicFunction::complete() const {
    return std::all_of(v_.begin(), v_.end(), [](const auto& x) { return x.has_value(); });
}

CreditVector shapley_credit(const CharacteristicFunction& v) {
    CreditVector phi;
    for (Module m : kModules) {
        double value = 0.0;
        for (unsigned s = 0; s <= kGrandCoalition; ++s) {
            if (s & bit(m)) {
                continue;
            }
            value += kShapleyWeight[popcount3(s)] * (v.at(s | bit(m)) - v.at(s));
        }
        phi[m] = value;
    }
    return phi;
}

CreditVector fcc_combine(const CreditVector& structural, const CreditVector& counterfactual,
                         const CreditVector& shapley, const FccWeights& weights) {
    CreditVector c;
    for (Module m : kModules) {
        c[m] = clip1(weights.structural * structural[m] + weights.counterfactual * counterfactual[m] +
                     weights.shapley * shapley[m]);
    }
    return c;
}

double module_reward(double r, double g, double lambda) {
    if (!(lambda >= 0.0 && lambda <= 1.0)) {
        throw ContractViolation("module reward blend outside [0,1]");
    }
    return std::clamp(lambda * r + (1.0 - lambda) * g, 0.0, 1.0);
}

CreditVector llm_fcc_credit(const EpisodeOutcome& outcome, const LlmFccContext& context,
                            reflection::CompletionBackend& backend) {
    const CreditVector base = structural_credit(outcome);
    reflection::CompletionRequest request;
    request.task = "llm_fcc";
    request.payload = {{"score", outcome.score},
                       {"structural", base.to_json()},
                       {"warning_ignored", context.warning_ignored},
                       {"summary", context.summary}};
    try {
        const auto fields = reflection::parse_response(backend.complete(request).text);
        CreditVector g;
        for (Module m : kModules) {
            const std::string text = reflection::response_value(fields, module_name(m));
            std::size_t used = 0;
            const double value = std::stod(text, &used);
            if (used == 0 || !std::isfinite(value) || value < -1.0 || value > 1.0) {
                throw ParseError("credit for " + module_name(m) + " outside [-1,1]: " + text);
            }
            g[m] = value;
        }
        return g;
    } catch (const std::exception& err) {
        spdlog::warn("llm credit reply unusable ({}); using structural credit", err.what());
        return base;
    }
}

}  // namespace ael::credit
