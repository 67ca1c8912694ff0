#pragma once

#include <array>
#include <functional>
#include <map>
#include <optional>
#include <string>

#include "ael/backend.hpp"
#include "ael/canonical.hpp"
#include "ael/toolkit.hpp"

namespace ael::credit {

enum class Module { planner = 0, tools = 1, memory = 2 };

inline constexpr std::array<Module, 3> kModules = {Module::planner, Module::tools, Module::memory};

std::string module_name(Module m);

// Bit of module m in a coalition mask.
constexpr unsigned bit(Module m) { return 1u << static_cast<unsigned>(m); }
inline constexpr unsigned kGrandCoalition = 0b111;

enum class Method { uniform, fcc, llm_fcc };

std::string method_name(Method method);
Method parse_method(const std::string& name);

struct EpisodeOutcome {
    double score = 0.0;  // s in [-1, 1]
    std::map<std::string, toolkit::HitCount> per_tool_hits;
    double steps_completed = 1.0;  // fraction of planner steps that ran
    bool prediction_correct = false;
    double memory_usefulness = 0.0;  // fraction of retrieved entries marked useful
};

struct CreditVector {
    double planner = 0.0;
    double tools = 0.0;
    double memory = 0.0;

    double& operator[](Module m);
    double operator[](Module m) const;
    Json to_json() const;
    bool operator==(const CreditVector& other) const = default;
};

// clip((s + 1) / 2, 0, 1)
double uniform_reward(double s);

CreditVector structural_credit(const EpisodeOutcome& outcome);

// Scores of an episode replayed with each subset of modules at their actual
// choice (mask bit set) and the rest at their defaults. nullopt marks a
// replay that could not be run.
using ReplayFn = std::function<std::optional<double>(unsigned mask)>;

// clip(s - s with m at its default); 0 with a warning when the replay fails.
double counterfactual_credit(Module m, const ReplayFn& replay);
CreditVector counterfactual_credit(const ReplayFn& replay);

// v over the 8 subsets of {planner, tools, memory}, indexed by mask.
class CharacteristicFunction {
public:
    void set(unsigned mask, double value);
    // ContractViolation when the coalition is missing.
    double at(unsigned mask) const;
    bool complete() const;

private:
    std::array<std::optional<double>, 8> v_;
};

CreditVector shapley_credit(const CharacteristicFunction& v);

struct FccWeights {
    double structural = 0.2;
    double counterfactual = 0.3;
    double shapley = 0.5;
};

CreditVector fcc_combine(const CreditVector& structural, const CreditVector& counterfactual,
                         const CreditVector& shapley, const FccWeights& weights = {});

// clip(lambda r + (1 - lambda) g, 0, 1)
double module_reward(double r, double g, double lambda = 0.5);

// What the backend sees besides the structural baseline.
struct LlmFccContext {
    bool warning_ignored = false;  // a risk tool warned, the planner overweighted anyway, and it lost
    std::string summary;
};

// Falls back to structural_credit with a warning when the reply is unusable.
CreditVector llm_fcc_credit(const EpisodeOutcome& outcome, const LlmFccContext& context,
                            reflection::CompletionBackend& backend);

}  // namespace ael::credit
