#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ael/canonical.hpp"
#include "ael/insight.hpp"
#include "ael/memory.hpp"
#include "ael/toolkit.hpp"

namespace ael::planners {

enum class Family { sequential, decompose, adaptive, cot_reasoning, reflexion, hypothesis_test, evolved };

std::string family_name(Family family);
Family parse_family(const std::string& name);
// The six built-in families, in registry order.
const std::vector<Family>& builtin_families();

// Momentum-reversal template: tickers whose short-term move opposes their
// trend are floored at `floor` weight; the rest have scores scaled by 1 + gain.
struct EvolvedParams {
    double floor = 0.05;
    double gain = 0.1;

    // floor in (0, 0.1], gain in (0, 1]
    bool valid() const;
};

struct Planner {
    std::string id;
    Family family = Family::sequential;
    EvolvedParams params;
    std::vector<std::string> strategy_hints;

    Json to_json() const;
};

Planner builtin_planner(Family family);

using ToolMap = std::map<std::string, toolkit::ToolOutput>;

struct PlannerContext {
    std::vector<std::string> tickers;
    std::vector<ToolMap> tool_outputs;                      // per ticker; absent tools were not selected
    std::vector<std::map<std::string, double>> multipliers;  // per ticker trust, default 1
    std::optional<reflection::ReflectionInsight> insight;
    std::vector<std::string> procedural_rules;
    std::string retrieved_memory;
};

struct AllocationConfig {
    double temperature = 0.5;
    double risk_budget = 0.9;  // rho; cash = 1 - rho
};

struct AllocationDecision {
    std::vector<double> weights;  // per ticker
    double cash = 1.0;
    std::vector<double> scores;  // per ticker
    bool fell_back = false;      // a family lacked its tools and used sequential fusion

    Json to_json() const;
};

// weights proportional to exp(score / T), scaled to rho.
AllocationDecision score_to_weights(std::span<const double> scores, const AllocationConfig& config = {});

// Confidence x trust x regime weighted mean of the given tools' signals.
// Tools with zero weight do not count; no weighted tool gives 0.
double fuse(const ToolMap& tools, const std::map<std::string, double>& multipliers,
            const std::vector<std::string>& names, const std::string& regime);

// Per-ticker score under the planner's family.
double plan_score(const Planner& planner, const ToolMap& tools, const std::map<std::string, double>& multipliers,
                  const std::string& regime, bool* fell_back = nullptr);

AllocationDecision plan(const Planner& planner, const PlannerContext& context, const AllocationConfig& config = {});

// Validates the template and dry-runs it on a fixed context; true when the
// result is a valid simplex allocation.
bool smoke_test(const Planner& planner);

// ---- trust from experience ---------------------------------------------------------

// max(0, 1 + 2 t) with t = (h - m) / (h + m + 2).
double trust_multiplier(const memory::ToolEvidence& evidence);

// Tool names after "rely on" and "discount" in an insight line.
std::pair<std::string, std::string> insight_targets(const std::string& text);

// Evidence trust, then insight rely x(1 + c) / discount x(1 - c), then x1.25
// for tools named in any skill hint.
std::map<std::string, double> tool_multipliers(const std::map<std::string, memory::ToolEvidence>& evidence,
                                               const std::optional<reflection::ReflectionInsight>& insight,
                                               const std::vector<std::vector<std::string>>& skill_hints = {});

// ---- non-LLM baselines ----------------------------------------------------------------

enum class Baseline { EqW, Mom, MinV, InvM };

std::string baseline_name(Baseline kind);
Baseline parse_baseline(const std::string& name);
const std::vector<Baseline>& all_baselines();

// Fully invested weights from trailing closes (one vector per ticker).
// Mom, InvM and MinV need at least 20 closes.
std::vector<double> baseline_allocate(Baseline kind, const std::vector<std::vector<double>>& trailing_closes);

}  // namespace ael::planners
