#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ael/backend.hpp"
#include "ael/bandits.hpp"
#include "ael/insight.hpp"
#include "ael/memory.hpp"
#include "ael/planners.hpp"

namespace ael::reflection {

struct ToolAccuracy {
    double hits = 0.0;
    double misses = 0.0;
};

struct ReflectionRequest {
    std::size_t window = 0;
    Json episode_summaries = Json::array();  // per ticker: planner, score, directional accuracy
    std::map<std::string, ToolAccuracy> tool_accuracy;
    // Side information from cached prices; the predictor never sees it.
    std::vector<double> index_returns;
    std::map<std::string, double> sector_returns;
    double realized_vol = 0.0;
    double mean_cross_correlation = 0.0;
    VolTerciles terciles;
    std::vector<ReflectionInsight> prior_insights;  // last three at most

    Json payload() const;
};

// Backend failure or an unreadable reply carries `previous` forward.
ReflectionInsight reflect(const ReflectionRequest& request, CompletionBackend& backend,
                          const std::optional<ReflectionInsight>& previous);

// Tercile cut points of a volatility sample (linear interpolation).
VolTerciles vol_terciles(std::vector<double> vols);

// ---- memory-policy evolution ------------------------------------------------------

struct EvolutionSettings {
    std::size_t j_min = 10;
    std::size_t every = 5;
    double r_min = 0.4;
};

// j > j_min and j % every == 0
bool evolution_due(std::size_t window, const EvolutionSettings& settings);

// Lexicographic grid: tier subsets x top_k {3, 5, 8} x format.
const std::vector<memory::RetrievalPolicy>& policy_grid();

// New policy when due and the mean posterior is below r_min: the first grid
// point not already in the pool, confirmed by the backend and validated.
std::optional<memory::RetrievalPolicy> evolve_memory_policy(const bandits::ThompsonSelector& selector,
                                                            const std::vector<memory::RetrievalPolicy>& pool,
                                                            const std::optional<ReflectionInsight>& insight,
                                                            CompletionBackend& backend, std::size_t window,
                                                            const EvolutionSettings& settings = {});

// ---- cold-start priors ----------------------------------------------------------------

struct PriorRequestArm {
    std::string id;
    std::string kind;  // computational | data_backed | retrieval_distilled | retrieval_raw | retrieval_none | planner
    std::string description;
};

using Prior = std::pair<double, double>;

// Every arm gets (1, 1) when disabled; otherwise backend pairs in [0.5, 10]
// are kept and anything else falls back to (1, 1).
std::map<std::string, Prior> cold_start_priors(const std::vector<PriorRequestArm>& arms, CompletionBackend& backend,
                                               bool enabled);

// ---- planner evolution --------------------------------------------------------------------

// Consecutive slow windows in which a planner's mean score was negative.
class FailureStreaks {
public:
    void record(const std::string& planner_id, double window_mean_score);
    std::size_t streak(const std::string& planner_id) const;
    void reset(const std::string& planner_id);
    // Planner with the longest streak (ties: smallest id), or empty.
    std::string worst() const;

private:
    std::map<std::string, std::size_t> streaks_;
};

// Template candidate number k in the evolution sequence.
planners::EvolvedParams template_params(std::size_t k);

// When enabled and some streak reaches `threshold`, instantiate the next
// template; it enters the pool only after its smoke test. Either way the
// triggering streak resets.
std::optional<planners::Planner> planner_evolution_check(FailureStreaks& streaks, bool enabled,
                                                         CompletionBackend& backend, std::size_t evolved_so_far,
                                                         std::size_t threshold = 3);

// ---- skill extraction --------------------------------------------------------------------

struct SkillRecord {
    std::string skill_id;  // sorted tool names joined by '+'
    std::vector<std::string> tools;
    double success_rate = 1.0;
    std::size_t applications = 0;

    Json to_json() const;
};

class SkillLibrary {
public:
    explicit SkillLibrary(std::size_t capacity = 15, double decay = 0.9);

    // Correct predictions upsert the skill; wrong ones only decay an existing
    // skill. Fewer than two tools is ignored.
    void observe(std::vector<std::string> tools, bool correct);

    const std::vector<SkillRecord>& skills() const { return skills_; }
    std::size_t size() const { return skills_.size(); }

    // Tool sets of the best `limit` skills with at least `min_applications`.
    std::vector<std::vector<std::string>> hints(std::size_t limit = 3, std::size_t min_applications = 3) const;

    Json snapshot() const;

private:
    std::vector<SkillRecord> skills_;
    std::size_t capacity_;
    double decay_;
};

}  // namespace ael::reflection
