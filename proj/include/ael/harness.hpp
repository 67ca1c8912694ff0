#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ael/backend.hpp"
#include "ael/bandits.hpp"
#include "ael/config.hpp"
#include "ael/credit.hpp"
#include "ael/market.hpp"
#include "ael/memory.hpp"
#include "ael/planners.hpp"
#include "ael/reflection.hpp"
#include "ael/toolkit.hpp"

namespace ael::harness {

// Read access to bars that refuses anything after the current decision bar.
class MarketView {
public:
    explicit MarketView(const market::PriceSeries& series) : series_(&series) {}

    void set_decision_bar(std::size_t t) { decision_bar_ = t; }
    std::size_t decision_bar() const { return decision_bar_; }

    // Bars [end - length + 1, end] of one ticker (clipped at 0). Throws
    // LookAheadViolation, and counts it, when end is past the decision bar.
    std::span<const market::Bar> window(std::size_t ticker, std::size_t end, std::size_t length) const;

    std::size_t violations() const { return violations_; }

private:
    const market::PriceSeries* series_;
    std::size_t decision_bar_ = 0;
    mutable std::size_t violations_ = 0;
};

// Market data plus everything precomputed from it for one run. Tool
// outputs are produced once through the look-ahead guard.
struct Environment {
    RunConfig config;
    std::uint64_t seed = 0;
    market::PriceSeries series;
    std::map<std::string, Json> static_data;  // per ticker
    std::vector<std::string> regime_path;     // planted label per bar, empty for csv data

    std::vector<std::vector<std::vector<toolkit::ToolOutput>>> tools;  // [episode][ticker][tool]
    std::vector<std::vector<double>> outcome_returns;                   // [episode][ticker]
    std::vector<bandits::ContextVector> phi;                            // [episode]
    std::size_t lookahead_violations = 0;

    std::size_t decision_bar(std::size_t episode) const { return config.history + episode; }
    std::size_t num_tickers() const { return series.num_tickers(); }
};

// Planted synthetic market for the seed, or the configured CSV file.
market::PriceSeries load_series(const RunConfig& config, std::uint64_t seed);

// Validates the split against the data and precomputes the tool cache.
Environment build_environment(const RunConfig& config, std::uint64_t seed,
                              const market::PriceSeries* preloaded = nullptr);

// Mutable learning state. Copyable, so checkpoints are plain copies.
struct AgentState {
    std::vector<memory::RetrievalPolicy> policies;
    bandits::ThompsonSelector memory_bandit;
    std::vector<planners::Planner> planners;
    std::vector<bandits::LinUcbArm> planner_arms;
    std::vector<std::vector<bandits::BetaArm>> tool_arms;  // [ticker][tool]
    Rng tool_rng;
    memory::MemoryStore store;
    std::optional<reflection::ReflectionInsight> insight;
    std::vector<reflection::ReflectionInsight> insights;
    reflection::SkillLibrary skills;
    bool frozen = false;

    void freeze();
    void reseed(std::uint64_t seed);
    Json posterior_snapshot() const;
    std::string posterior_hash() const;
    std::size_t arm_count() const;
};

AgentState initial_state(const Environment& env, reflection::CompletionBackend& backend);

// Module choices for one episode.
struct Choice {
    std::size_t policy = 0;
    std::size_t planner = 0;
    std::vector<std::vector<std::string>> tools;  // per ticker
};

struct Decision {
    planners::AllocationDecision allocation;
    std::vector<planners::ToolMap> tool_maps;  // per ticker, selected tools only
    std::vector<double> retrieved_scores;      // every retrieved entry, all tickers
    double portfolio_return = 0.0;
    double score = 0.0;
};

// Pure in the state: what the agent would allocate given these choices.
// warm: tool-only prediction, no memory and no insight.
Decision decide(const Environment& env, const AgentState& state, std::size_t episode, const Choice& choice,
                bool warm);

struct EpisodeLog {
    std::size_t episode = 0;
    std::string phase;  // warm_up | train | test
    std::string policy;
    std::string planner;
    double portfolio_return = 0.0;
    double score = 0.0;
    double reward = 0.0;
    std::optional<credit::CreditVector> credit;
    std::size_t retrieved = 0;

    Json to_json() const;
};

struct Checkpoint {
    std::size_t window = 0;
    std::size_t episode = 0;  // last training episode covered
    AgentState state;
};

struct TrainedState {
    AgentState state;
    std::vector<Checkpoint> checkpoints;
    std::vector<EpisodeLog> log;
    std::vector<std::size_t> arm_counts;  // memory-bandit arm count after each episode
    std::size_t posterior_updates = 0;
    std::size_t evolution_checks = 0;
    std::size_t evolved_policies = 0;
    std::size_t evolved_planners = 0;
    std::size_t semantic_written = 0;
    std::size_t procedural_written = 0;
};

TrainedState train(const Environment& env, reflection::CompletionBackend& backend);

struct FrozenSnapshot {
    std::size_t selected = 0;                // checkpoint index
    std::vector<double> validation_means;   // per checkpoint
    AgentState state;                       // frozen
};

// Scores every checkpoint on the validation episodes with learning off and
// keeps the best mean score (earliest on ties). Throws ConfigError without
// checkpoints and FrozenStateViolation if scoring changed any state.
FrozenSnapshot validate_and_freeze(const Environment& env, const TrainedState& trained);

struct TestOutcome {
    std::vector<double> returns;
    std::vector<std::vector<double>> weights;
    std::vector<EpisodeLog> log;
    market::MetricsReport metrics;  // after cost_bp
    std::map<std::string, market::MetricsReport> cost_grid;  // "0", "5", "10", "20"
    std::string posterior_hash_before;
    std::string posterior_hash_after;
    std::string memory_hash_before;
    std::string memory_hash_after;
};

TestOutcome test_frozen(const Environment& env, const FrozenSnapshot& snapshot);

struct RunResult {
    Json config;
    std::uint64_t seed = 0;
    std::string data_digest;
    TrainedState trained;
    FrozenSnapshot frozen;
    TestOutcome test;
    std::size_t backend_calls = 0;
    std::size_t lookahead_violations = 0;

    // Deterministic document: no wall-clock, floats canonicalized on dump.
    Json to_json() const;
};

RunResult run_experiment(const RunConfig& config, std::uint64_t seed, const market::PriceSeries* preloaded = nullptr);

struct MetricAggregate {
    double mean = 0.0;
    double std = 0.0;
};

struct Aggregate {
    std::vector<std::uint64_t> seeds;
    std::map<std::string, MetricAggregate> metrics;
    bool single_seed = false;

    Json to_json() const;
};

// Mean and sample std per metric; std is 0 with one seed.
Aggregate aggregate(std::span<const market::MetricsReport> reports, std::span<const std::uint64_t> seeds);

std::vector<RunResult> run_seeds(const RunConfig& config, std::span<const std::uint64_t> seeds);

// ---- ablation -------------------------------------------------------------------------

struct Variant {
    std::string name;
    RunConfig config;
};

// The nine single-change variants of the main configuration.
std::vector<Variant> ablation_variants(const RunConfig& base);

// Dotted paths of leaves whose values differ between two configs.
std::vector<std::string> config_diff(const RunConfig& a, const RunConfig& b);

struct AblationRow {
    std::string variant;
    double sharpe = 0.0;
    double sortino = 0.0;
    double delta_sharpe = 0.0;
    double sharpe_std = 0.0;
};

struct AblationTable {
    std::vector<AblationRow> rows;  // base first
    std::vector<std::vector<RunResult>> results;  // aligned with rows

    Json to_json() const;
    std::string to_csv() const;
};

AblationTable run_ablation(const RunConfig& base, std::span<const std::uint64_t> seeds);

// ---- baselines ---------------------------------------------------------------------------

struct BaselineResult {
    std::string name;
    market::MetricsReport metrics;
    std::vector<double> returns;
};

// The four non-learning allocators over the test episodes.
std::vector<BaselineResult> run_baselines(const Environment& env);

}  // namespace ael::harness
