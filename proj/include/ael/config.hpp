#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ael/bandits.hpp"
#include "ael/canonical.hpp"
#include "ael/credit.hpp"
#include "ael/planners.hpp"
#include "ael/reflection.hpp"

namespace ael {

// Everything that determines a run. Two configs with equal to_json() produce
// byte-identical results for the same seed.
struct RunConfig {
    std::uint64_t seed = 42;
    std::vector<std::uint64_t> seeds = {42, 123, 456};

    // Episode split, chronological. history bars precede the first episode
    // and only feed tool lookbacks.
    std::size_t train = 140;
    std::size_t val = 40;
    std::size_t test = 28;
    std::size_t history = 40;

    std::size_t warm_up = 15;
    std::size_t slow_window = 10;
    std::size_t fast_window = 1;
    std::size_t distill_every = 10;
    reflection::EvolutionSettings evolution;
    std::size_t planner_streak = 3;
    std::size_t shapley_every = 80;

    credit::Method credit = credit::Method::uniform;
    double lambda = 0.5;

    // Components. The main configuration has memory and reflection on and
    // everything else off.
    bool memory = true;
    bool reflection = true;
    bool cold_start = false;
    bool planner_evolution = false;
    bool per_tool_selection = false;
    bool skill_extraction = false;

    double cost_bp = 0.0;
    std::string data_csv;    // empty: planted synthetic market
    std::string static_dir;  // optional per-ticker JSON documents
    std::string backend = "stub";

    planners::AllocationConfig allocation;
    double outcome_scale = 0.01;
    double linucb_alpha = 1.0;
    bandits::PerToolSelectorConfig per_tool;
    std::size_t memory_capacity = 500;
    double write_threshold = 0.3;
    std::string default_policy = "compressed";
    std::size_t tool_window = 60;

    std::size_t episodes() const { return train + val + test; }

    // Throws ConfigError on inconsistent settings.
    void validate() const;
    Json to_json() const;
};

// Stateless, +Tools, +Memory, AEL
RunConfig preset(const std::string& name, RunConfig base = {});
const std::vector<std::string>& preset_names();

// INI-style file: [run] [split] [flags] [evolution] [credit] [data] [planner]
// [memory] [per_tool]. Unknown sections or keys are rejected.
RunConfig load_config(const std::string& path);
RunConfig config_from_string(const std::string& text);

}  // namespace ael
