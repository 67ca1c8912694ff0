#include "ael/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "ael/errors.hpp"

namespace ael {

namespace {

using Setter = std::function<void(RunConfig&, const std::string&)>;

template <typename T>
T parse_value(const std::string& key, const std::string& text) {
    std::istringstream in(text);
    T value{};
    if (!(in >> value) || !(in >> std::ws).eof()) {
        throw ConfigError("bad value for " + key + ": '" + text + "'");
    }
    return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
    if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
    if (text == "false" || text == "0" || text == "no" || text == "off") return false;
    throw ConfigError("bad boolean for " + key + ": '" + text + "'");
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
    std::vector<std::uint64_t> seeds;
    std::istringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        seeds.push_back(parse_value<std::uint64_t>("run.seeds", item));
    }
    if (seeds.empty()) {
        throw ConfigError("run.seeds is empty");
    }
    return seeds;
}

template <typename T>
Setter number(T RunConfig::*field) {
    return [field](RunConfig& c, const std::string& v) { c.*field = parse_value<T>("", v); };
}

Setter flag(bool RunConfig::*field) {
    return [field](RunConfig& c, const std::string& v) { c.*field = parse_bool("", v); };
}

Setter text(std::string RunConfig::*field) {
    return [field](RunConfig& c, const std::string& v) { c.*field = v; };
}

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = {
        {"run.seed", number(&RunConfig::seed)},
        {"run.seeds", [](RunConfig& c, const std::string& v) { c.seeds = parse_seeds(v); }},
        {"run.backend", text(&RunConfig::backend)},
        {"split.train", number(&RunConfig::train)},
        {"split.val", number(&RunConfig::val)},
        {"split.test", number(&RunConfig::test)},
        {"split.history", number(&RunConfig::history)},
        {"split.warm_up", number(&RunConfig::warm_up)},
        {"split.slow_window", number(&RunConfig::slow_window)},
        {"split.fast_window", number(&RunConfig::fast_window)},
        {"flags.memory", flag(&RunConfig::memory)},
        {"flags.reflection", flag(&RunConfig::reflection)},
        {"flags.cold_start", flag(&RunConfig::cold_start)},
        {"flags.planner_evolution", flag(&RunConfig::planner_evolution)},
        {"flags.per_tool_selection", flag(&RunConfig::per_tool_selection)},
        {"flags.skill_extraction", flag(&RunConfig::skill_extraction)},
        {"evolution.j_min", [](RunConfig& c, const std::string& v) { c.evolution.j_min = parse_value<std::size_t>("evolution.j_min", v); }},
        {"evolution.every", [](RunConfig& c, const std::string& v) { c.evolution.every = parse_value<std::size_t>("evolution.every", v); }},
        {"evolution.r_min", [](RunConfig& c, const std::string& v) { c.evolution.r_min = parse_value<double>("evolution.r_min", v); }},
        {"evolution.distill_every", number(&RunConfig::distill_every)},
        {"evolution.planner_streak", number(&RunConfig::planner_streak)},
        {"credit.method", [](RunConfig& c, const std::string& v) { c.credit = credit::parse_method(v); }},
        {"credit.lambda", number(&RunConfig::lambda)},
        {"credit.shapley_every", number(&RunConfig::shapley_every)},
        {"data.csv", text(&RunConfig::data_csv)},
        {"data.static_dir", text(&RunConfig::static_dir)},
        {"data.cost_bp", number(&RunConfig::cost_bp)},
        {"data.outcome_scale", number(&RunConfig::outcome_scale)},
        {"data.tool_window", number(&RunConfig::tool_window)},
        {"planner.temperature", [](RunConfig& c, const std::string& v) { c.allocation.temperature = parse_value<double>("planner.temperature", v); }},
        {"planner.risk_budget", [](RunConfig& c, const std::string& v) { c.allocation.risk_budget = parse_value<double>("planner.risk_budget", v); }},
        {"planner.linucb_alpha", number(&RunConfig::linucb_alpha)},
        {"memory.capacity", number(&RunConfig::memory_capacity)},
        {"memory.write_threshold", number(&RunConfig::write_threshold)},
        {"memory.default_policy", text(&RunConfig::default_policy)},
        {"per_tool.k_initial", [](RunConfig& c, const std::string& v) { c.per_tool.k_initial = parse_value<std::size_t>("per_tool.k_initial", v); }},
        {"per_tool.k_min", [](RunConfig& c, const std::string& v) { c.per_tool.k_min = parse_value<std::size_t>("per_tool.k_min", v); }},
        {"per_tool.shrink_every", [](RunConfig& c, const std::string& v) { c.per_tool.shrink_every = parse_value<std::size_t>("per_tool.shrink_every", v); }},
    };
    return table;
}

RunConfig from_tree(const boost::property_tree::ptree& tree) {
    RunConfig config;
    for (const auto& [section, body] : tree) {
        if (body.empty() && !body.data().empty()) {
            throw ConfigError("key '" + section + "' outside any section");
        }
        for (const auto& [key, value] : body) {
            const std::string name = section + "." + key;
            auto it = setters().find(name);
            if (it == setters().end()) {
                throw ConfigError("unknown config key '" + name + "'");
            }
            try {
                it->second(config, value.data());
            } catch (const ConfigError& err) {
                throw ConfigError(name + ": " + err.what());
            }
        }
    }
    config.validate();
    return config;
}

}  // namespace

void RunConfig::validate() const {
    if (train == 0 || val == 0 || test == 0) {
        throw ConfigError("split: train, val and test must all be positive");
    }
    if (warm_up > train) {
        throw ConfigError("split.warm_up exceeds the training split");
    }
    if (slow_window == 0 || fast_window != 1) {
        throw ConfigError("split: slow_window must be positive and fast_window must be 1");
    }
    if (train < slow_window) {
        throw ConfigError("split: training needs at least one slow window");
    }
    if (distill_every == 0 || distill_every % slow_window != 0) {
        throw ConfigError("evolution.distill_every must be a positive multiple of split.slow_window");
    }
    if (evolution.every == 0 || !(evolution.r_min >= 0.0 && evolution.r_min <= 1.0)) {
        throw ConfigError("evolution: every must be positive and r_min in [0,1]");
    }
    if (planner_streak == 0 || shapley_every == 0) {
        throw ConfigError("planner_streak and shapley_every must be positive");
    }
    if (!(lambda >= 0.0 && lambda <= 1.0)) {
        throw ConfigError("credit.lambda outside [0,1]");
    }
    if (!(cost_bp >= 0.0)) {
        throw ConfigError("data.cost_bp must be non-negative");
    }
    if (!(outcome_scale > 0.0)) {
        throw ConfigError("data.outcome_scale must be positive");
    }
    if (tool_window < 26) {
        throw ConfigError("data.tool_window must cover the 26-bar indicator lookback");
    }
    if (!(allocation.temperature > 0.0) || !(allocation.risk_budget > 0.0 && allocation.risk_budget <= 1.0)) {
        throw ConfigError("planner: temperature must be positive and risk_budget in (0,1]");
    }
    if (!(linucb_alpha >= 0.0)) {
        throw ConfigError("planner.linucb_alpha must be non-negative");
    }
    if (per_tool.k_min == 0 || per_tool.k_min > per_tool.k_initial || per_tool.k_initial > toolkit::kNumTools ||
        per_tool.shrink_every == 0) {
        throw ConfigError("per_tool: need 0 < k_min <= k_initial <= 12 and shrink_every > 0");
    }
    if (memory_capacity == 0 || !(write_threshold >= 0.0 && write_threshold <= 1.0)) {
        throw ConfigError("memory: capacity must be positive and write_threshold in [0,1]");
    }
    bool known = false;
    for (const auto& p : memory::default_policies()) {
        known = known || p.policy_id == default_policy;
    }
    if (!known) {
        throw ConfigError("memory.default_policy '" + default_policy + "' is not a built-in policy");
    }
    if (backend != "stub" && backend != "http") {
        throw ConfigError("run.backend must be stub or http");
    }
    if (seeds.empty()) {
        throw ConfigError("run.seeds is empty");
    }
}

Json RunConfig::to_json() const {
    return {
        {"seed", seed},
        {"seeds", seeds},
        {"split", {{"train", train}, {"val", val}, {"test", test}, {"history", history}}},
        {"warm_up", warm_up},
        {"slow_window", slow_window},
        {"fast_window", fast_window},
        {"distill_every", distill_every},
        {"evolution", {{"j_min", evolution.j_min}, {"every", evolution.every}, {"r_min", evolution.r_min}}},
        {"planner_streak", planner_streak},
        {"shapley_every", shapley_every},
        {"credit", credit::method_name(credit)},
        {"lambda", lambda},
        {"memory", memory},
        {"reflection", reflection},
        {"cold_start", cold_start},
        {"planner_evolution", planner_evolution},
        {"per_tool_selection", per_tool_selection},
        {"skill_extraction", skill_extraction},
        {"cost_bp", cost_bp},
        {"data_csv", data_csv},
        {"static_dir", static_dir},
        {"backend", backend},
        {"allocation", {{"temperature", allocation.temperature}, {"risk_budget", allocation.risk_budget}}},
        {"outcome_scale", outcome_scale},
        {"linucb_alpha", linucb_alpha},
        {"per_tool",
         {{"k_initial", per_tool.k_initial}, {"k_min", per_tool.k_min}, {"shrink_every", per_tool.shrink_every}}},
        {"memory_capacity", memory_capacity},
        {"write_threshold", write_threshold},
        {"default_policy", default_policy},
        {"tool_window", tool_window},
    };
}

const std::vector<std::string>& preset_names() {
    static const std::vector<std::string> names = {"Stateless", "+Tools", "+Memory", "AEL"};
    return names;
}

RunConfig preset(const std::string& name, RunConfig base) {
    base.memory = true;
    base.reflection = true;
    base.per_tool_selection = false;
    if (name == "Stateless") {
        base.memory = false;
        base.reflection = false;
    } else if (name == "+Tools") {
        base.memory = false;
        base.reflection = false;
        base.per_tool_selection = true;
    } else if (name == "+Memory") {
        base.reflection = false;
    } else if (name != "AEL") {
        throw ConfigError("unknown preset '" + name + "'");
    }
    return base;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config file " + path);
    }
    std::stringstream buffer;
    buffer << in.rdbuf();
    return config_from_string(buffer.str());
}

RunConfig config_from_string(const std::string& text) {
    boost::property_tree::ptree tree;
    std::istringstream in(text);
    try {
        boost::property_tree::read_ini(in, tree);
    } catch (const boost::property_tree::ini_parser_error& err) {
        throw ConfigError(std::string("config: ") + err.what());
    }
    return from_tree(tree);
}

}  // namespace ael
