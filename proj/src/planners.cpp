#include "ael/planners.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <spdlog/spdlog.h>

#include "ael/errors.hpp"

namespace ael::planners {

namespace {

const std::vector<std::string> kQuickTools = {"compute_momentum", "compute_technicals"};

std::vector<std::string> names_of(const ToolMap& tools) {
    std::vector<std::string> out;
    for (const auto& [name, output] : tools) {
        out.push_back(name);
    }
    return out;
}

std::vector<std::string> names_in_group(const ToolMap& tools, toolkit::Group group) {
    std::vector<std::string> out;
    for (const auto& [name, output] : tools) {
        if (toolkit::is_tool(name) && toolkit::registry()[toolkit::tool_index(name)].group == group) {
            out.push_back(name);
        }
    }
    return out;
}

double multiplier_for(const std::map<std::string, double>& multipliers, const std::string& tool) {
    auto it = multipliers.find(tool);
    return it == multipliers.end() ? 1.0 : it->second;
}

double tool_weight(const toolkit::ToolOutput& out, const std::map<std::string, double>& multipliers,
                   const std::string& regime) {
    double w = out.confidence * multiplier_for(multipliers, out.tool);
    if (regime == "bear" && toolkit::is_tool(out.tool) &&
        toolkit::registry()[toolkit::tool_index(out.tool)].group == toolkit::Group::risk) {
        w *= 1.5;
    }
    return w;
}

bool has_all(const ToolMap& tools, const std::vector<std::string>& names) {
    return std::all_of(names.begin(), names.end(), [&](const std::string& n) { return tools.count(n) > 0; });
}

int sign(double x) { return (x > 0.0) - (x < 0.0); }

// Short-term move against the 20-bar trend.
bool is_reversal(const ToolMap& tools) {
    auto ph = tools.find("get_price_history");
    auto mo = tools.find("compute_momentum");
    if (ph == tools.end() || mo == tools.end()) {
        return false;
    }
    return sign(ph->second.signal) * sign(mo->second.signal) < 0;
}

}  // namespace

std::string family_name(Family family) {
    switch (family) {
        case Family::sequential: return "sequential";
        case Family::decompose: return "decompose";
        case Family::adaptive: return "adaptive";
        case Family::cot_reasoning: return "cot_reasoning";
        case Family::reflexion: return "reflexion";
        case Family::hypothesis_test: return "hypothesis_test";
        case Family::evolved: return "evolved";
    }
    return "sequential";
}

Family parse_family(const std::string& name) {
    for (Family f : builtin_families()) {
        if (family_name(f) == name) {
            return f;
        }
    }
    if (name == "evolved") {
        return Family::evolved;
    }
    throw ConfigError("unknown planner family '" + name + "'");
}

const std::vector<Family>& builtin_families() {
    static const std::vector<Family> families = {Family::sequential,    Family::decompose, Family::adaptive,
                                                 Family::cot_reasoning, Family::reflexion, Family::hypothesis_test};
    return families;
}

bool EvolvedParams::valid() const {
    return std::isfinite(floor) && std::isfinite(gain) && floor > 0.0 && floor <= 0.1 && gain > 0.0 && gain <= 1.0;
}

Json Planner::to_json() const {
    Json doc = {{"id", id}, {"family", family_name(family)}, {"strategy_hints", strategy_hints}};
    if (family == Family::evolved) {
        doc["params"] = {{"floor", params.floor}, {"gain", params.gain}};
    }
    return doc;
}

Planner builtin_planner(Family family) {
    Planner p;
    p.id = family_name(family);
    p.family = family;
    return p;
}

Json AllocationDecision::to_json() const {
    return {{"weights", weights}, {"cash", cash}, {"scores", scores}, {"fell_back", fell_back}};
}

AllocationDecision score_to_weights(std::span<const double> scores, const AllocationConfig& config) {
    if (!(config.temperature > 0.0)) {
        throw ContractViolation("softmax temperature must be positive");
    }
    if (!(config.risk_budget > 0.0 && config.risk_budget <= 1.0)) {
        throw ContractViolation("risk budget outside (0,1]");
    }
    AllocationDecision d;
    d.scores.assign(scores.begin(), scores.end());
    if (scores.empty()) {
        d.cash = 1.0;
        return d;
    }
    const double top = *std::max_element(scores.begin(), scores.end());
    d.weights.resize(scores.size());
    double total = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        d.weights[i] = std::exp((scores[i] - top) / config.temperature);
        total += d.weights[i];
    }
    double invested = 0.0;
    for (double& w : d.weights) {
        w = config.risk_budget * w / total;
        invested += w;
    }
    d.cash = 1.0 - invested;
    return d;
}

double fuse(const ToolMap& tools, const std::map<std::string, double>& multipliers,
            const std::vector<std::string>& names, const std::string& regime) {
    double num = 0.0;
    double den = 0.0;
    for (const auto& name : names) {
        auto it = tools.find(name);
        if (it == tools.end()) {
            continue;
        }
        const double w = tool_weight(it->second, multipliers, regime);
        if (w <= 0.0) {
            continue;
        }
        num += w * it->second.signal;
        den += w;
    }
    return den > 0.0 ? std::clamp(num / den, -1.0, 1.0) : 0.0;
}

double plan_score(const Planner& planner, const ToolMap& tools, const std::map<std::string, double>& multipliers,
                  const std::string& regime, bool* fell_back) {
    const auto all = names_of(tools);
    auto sequential = [&] { return fuse(tools, multipliers, all, regime); };
    auto fallback = [&] {
        spdlog::debug("planner {} lacks its tools; sequential fusion", planner.id);
        if (fell_back) {
            *fell_back = true;
        }
        return sequential();
    };
    switch (planner.family) {
        case Family::sequential:
        case Family::evolved:
            return sequential();
        case Family::decompose: {
            double sum = 0.0;
            int groups = 0;
            for (auto g : {toolkit::Group::valuation, toolkit::Group::momentum, toolkit::Group::sentiment,
                           toolkit::Group::risk}) {
                const auto names = names_in_group(tools, g);
                double den = 0.0;
                for (const auto& n : names) {
                    den += std::max(0.0, tool_weight(tools.at(n), multipliers, regime));
                }
                if (den > 0.0) {
                    sum += fuse(tools, multipliers, names, regime);
                    ++groups;
                }
            }
            return groups > 0 ? sum / groups : 0.0;
        }
        case Family::adaptive: {
            if (!has_all(tools, kQuickTools)) {
                return fallback();
            }
            const double quick = fuse(tools, multipliers, kQuickTools, regime);
            return std::abs(quick) < 0.15 ? sequential() : quick;
        }
        case Family::cot_reasoning: {
            double running = 0.0;
            bool started = false;
            for (auto g : {toolkit::Group::momentum, toolkit::Group::valuation, toolkit::Group::sentiment,
                           toolkit::Group::risk}) {
                const auto names = names_in_group(tools, g);
                if (names.empty()) {
                    continue;
                }
                const double stage = fuse(tools, multipliers, names, regime);
                if (!started) {
                    running = stage;
                    started = true;
                } else if (sign(stage) * sign(running) < 0) {
                    running *= 0.75;
                } else {
                    running += 0.25 * (stage - running);
                }
            }
            return started ? running : fallback();
        }
        case Family::reflexion: {
            if (!has_all(tools, kQuickTools)) {
                return fallback();
            }
            double conf = 0.0;
            for (const auto& n : kQuickTools) {
                conf += tools.at(n).confidence;
            }
            conf /= static_cast<double>(kQuickTools.size());
            return conf < 0.5 ? sequential() : fuse(tools, multipliers, kQuickTools, regime);
        }
        case Family::hypothesis_test: {
            double bull = 0.0;
            double bear = 0.0;
            for (const auto& [name, out] : tools) {
                const double w = std::max(0.0, tool_weight(out, multipliers, regime));
                if (out.signal > 0.0) {
                    bull += w * out.signal;
                } else {
                    bear -= w * out.signal;
                }
            }
            return bull + bear > 0.0 ? (bull - bear) / (bull + bear) : 0.0;
        }
    }
    return sequential();
}

AllocationDecision plan(const Planner& planner, const PlannerContext& context, const AllocationConfig& config) {
    const std::size_t n = context.tickers.size();
    if (context.tool_outputs.size() != n) {
        throw ContractViolation("planner context: tool outputs do not cover every ticker");
    }
    if (planner.family == Family::evolved && !planner.params.valid()) {
        throw ConfigError("evolved planner " + planner.id + " has invalid parameters");
    }
    const std::string regime = context.insight ? context.insight->regime : std::string();
    static const std::map<std::string, double> kNoMultipliers;
    std::vector<double> scores(n, 0.0);
    bool fell_back = false;
    std::vector<bool> reversal(n, false);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& mult = i < context.multipliers.size() ? context.multipliers[i] : kNoMultipliers;
        scores[i] = plan_score(planner, context.tool_outputs[i], mult, regime, &fell_back);
        if (planner.family == Family::evolved) {
            reversal[i] = is_reversal(context.tool_outputs[i]);
            if (!reversal[i]) {
                scores[i] *= 1.0 + planner.params.gain;
            }
        }
    }
    AllocationDecision d = score_to_weights(scores, config);
    d.fell_back = fell_back;
    if (planner.family == Family::evolved) {
        const double floor = planner.params.floor * config.risk_budget;
        double pinned = 0.0;
        double rest = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (reversal[i]) {
                pinned += floor;
            } else {
                rest += d.weights[i];
            }
        }
        if (rest > 0.0 && pinned < config.risk_budget) {
            const double scale = (config.risk_budget - pinned) / rest;
            for (std::size_t i = 0; i < n; ++i) {
                d.weights[i] = reversal[i] ? floor : d.weights[i] * scale;
            }
        }
        double invested = 0.0;
        for (double w : d.weights) {
            invested += w;
        }
        d.cash = 1.0 - invested;
    }
    return d;
}

bool smoke_test(const Planner& planner) {
    if (planner.family == Family::evolved && !planner.params.valid()) {
        return false;
    }
    PlannerContext ctx;
    const double signals[4][3] = {{0.6, 0.4, -0.2}, {-0.5, -0.3, 0.1}, {0.2, -0.4, 0.0}, {0.0, 0.0, 0.0}};
    for (int i = 0; i < 4; ++i) {
        ctx.tickers.push_back("SMK" + std::to_string(i));
        ToolMap tools;
        const char* names[3] = {"get_price_history", "compute_momentum", "compute_technicals"};
        for (int k = 0; k < 3; ++k) {
            toolkit::ToolOutput out;
            out.tool = names[k];
            out.signal = signals[i][k];
            out.confidence = 0.8;
            tools[out.tool] = out;
        }
        ctx.tool_outputs.push_back(tools);
    }
    try {
        const auto d = plan(planner, ctx);
        double total = d.cash;
        for (double w : d.weights) {
            if (!(w >= 0.0) || !std::isfinite(w)) {
                return false;
            }
            total += w;
        }
        return d.weights.size() == ctx.tickers.size() && d.cash >= -1e-12 && std::abs(total - 1.0) < 1e-9;
    } catch (const std::exception& err) {
        spdlog::warn("planner {} failed its smoke test: {}", planner.id, err.what());
        return false;
    }
}

double trust_multiplier(const memory::ToolEvidence& evidence) {
    const double t = (evidence.hits - evidence.misses) / (evidence.hits + evidence.misses + 2.0);
    return std::max(0.0, 1.0 + 2.0 * t);
}

std::pair<std::string, std::string> insight_targets(const std::string& text) {
    auto word_after = [&](const std::string& marker) {
        const auto pos = text.find(marker);
        if (pos == std::string::npos) {
            return std::string();
        }
        std::istringstream in(text.substr(pos + marker.size()));
        std::string word;
        in >> word;
        while (!word.empty() && (word.back() == ';' || word.back() == ',')) {
            word.pop_back();
        }
        return toolkit::is_tool(word) ? word : std::string();
    };
    return {word_after("rely on "), word_after("discount ")};
}

std::map<std::string, double> tool_multipliers(const std::map<std::string, memory::ToolEvidence>& evidence,
                                               const std::optional<reflection::ReflectionInsight>& insight,
                                               const std::vector<std::vector<std::string>>& skill_hints) {
    std::map<std::string, double> m;
    for (const auto& info : toolkit::registry()) {
        auto it = evidence.find(info.name);
        m[info.name] = it == evidence.end() ? 1.0 : trust_multiplier(it->second);
    }
    if (insight) {
        const double c = std::clamp(insight->confidence, 0.0, 1.0);
        const auto [rely, discount] = insight_targets(insight->causal_insight);
        if (!rely.empty()) {
            m[rely] *= 1.0 + c;
        }
        if (!discount.empty() && discount != rely) {
            m[discount] *= 1.0 - c;
        }
    }
    for (const auto& skill : skill_hints) {
        for (const auto& tool : skill) {
            if (m.count(tool)) {
                m[tool] *= 1.25;
            }
        }
    }
    return m;
}

std::string baseline_name(Baseline kind) {
    switch (kind) {
        case Baseline::EqW: return "EqW";
        case Baseline::Mom: return "Mom";
        case Baseline::MinV: return "MinV";
        case Baseline::InvM: return "InvM";
    }
    return "EqW";
}

Baseline parse_baseline(const std::string& name) {
    for (Baseline b : all_baselines()) {
        if (baseline_name(b) == name) {
            return b;
        }
    }
    throw ConfigError("unknown baseline '" + name + "'");
}

const std::vector<Baseline>& all_baselines() {
    static const std::vector<Baseline> kinds = {Baseline::EqW, Baseline::Mom, Baseline::MinV, Baseline::InvM};
    return kinds;
}

std::vector<double> baseline_allocate(Baseline kind, const std::vector<std::vector<double>>& trailing_closes) {
    const std::size_t n = trailing_closes.size();
    if (n == 0) {
        throw ContractViolation("baseline needs at least one ticker");
    }
    const std::vector<double> equal(n, 1.0 / static_cast<double>(n));
    if (kind == Baseline::EqW) {
        return equal;
    }
    for (const auto& c : trailing_closes) {
        if (c.size() < 20) {
            throw ContractViolation(baseline_name(kind) + " needs a trailing window of at least 20 bars");
        }
    }
    std::vector<double> raw(n, 0.0);
    if (kind == Baseline::Mom || kind == Baseline::InvM) {
        for (std::size_t i = 0; i < n; ++i) {
            const auto& c = trailing_closes[i];
            const std::size_t back = std::min<std::size_t>(20, c.size() - 1);
            const double ret = c.back() / c[c.size() - 1 - back] - 1.0;
            raw[i] = std::max(0.0, kind == Baseline::Mom ? ret : -ret);
        }
    } else {
        std::vector<std::size_t> flat;
        for (std::size_t i = 0; i < n; ++i) {
            const auto& c = trailing_closes[i];
            std::vector<double> r(c.size() - 1);
            for (std::size_t t = 1; t < c.size(); ++t) {
                r[t - 1] = c[t] / c[t - 1] - 1.0;
            }
            const double mean = std::accumulate(r.begin(), r.end(), 0.0) / static_cast<double>(r.size());
            double ss = 0.0;
            for (double x : r) {
                ss += (x - mean) * (x - mean);
            }
            const double var = ss / static_cast<double>(r.size() - 1);
            if (var <= 0.0) {
                flat.push_back(i);
            } else {
                raw[i] = 1.0 / var;
            }
        }
        if (!flat.empty()) {
            std::fill(raw.begin(), raw.end(), 0.0);
            for (std::size_t i : flat) {
                raw[i] = 1.0;
            }
        }
    }
    const double total = std::accumulate(raw.begin(), raw.end(), 0.0);
    if (!(total > 0.0)) {
        return equal;
    }
    for (double& w : raw) {
        w /= total;
    }
    return raw;
}

}  // namespace ael::planners
