#include "ael/reflection.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <spdlog/spdlog.h>

#include "ael/errors.hpp"

namespace ael::reflection {

namespace {

double parse_number(const std::string& text) {
    std::size_t used = 0;
    const double value = std::stod(text, &used);
    if (used == 0 || !std::isfinite(value)) {
        throw ParseError("not a number: " + text);
    }
    return value;
}

std::string join_tools(const std::vector<std::string>& tools) {
    std::string out;
    for (const auto& t : tools) {
        out += (out.empty() ? "" : "+") + t;
    }
    return out;
}

}  // namespace

bool is_regime(const std::string& label) {
    return label == "bull" || label == "bear" || label == "flat" || label == "mixed";
}

Json ReflectionRequest::payload() const {
    Json acc = Json::object();
    for (const auto& [tool, a] : tool_accuracy) {
        acc[tool] = {{"hits", a.hits}, {"misses", a.misses}};
    }
    Json priors = Json::array();
    for (const auto& p : prior_insights) {
        priors.push_back(p.to_json());
    }
    return {{"window", window},
            {"episode_summaries", episode_summaries},
            {"tool_accuracy", acc},
            {"index_returns", index_returns},
            {"sector_returns", sector_returns},
            {"realized_vol", realized_vol},
            {"mean_cross_correlation", mean_cross_correlation},
            {"terciles", {{"low", terciles.low}, {"high", terciles.high}}},
            {"prior_insights", priors}};
}

ReflectionInsight reflect(const ReflectionRequest& request, CompletionBackend& backend,
                          const std::optional<ReflectionInsight>& previous) {
    CompletionRequest req;
    req.task = "reflect";
    req.payload = request.payload();
    try {
        const auto fields = parse_response(backend.complete(req).text);
        ReflectionInsight insight;
        insight.regime = response_value(fields, "regime");
        if (!is_regime(insight.regime)) {
            throw ParseError("unknown regime '" + insight.regime + "'");
        }
        insight.confidence = parse_number(response_value(fields, "confidence"));
        if (insight.confidence < 0.0 || insight.confidence > 1.0) {
            throw ParseError("confidence outside [0,1]");
        }
        insight.causal_insight = response_value(fields, "insight");
        insight.window = request.window;
        return insight;
    } catch (const std::exception& err) {
        spdlog::warn("reflection for window {} failed ({}); carrying the previous insight", request.window,
                     err.what());
        if (previous) {
            return *previous;
        }
        ReflectionInsight none;
        none.regime = "mixed";
        none.window = request.window;
        return none;
    }
}

VolTerciles vol_terciles(std::vector<double> vols) {
    if (vols.empty()) {
        return {};
    }
    std::sort(vols.begin(), vols.end());
    return {market::percentile(vols, 1.0 / 3.0), market::percentile(vols, 2.0 / 3.0)};
}

bool evolution_due(std::size_t window, const EvolutionSettings& settings) {
    return settings.every > 0 && window > settings.j_min && window % settings.every == 0;
}

const std::vector<memory::RetrievalPolicy>& policy_grid() {
    static const std::vector<memory::RetrievalPolicy> grid = [] {
        using memory::Format;
        using memory::Tier;
        std::vector<memory::RetrievalPolicy> out;
        for (unsigned mask = 1; mask < 8; ++mask) {
            std::vector<Tier> tiers;
            for (int t = 0; t < 3; ++t) {
                if (mask & (1u << t)) {
                    tiers.push_back(static_cast<Tier>(t));
                }
            }
            for (std::size_t k : {3, 5, 8}) {
                for (Format f : {Format::full, Format::ranked_truncate, Format::sliding_window}) {
                    memory::RetrievalPolicy p;
                    p.tiers = tiers;
                    p.top_k = k;
                    p.format = f;
                    p.token_budget = f == Format::ranked_truncate ? 150 * k : 4000;
                    out.push_back(p);
                }
            }
        }
        return out;
    }();
    return grid;
}

std::optional<memory::RetrievalPolicy> evolve_memory_policy(const bandits::ThompsonSelector& selector,
                                                            const std::vector<memory::RetrievalPolicy>& pool,
                                                            const std::optional<ReflectionInsight>& insight,
                                                            CompletionBackend& backend, std::size_t window,
                                                            const EvolutionSettings& settings) {
    if (!evolution_due(window, settings) || selector.size() == 0 || selector.mean_posterior() >= settings.r_min) {
        return std::nullopt;
    }
    const memory::RetrievalPolicy* candidate = nullptr;
    for (const auto& g : policy_grid()) {
        const bool taken =
            std::any_of(pool.begin(), pool.end(), [&](const memory::RetrievalPolicy& p) { return p.same_shape(g); });
        if (!taken) {
            candidate = &g;
            break;
        }
    }
    if (!candidate) {
        spdlog::warn("memory-policy grid exhausted at window {}", window);
        return std::nullopt;
    }
    CompletionRequest req;
    req.task = "evolve_policy";
    req.payload = {{"window", window},
                   {"mean_posterior", selector.mean_posterior()},
                   {"candidate", candidate->to_json()},
                   {"insight", insight ? insight->to_json() : Json(nullptr)}};
    try {
        const auto fields = parse_response(backend.complete(req).text);
        memory::RetrievalPolicy policy = *candidate;
        policy.tiers.clear();
        std::istringstream tiers(response_value(fields, "tiers"));
        std::string tier;
        while (std::getline(tiers, tier, ',')) {
            policy.tiers.push_back(memory::parse_tier(tier));
        }
        std::sort(policy.tiers.begin(), policy.tiers.end());
        policy.top_k = static_cast<std::size_t>(parse_number(response_value(fields, "top_k")));
        policy.format = memory::parse_format(response_value(fields, "format"));
        policy.policy_id = "evolved-" + std::to_string(pool.size() + 1);
        policy.validate();
        return policy;
    } catch (const std::exception& err) {
        spdlog::warn("evolved memory policy rejected at window {}: {}", window, err.what());
        return std::nullopt;
    }
}

std::map<std::string, Prior> cold_start_priors(const std::vector<PriorRequestArm>& arms, CompletionBackend& backend,
                                               bool enabled) {
    std::map<std::string, Prior> priors;
    for (const auto& arm : arms) {
        priors[arm.id] = {1.0, 1.0};
    }
    if (!enabled || arms.empty()) {
        return priors;
    }
    CompletionRequest req;
    req.task = "cold_start";
    Json list = Json::array();
    for (const auto& arm : arms) {
        list.push_back({{"id", arm.id}, {"kind", arm.kind}, {"description", arm.description}});
    }
    req.payload = {{"arms", list}};
    std::multimap<std::string, std::string> fields;
    try {
        fields = parse_response(backend.complete(req).text);
    } catch (const std::exception& err) {
        spdlog::warn("cold-start priors unavailable ({}); using (1,1)", err.what());
        return priors;
    }
    auto range = fields.equal_range("prior");
    for (auto it = range.first; it != range.second; ++it) {
        std::istringstream in(it->second);
        std::string id;
        double a = 0.0;
        double b = 0.0;
        if (!(in >> id >> a >> b) || !priors.count(id)) {
            spdlog::warn("cold-start: unreadable prior '{}'", it->second);
            continue;
        }
        if (a >= 0.5 && a <= 10.0 && b >= 0.5 && b <= 10.0) {
            priors[id] = {a, b};
        } else {
            spdlog::warn("cold-start: prior for {} outside [0.5,10]; using (1,1)", id);
        }
    }
    return priors;
}

void FailureStreaks::record(const std::string& planner_id, double window_mean_score) {
    if (window_mean_score < 0.0) {
        ++streaks_[planner_id];
    } else {
        streaks_[planner_id] = 0;
    }
}

std::size_t FailureStreaks::streak(const std::string& planner_id) const {
    auto it = streaks_.find(planner_id);
    return it == streaks_.end() ? 0 : it->second;
}

void FailureStreaks::reset(const std::string& planner_id) { streaks_[planner_id] = 0; }

std::string FailureStreaks::worst() const {
    std::string id;
    std::size_t best = 0;
    for (const auto& [planner, streak] : streaks_) {
        if (streak > best) {
            best = streak;
            id = planner;
        }
    }
    return id;
}

planners::EvolvedParams template_params(std::size_t k) {
    static const double floors[4] = {0.05, 0.02, 0.08, 0.1};
    static const double gains[3] = {0.1, 0.3, 0.5};
    return {floors[k % 4], gains[(k / 4) % 3]};
}

std::optional<planners::Planner> planner_evolution_check(FailureStreaks& streaks, bool enabled,
                                                         CompletionBackend& backend, std::size_t evolved_so_far,
                                                         std::size_t threshold) {
    if (!enabled) {
        return std::nullopt;
    }
    const std::string failing = streaks.worst();
    if (failing.empty() || streaks.streak(failing) < threshold) {
        return std::nullopt;
    }
    streaks.reset(failing);
    const planners::EvolvedParams candidate = template_params(evolved_so_far);
    CompletionRequest req;
    req.task = "evolve_planner";
    req.payload = {{"failing_planner", failing},
                   {"template", "momentum_reversal"},
                   {"candidate", {{"floor", candidate.floor}, {"gain", candidate.gain}}}};
    planners::Planner planner;
    planner.family = planners::Family::evolved;
    planner.id = "evolved-mr-" + std::to_string(evolved_so_far + 1);
    try {
        const auto fields = parse_response(backend.complete(req).text);
        planner.params.floor = parse_number(response_value(fields, "floor"));
        planner.params.gain = parse_number(response_value(fields, "gain"));
    } catch (const std::exception& err) {
        spdlog::warn("planner evolution reply unusable: {}", err.what());
        return std::nullopt;
    }
    if (!planners::smoke_test(planner)) {
        spdlog::warn("evolved planner {} rejected by its smoke test", planner.id);
        return std::nullopt;
    }
    return planner;
}

Json SkillRecord::to_json() const {
    return {{"skill_id", skill_id}, {"tools", tools}, {"success_rate", success_rate}, {"applications", applications}};
}

SkillLibrary::SkillLibrary(std::size_t capacity, double decay) : capacity_(capacity), decay_(decay) {
    if (capacity_ == 0 || !(decay_ > 0.0 && decay_ < 1.0)) {
        throw ConfigError("skill library needs positive capacity and decay in (0,1)");
    }
}

void SkillLibrary::observe(std::vector<std::string> tools, bool correct) {
    std::sort(tools.begin(), tools.end());
    tools.erase(std::unique(tools.begin(), tools.end()), tools.end());
    if (tools.size() < 2) {
        return;
    }
    const std::string id = join_tools(tools);
    auto it = std::find_if(skills_.begin(), skills_.end(), [&](const SkillRecord& s) { return s.skill_id == id; });
    const double outcome = correct ? 1.0 : 0.0;
    if (it != skills_.end()) {
        it->success_rate = decay_ * it->success_rate + (1.0 - decay_) * outcome;
        ++it->applications;
        return;
    }
    if (!correct) {
        return;
    }
    skills_.push_back({id, tools, 1.0, 1});
    while (skills_.size() > capacity_) {
        auto victim = std::min_element(skills_.begin(), skills_.end(), [](const SkillRecord& a, const SkillRecord& b) {
            if (a.success_rate != b.success_rate) {
                return a.success_rate < b.success_rate;
            }
            if (a.applications != b.applications) {
                return a.applications < b.applications;
            }
            return a.skill_id < b.skill_id;
        });
        skills_.erase(victim);
    }
}

std::vector<std::vector<std::string>> SkillLibrary::hints(std::size_t limit, std::size_t min_applications) const {
    std::vector<const SkillRecord*> eligible;
    for (const auto& s : skills_) {
        if (s.applications >= min_applications) {
            eligible.push_back(&s);
        }
    }
    std::sort(eligible.begin(), eligible.end(), [](const SkillRecord* a, const SkillRecord* b) {
        if (a->success_rate != b->success_rate) {
            return a->success_rate > b->success_rate;
        }
        return a->skill_id < b->skill_id;
    });
    std::vector<std::vector<std::string>> out;
    for (std::size_t i = 0; i < eligible.size() && i < limit; ++i) {
        out.push_back(eligible[i]->tools);
    }
    return out;
}

Json SkillLibrary::snapshot() const {
    std::vector<SkillRecord> sorted = skills_;
    std::sort(sorted.begin(), sorted.end(),
              [](const SkillRecord& a, const SkillRecord& b) { return a.skill_id < b.skill_id; });
    Json out = Json::array();
    for (const auto& s : sorted) {
        out.push_back(s.to_json());
    }
    return out;
}

}  // namespace ael::reflection
