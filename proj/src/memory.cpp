#include "ael/memory.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

#include "ael/errors.hpp"

namespace ael::memory {

namespace {

const char* kTierPrefix[3] = {"epi-", "sem-", "proc-"};

std::string fmt3(double x) {
    char buffer[32];
    std::snprintf(buffer, sizeof(buffer), "%.3f", x);
    return buffer;
}

std::string join(const std::vector<std::string>& items, char sep = ',') {
    std::string out;
    for (const auto& item : items) {
        if (!out.empty()) {
            out += sep;
        }
        out += item;
    }
    return out;
}

std::vector<std::string> split(const std::string& text, char sep) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(text);
    while (std::getline(in, item, sep)) {
        if (!item.empty()) {
            out.push_back(item);
        }
    }
    return out;
}

std::map<std::string, std::string> key_values(const std::string& line) {
    std::map<std::string, std::string> kv;
    std::istringstream in(line);
    std::string token;
    while (in >> token) {
        const auto eq = token.find('=');
        if (eq != std::string::npos) {
            kv[token.substr(0, eq)] = token.substr(eq + 1);
        }
    }
    return kv;
}

double to_double(const std::string& text, double fallback) {
    char* end = nullptr;
    const double value = std::strtod(text.c_str(), &end);
    return (end == text.c_str() || !std::isfinite(value)) ? fallback : value;
}

// Eviction victim: lowest quality, then oldest, then smallest id.
bool evicts_before(const MemoryEntry& a, const MemoryEntry& b) {
    if (a.quality != b.quality) {
        return a.quality < b.quality;
    }
    if (a.created_at != b.created_at) {
        return a.created_at < b.created_at;
    }
    return a.entry_id < b.entry_id;
}

}  // namespace

std::string tier_name(Tier tier) {
    switch (tier) {
        case Tier::episodic: return "episodic";
        case Tier::semantic: return "semantic";
        case Tier::procedural: return "procedural";
    }
    return "episodic";
}

Tier parse_tier(const std::string& name) {
    if (name == "episodic") return Tier::episodic;
    if (name == "semantic") return Tier::semantic;
    if (name == "procedural") return Tier::procedural;
    throw ConfigError("unknown memory tier '" + name + "'");
}

double tier_boost(Tier tier) {
    switch (tier) {
        case Tier::episodic: return 1.0;
        case Tier::semantic: return 1.2;
        case Tier::procedural: return 1.5;
    }
    return 1.0;
}

Json MemoryEntry::to_json() const {
    return {{"entry_id", entry_id}, {"tier", tier_name(tier)}, {"ticker", ticker},
            {"sector", sector},     {"tools_used", tools_used}, {"content", content},
            {"quality", quality},   {"created_at", created_at}, {"regime", regime},
            {"origin_cycle", origin_cycle}};
}

std::string format_name(Format format) {
    switch (format) {
        case Format::none: return "none";
        case Format::sliding_window: return "sliding_window";
        case Format::full: return "full";
        case Format::ranked_truncate: return "ranked_truncate";
    }
    return "none";
}

Format parse_format(const std::string& name) {
    if (name == "none") return Format::none;
    if (name == "sliding_window") return Format::sliding_window;
    if (name == "full") return Format::full;
    if (name == "ranked_truncate") return Format::ranked_truncate;
    throw ConfigError("unknown retrieval format '" + name + "'");
}

void RetrievalPolicy::validate() const {
    const bool off = format == Format::none;
    if (off != tiers.empty() || off != (top_k == 0)) {
        throw ConfigError("policy " + policy_id + ": format none, empty tiers and top_k 0 must coincide");
    }
    if (!(quality_threshold >= 0.0 && quality_threshold <= 1.0)) {
        throw ConfigError("policy " + policy_id + ": quality threshold outside [0,1]");
    }
    if (token_budget == 0) {
        throw ConfigError("policy " + policy_id + ": token budget must be positive");
    }
    if (!std::is_sorted(tiers.begin(), tiers.end()) ||
        std::adjacent_find(tiers.begin(), tiers.end()) != tiers.end()) {
        throw ConfigError("policy " + policy_id + ": tiers must be sorted and unique");
    }
}

bool RetrievalPolicy::enables(Tier tier) const {
    return std::find(tiers.begin(), tiers.end(), tier) != tiers.end();
}

bool RetrievalPolicy::same_shape(const RetrievalPolicy& other) const {
    return tiers == other.tiers && top_k == other.top_k && format == other.format &&
           quality_threshold == other.quality_threshold && token_budget == other.token_budget;
}

Json RetrievalPolicy::to_json() const {
    Json t = Json::array();
    for (Tier tier : tiers) {
        t.push_back(tier_name(tier));
    }
    return {{"policy_id", policy_id},
            {"tiers", t},
            {"top_k", top_k},
            {"format", format_name(format)},
            {"quality_threshold", quality_threshold},
            {"token_budget", token_budget}};
}

std::vector<RetrievalPolicy> default_policies() {
    const std::vector<Tier> all = {Tier::episodic, Tier::semantic, Tier::procedural};
    return {
        {"none", {}, 0, Format::none, 0.3, 4000},
        {"recent_window", {Tier::episodic}, 5, Format::sliding_window, 0.3, 4000},
        {"full_detailed", all, 5, Format::full, 0.3, 4000},
        {"compressed", {Tier::semantic, Tier::procedural}, 5, Format::ranked_truncate, 0.3, 600},
        {"aggressive_learner", all, 10, Format::ranked_truncate, 0.2, 1500},
    };
}

double f_match(const MemoryQuery& query, const MemoryEntry& entry, const MatchBonuses& bonuses) {
    double f = 0.0;
    if (!query.ticker.empty() && query.ticker == entry.ticker) {
        f += bonuses.same_ticker;
    }
    if (!query.sector.empty() && query.sector == entry.sector) {
        f += bonuses.same_sector;
    }
    for (const auto& tool : entry.tools_used) {
        if (std::find(query.tools.begin(), query.tools.end(), tool) != query.tools.end()) {
            f += bonuses.per_shared_tool;
        }
    }
    if (!query.regime.empty() && query.regime == entry.regime) {
        f += bonuses.same_regime;
    }
    return f > 0.0 ? f : bonuses.floor;
}

double recency_factor(double delta, double lambda) { return 0.3 + 0.7 * std::exp(-lambda * delta); }

double relevance_from_parts(double f, double quality, double delta, Tier tier, double lambda) {
    return f * (0.5 + 0.5 * quality) * recency_factor(delta, lambda) * tier_boost(tier);
}

double relevance_score(const MemoryQuery& query, const MemoryEntry& entry) {
    if (entry.created_at > query.current_episode) {
        throw ContractViolation("memory entry " + entry.entry_id + " is newer than the query");
    }
    const auto delta = static_cast<double>(query.current_episode - entry.created_at);
    return relevance_from_parts(f_match(query, entry), entry.quality, delta, entry.tier);
}

MemoryStore::MemoryStore(std::size_t capacity_per_tier) : capacity_(capacity_per_tier) {
    if (capacity_ == 0) {
        throw ConfigError("memory tier capacity must be positive");
    }
}

std::size_t MemoryStore::total_size() const {
    return tiers_[0].size() + tiers_[1].size() + tiers_[2].size();
}

void MemoryStore::check_writable() const {
    if (read_only_) {
        throw FrozenStateViolation("write to a read-only memory store");
    }
}

std::string MemoryStore::next_id(Tier t) {
    const int i = static_cast<int>(t);
    char buffer[32];
    std::snprintf(buffer, sizeof(buffer), "%s%06zu", kTierPrefix[i], ++counters_[i]);
    return buffer;
}

void MemoryStore::advance_cycle() {
    check_writable();
    ++cycle_;
}

std::optional<std::string> MemoryStore::insert(MemoryEntry entry) {
    check_writable();
    if (!(entry.quality >= 0.0 && entry.quality <= 1.0)) {
        throw ContractViolation("memory quality outside [0,1]");
    }
    auto& tier_entries = tiers_[static_cast<int>(entry.tier)];
    if (entry.entry_id.empty()) {
        entry.entry_id = next_id(entry.tier);
    }
    std::sort(entry.tools_used.begin(), entry.tools_used.end());
    entry.tools_used.erase(std::unique(entry.tools_used.begin(), entry.tools_used.end()), entry.tools_used.end());
    const std::string id = entry.entry_id;
    tier_entries.push_back(std::move(entry));
    bool kept = true;
    while (tier_entries.size() > capacity_) {
        auto victim = std::min_element(tier_entries.begin(), tier_entries.end(), evicts_before);
        kept = kept && victim->entry_id != id;
        tier_entries.erase(victim);
    }
    if (!kept) {
        return std::nullopt;
    }
    return id;
}

Json MemoryStore::snapshot() const {
    Json doc = {{"cycle", cycle_}, {"counters", counters_}};
    for (int i = 0; i < 3; ++i) {
        std::vector<const MemoryEntry*> sorted;
        for (const auto& e : tiers_[i]) {
            sorted.push_back(&e);
        }
        std::sort(sorted.begin(), sorted.end(),
                  [](const MemoryEntry* a, const MemoryEntry* b) { return a->entry_id < b->entry_id; });
        Json entries = Json::array();
        for (const auto* e : sorted) {
            entries.push_back(e->to_json());
        }
        doc[tier_name(static_cast<Tier>(i))] = entries;
    }
    return doc;
}

std::string MemoryStore::hash() const { return state_hash(snapshot()); }

RetrievalResult retrieve(const MemoryStore& store, const RetrievalPolicy& policy, const MemoryQuery& query) {
    RetrievalResult result;
    if (policy.format == Format::none || policy.top_k == 0 || policy.tiers.empty()) {
        return result;
    }
    struct Candidate {
        const MemoryEntry* entry;
        double score;
    };
    std::vector<Candidate> candidates;
    for (Tier t : policy.tiers) {
        for (const auto& e : store.tier(t)) {
            if (e.created_at > query.current_episode || e.quality < policy.quality_threshold) {
                continue;
            }
            const double score = relevance_score(query, e);
            if (score > 0.0) {
                candidates.push_back({&e, score});
            }
        }
    }
    if (policy.format == Format::sliding_window) {
        std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
            if (a.entry->created_at != b.entry->created_at) {
                return a.entry->created_at < b.entry->created_at;
            }
            return a.entry->entry_id < b.entry->entry_id;
        });
        if (candidates.size() > policy.top_k) {
            std::vector<Candidate> window;
            window.push_back(candidates.front());
            window.insert(window.end(), candidates.end() - static_cast<std::ptrdiff_t>(policy.top_k - 1),
                          candidates.end());
            candidates = std::move(window);
        }
    } else {
        std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
            if (a.score != b.score) {
                return a.score > b.score;
            }
            return a.entry->entry_id < b.entry->entry_id;
        });
        if (candidates.size() > policy.top_k) {
            candidates.resize(policy.top_k);
        }
    }
    bool truncated = false;
    for (const auto& c : candidates) {
        result.entries.push_back(*c.entry);
        result.scores.push_back(c.score);
        const std::string line = c.entry->content + "\n";
        if (policy.format == Format::ranked_truncate &&
            (truncated || result.context.size() + line.size() > policy.token_budget)) {
            truncated = true;
            continue;
        }
        result.context += line;
    }
    return result;
}

double episodic_quality(double score) { return std::clamp((score + 1.0) / 2.0, 0.0, 1.0); }

std::string episodic_content(const EpisodeRecord& record) {
    return "episode=" + std::to_string(record.episode) + " ticker=" + record.ticker +
           " regime=" + (record.regime.empty() ? "-" : record.regime) + " s=" + fmt3(record.score) +
           " hits=" + (record.hits.empty() ? "-" : join(record.hits)) +
           " misses=" + (record.misses.empty() ? "-" : join(record.misses));
}

std::optional<std::string> write_episodic(MemoryStore& store, const EpisodeRecord& record, double write_threshold) {
    if (store.read_only()) {
        throw FrozenStateViolation("episodic write to a read-only memory store");
    }
    const double q = episodic_quality(record.score);
    if (q < write_threshold) {
        return std::nullopt;
    }
    MemoryEntry entry;
    entry.tier = Tier::episodic;
    entry.ticker = record.ticker;
    entry.sector = record.sector;
    entry.tools_used = record.hits;
    entry.tools_used.insert(entry.tools_used.end(), record.misses.begin(), record.misses.end());
    entry.content = episodic_content(record);
    entry.quality = q;
    entry.created_at = record.episode;
    entry.regime = record.regime;
    entry.origin_cycle = store.distill_cycle();
    return store.insert(std::move(entry));
}

std::map<std::string, ToolEvidence> tally_evidence(const std::string& context, const std::string& ticker,
                                                   const std::string& regime) {
    std::map<std::string, ToolEvidence> evidence;
    std::istringstream in(context);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        double weight = 1.0;
        if (line.rfind("RULE ", 0) == 0) {
            weight = 2.0;
            line = line.substr(5);
        }
        const auto kv = key_values(line);
        auto tk = kv.find("ticker");
        if (tk == kv.end() || tk->second != ticker) {
            continue;
        }
        auto rg = kv.find("regime");
        if (!regime.empty() && rg != kv.end() && rg->second != "-" && rg->second != regime) {
            weight *= 0.5;
        }
        if (kv.count("episode")) {
            for (const char* key : {"hits", "misses"}) {
                auto it = kv.find(key);
                if (it == kv.end() || it->second == "-") {
                    continue;
                }
                for (const auto& tool : split(it->second, ',')) {
                    (key[0] == 'h' ? evidence[tool].hits : evidence[tool].misses) += weight;
                }
            }
        } else if (kv.count("tool") && kv.count("hit_rate")) {
            const double rate = std::clamp(to_double(kv.at("hit_rate"), 0.5), 0.0, 1.0);
            const double n = kv.count("n") ? std::max(0.0, to_double(kv.at("n"), 0.0)) : 1.0;
            auto& ev = evidence[kv.at("tool")];
            ev.hits += weight * rate * n;
            ev.misses += weight * (1.0 - rate) * n;
        }
    }
    return evidence;
}

std::vector<MemoryEntry> distill_semantic(MemoryStore& store, const std::vector<DistillObservation>& window,
                                          reflection::CompletionBackend& backend, std::size_t current_episode,
                                          const std::string& regime, const DistillSettings& settings) {
    if (store.read_only()) {
        throw FrozenStateViolation("distillation into a read-only memory store");
    }
    std::map<std::pair<std::string, std::string>, const DistillObservation*> known;
    Json observations = Json::array();
    for (const auto& obs : window) {
        known[{obs.tool, obs.ticker}] = &obs;
        observations.push_back({{"tool", obs.tool}, {"ticker", obs.ticker}, {"hits", obs.hits}, {"misses", obs.misses}});
    }
    reflection::CompletionRequest request;
    request.task = "distill";
    request.payload = {{"observations", observations},
                       {"min_decided", settings.min_decided},
                       {"min_rate", settings.min_rate}};
    std::multimap<std::string, std::string> fields;
    try {
        fields = reflection::parse_response(backend.complete(request).text);
    } catch (const std::exception& err) {
        spdlog::warn("distillation skipped: {}", err.what());
        return {};
    }
    store.advance_cycle();
    std::vector<MemoryEntry> created;
    auto range = fields.equal_range("pattern");
    for (auto it = range.first; it != range.second; ++it) {
        const auto kv = key_values(it->second);
        if (!kv.count("tool") || !kv.count("ticker") || !kv.count("hit_rate")) {
            spdlog::warn("distillation: unreadable pattern '{}'", it->second);
            continue;
        }
        auto obs = known.find({kv.at("tool"), kv.at("ticker")});
        if (obs == known.end()) {
            spdlog::warn("distillation: pattern names an unobserved pair '{}'", it->second);
            continue;
        }
        const double rate = std::clamp(to_double(kv.at("hit_rate"), 0.0), 0.0, 1.0);
        MemoryEntry entry;
        entry.tier = Tier::semantic;
        entry.ticker = obs->second->ticker;
        entry.sector = obs->second->sector;
        entry.tools_used = {obs->second->tool};
        entry.content = "tool=" + kv.at("tool") + " ticker=" + kv.at("ticker") + " hit_rate=" + fmt3(rate) +
                        " n=" + (kv.count("n") ? kv.at("n") : std::string("0")) +
                        " regime=" + (regime.empty() ? "-" : regime);
        entry.quality = rate;
        entry.created_at = current_episode;
        entry.regime = regime;
        entry.origin_cycle = store.distill_cycle();
        if (auto id = store.insert(entry)) {
            entry.entry_id = *id;
            created.push_back(std::move(entry));
        }
    }
    return created;
}

std::vector<MemoryEntry> promote_procedural(MemoryStore& store, std::size_t current_episode,
                                            const PromotionSettings& settings) {
    if (store.read_only()) {
        throw FrozenStateViolation("promotion in a read-only memory store");
    }
    std::set<std::string> existing;
    for (const auto& e : store.tier(Tier::procedural)) {
        existing.insert(e.entry_id);
    }
    std::vector<MemoryEntry> candidates;
    for (const auto& e : store.tier(Tier::semantic)) {
        if (e.quality >= settings.threshold && store.distill_cycle() >= e.origin_cycle + settings.min_cycles &&
            !existing.count("proc-" + e.entry_id)) {
            candidates.push_back(e);
        }
    }
    std::sort(candidates.begin(), candidates.end(),
              [](const MemoryEntry& a, const MemoryEntry& b) { return a.entry_id < b.entry_id; });
    std::vector<MemoryEntry> promoted;
    for (auto& e : candidates) {
        MemoryEntry rule = e;
        rule.entry_id = "proc-" + e.entry_id;
        rule.tier = Tier::procedural;
        rule.content = "RULE " + e.content;
        rule.created_at = current_episode;
        if (store.insert(rule)) {
            promoted.push_back(std::move(rule));
        }
    }
    return promoted;
}

std::vector<std::string> procedural_rules_for(const MemoryStore& store, const std::string& ticker, std::size_t limit) {
    std::vector<const MemoryEntry*> rules;
    for (const auto& e : store.tier(Tier::procedural)) {
        if (e.ticker == ticker) {
            rules.push_back(&e);
        }
    }
    std::sort(rules.begin(), rules.end(), [](const MemoryEntry* a, const MemoryEntry* b) {
        if (a->quality != b->quality) {
            return a->quality > b->quality;
        }
        return a->entry_id > b->entry_id;
    });
    std::vector<std::string> out;
    for (std::size_t i = 0; i < rules.size() && i < limit; ++i) {
        out.push_back(rules[i]->content);
    }
    return out;
}

}  // namespace ael::memory
