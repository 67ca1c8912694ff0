#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ael/backend.hpp"
#include "ael/canonical.hpp"

namespace ael::memory {

enum class Tier { episodic = 0, semantic = 1, procedural = 2 };

std::string tier_name(Tier tier);
Tier parse_tier(const std::string& name);
// 1.0 / 1.2 / 1.5
double tier_boost(Tier tier);

struct MemoryEntry {
    std::string entry_id;
    Tier tier = Tier::episodic;
    std::string ticker;
    std::string sector;
    std::vector<std::string> tools_used;  // sorted, unique
    std::string content;
    double quality = 0.0;
    std::size_t created_at = 0;
    std::string regime;  // empty when unknown
    std::size_t origin_cycle = 0;

    Json to_json() const;
};

struct MemoryQuery {
    std::string ticker;
    std::string sector;
    std::vector<std::string> tools;
    std::size_t current_episode = 0;
    std::string regime;
};

enum class Format { none, sliding_window, full, ranked_truncate };

std::string format_name(Format format);
Format parse_format(const std::string& name);

struct RetrievalPolicy {
    std::string policy_id;
    std::vector<Tier> tiers;  // sorted, unique
    std::size_t top_k = 0;
    Format format = Format::none;
    double quality_threshold = 0.3;
    std::size_t token_budget = 4000;  // characters

    // format none <=> no tiers <=> top_k 0; threshold in [0,1]; budget > 0.
    void validate() const;
    bool enables(Tier tier) const;
    // Same retrieval behaviour, ignoring the id.
    bool same_shape(const RetrievalPolicy& other) const;
    Json to_json() const;
};

// none, recent_window, full_detailed, compressed, aggressive_learner
std::vector<RetrievalPolicy> default_policies();
inline const char* kDefaultPolicy = "compressed";

struct MatchBonuses {
    double same_ticker = 2.0;
    double same_sector = 1.0;
    double per_shared_tool = 0.5;
    double same_regime = 0.5;
    double floor = 0.1;
};

double f_match(const MemoryQuery& query, const MemoryEntry& entry, const MatchBonuses& bonuses = {});

// 0.3 + 0.7 exp(-lambda * delta)
double recency_factor(double delta, double lambda = 0.01);

// f * (0.5 + 0.5 q) * recency * tier boost
double relevance_from_parts(double f, double quality, double delta, Tier tier, double lambda = 0.01);

// Throws ContractViolation when the entry is newer than the query.
double relevance_score(const MemoryQuery& query, const MemoryEntry& entry);

class MemoryStore {
public:
    explicit MemoryStore(std::size_t capacity_per_tier = 500);

    const std::vector<MemoryEntry>& tier(Tier t) const { return tiers_[static_cast<int>(t)]; }
    std::size_t size(Tier t) const { return tier(t).size(); }
    std::size_t capacity() const { return capacity_; }
    std::size_t total_size() const;

    // Assigns an id when entry_id is empty, then evicts lowest quality,
    // oldest first, while the tier is over capacity. Returns the id, or
    // nullopt when the new entry itself was evicted.
    std::optional<std::string> insert(MemoryEntry entry);

    void set_read_only(bool value) { read_only_ = value; }
    bool read_only() const { return read_only_; }

    std::size_t distill_cycle() const { return cycle_; }
    void advance_cycle();

    Json snapshot() const;
    std::string hash() const;

private:
    void check_writable() const;
    std::string next_id(Tier t);

    std::array<std::vector<MemoryEntry>, 3> tiers_;
    std::array<std::size_t, 3> counters_{0, 0, 0};
    std::size_t capacity_;
    std::size_t cycle_ = 0;
    bool read_only_ = false;
};

struct RetrievalResult {
    std::vector<MemoryEntry> entries;
    std::vector<double> scores;  // aligned with entries (sliding_window: chronological)
    std::string context;
};

RetrievalResult retrieve(const MemoryStore& store, const RetrievalPolicy& policy, const MemoryQuery& query);

// ---- episodic writes ---------------------------------------------------------

struct EpisodeRecord {
    std::size_t episode = 0;
    std::string ticker;
    std::string sector;
    std::string regime;
    double score = 0.0;  // outcome s in [-1, 1]
    std::vector<std::string> hits;
    std::vector<std::string> misses;
};

double episodic_quality(double score);
std::string episodic_content(const EpisodeRecord& record);

// Rejected (nullopt) when the quality is below write_threshold.
std::optional<std::string> write_episodic(MemoryStore& store, const EpisodeRecord& record,
                                          double write_threshold = 0.3);

// ---- evidence carried by retrieved text ----------------------------------------

struct ToolEvidence {
    double hits = 0.0;
    double misses = 0.0;
};

// Reads episodic, semantic and RULE lines for `ticker`. RULE lines count
// double; when `regime` is set, lines tagged with another regime count half.
std::map<std::string, ToolEvidence> tally_evidence(const std::string& context, const std::string& ticker,
                                                   const std::string& regime = "");

// ---- distillation and promotion ------------------------------------------------

struct DistillObservation {
    std::string tool;
    std::string ticker;
    std::string sector;
    int hits = 0;
    int misses = 0;
};

struct DistillSettings {
    int min_decided = 5;
    double min_rate = 0.5;
};

// One semantic entry per (tool, ticker) pattern the backend reports. A
// failing backend or an unreadable reply skips the cycle with a warning.
std::vector<MemoryEntry> distill_semantic(MemoryStore& store, const std::vector<DistillObservation>& window,
                                          reflection::CompletionBackend& backend, std::size_t current_episode,
                                          const std::string& regime, const DistillSettings& settings = {});

struct PromotionSettings {
    double threshold = 0.8;
    std::size_t min_cycles = 2;
};

std::vector<MemoryEntry> promote_procedural(MemoryStore& store, std::size_t current_episode,
                                            const PromotionSettings& settings = {});

// Up to `limit` RULE lines for the ticker, highest quality first.
std::vector<std::string> procedural_rules_for(const MemoryStore& store, const std::string& ticker,
                                              std::size_t limit = 3);

}  // namespace ael::memory
