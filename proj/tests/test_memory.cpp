#include <gtest/gtest.h>

#include "ael/backend.hpp"
#include "ael/errors.hpp"
#include "ael/memory.hpp"
#include "ael/rng.hpp"
#include "oracles.hpp"

using namespace ael;
using namespace ael::memory;

namespace {

MemoryEntry entry(Tier tier, const std::string& ticker, double q, std::size_t at) {
    MemoryEntry e;
    e.tier = tier;
    e.ticker = ticker;
    e.sector = "tech";
    e.quality = q;
    e.created_at = at;
    e.content = "note " + ticker;
    return e;
}

RetrievalPolicy policy_named(const std::string& id) {
    for (const auto& p : default_policies()) {
        if (p.policy_id == id) return p;
    }
    throw std::runtime_error(id);
}

}  // namespace

TEST(Relevance, IdentityPointAndTierBoosts) {
    EXPECT_DOUBLE_EQ(relevance_from_parts(1.0, 1.0, 0.0, Tier::episodic), 1.0);
    EXPECT_DOUBLE_EQ(relevance_from_parts(1.0, 1.0, 0.0, Tier::semantic), 1.2);
    EXPECT_DOUBLE_EQ(relevance_from_parts(1.0, 1.0, 0.0, Tier::procedural), 1.5);
    EXPECT_NEAR(relevance_from_parts(2.0, 1.0, 1e6, Tier::procedural), 0.3 * 2.0 * 1.5, 1e-12);
}

TEST(Relevance, RecencyStaysInBounds) {
    for (double d : {0.0, 1.0, 10.0, 100.0, 1e3, 1e5}) {
        const double r = recency_factor(d);
        EXPECT_GE(r, 0.3);
        EXPECT_LE(r, 1.0);
    }
}

TEST(Relevance, MatchBonusesAreAdditiveWithFloor) {
    MemoryQuery q{"ALPH", "tech", {"compute_momentum", "run_dcf_model"}, 10, "bull"};
    MemoryEntry e = entry(Tier::episodic, "ALPH", 1.0, 10);
    e.tools_used = {"compute_momentum", "run_dcf_model"};
    e.regime = "bull";
    EXPECT_DOUBLE_EQ(f_match(q, e), 2.0 + 1.0 + 0.5 + 0.5 + 0.5);
    MemoryEntry other = entry(Tier::episodic, "ZZZ", 1.0, 10);
    other.sector = "energy";
    EXPECT_DOUBLE_EQ(f_match(q, other), 0.1);
}

TEST(Relevance, NewerEntryIsAContractViolation) {
    MemoryQuery q{"ALPH", "", {}, 3, ""};
    EXPECT_THROW(relevance_score(q, entry(Tier::episodic, "ALPH", 1.0, 4)), ContractViolation);
}

TEST(Relevance, MonotoneUnderPerturbation) {
    Rng rng(8);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int k = 0; k < 500; ++k) {
        const double f = 0.1 + 4.0 * u(rng);
        const double q = u(rng);
        const double d = 300.0 * u(rng);
        EXPECT_LE(relevance_from_parts(f, q, d, Tier::episodic), relevance_from_parts(f, std::min(1.0, q + 0.1), d, Tier::episodic));
        EXPECT_GE(relevance_from_parts(f, q, d, Tier::semantic), relevance_from_parts(f, q, d + 5.0, Tier::semantic));
        EXPECT_LE(relevance_from_parts(f, q, d, Tier::episodic), relevance_from_parts(f, q, d, Tier::semantic));
        EXPECT_LE(relevance_from_parts(f, q, d, Tier::semantic), relevance_from_parts(f, q, d, Tier::procedural));
    }
}

TEST(Policies, DefaultsMatchTheTable) {
    const auto pool = default_policies();
    ASSERT_EQ(pool.size(), 5u);
    EXPECT_EQ(pool[0].policy_id, "none");
    EXPECT_EQ(pool[0].format, Format::none);
    EXPECT_EQ(pool[0].top_k, 0u);
    const auto compressed = policy_named("compressed");
    EXPECT_EQ(compressed.tiers, (std::vector<Tier>{Tier::semantic, Tier::procedural}));
    EXPECT_EQ(compressed.top_k, 5u);
    EXPECT_EQ(compressed.format, Format::ranked_truncate);
    EXPECT_DOUBLE_EQ(compressed.quality_threshold, 0.3);
    for (const auto& p : pool) {
        EXPECT_NO_THROW(p.validate());
    }
}

TEST(Policies, NoneInvariantIsEnforced) {
    RetrievalPolicy p{"bad", {Tier::episodic}, 0, Format::full, 0.3, 100};
    EXPECT_THROW(p.validate(), ConfigError);
    RetrievalPolicy q{"bad", {}, 0, Format::full, 0.3, 100};
    EXPECT_THROW(q.validate(), ConfigError);
}

TEST(Retrieve, NonePolicyReturnsNothing) {
    MemoryStore store;
    store.insert(entry(Tier::episodic, "ALPH", 0.9, 0));
    const auto r = retrieve(store, policy_named("none"), {"ALPH", "tech", {}, 5, ""});
    EXPECT_TRUE(r.entries.empty());
    EXPECT_TRUE(r.context.empty());
}

TEST(Retrieve, TopFiveMatchesBruteForce) {
    MemoryStore store;
    Rng rng(3);
    std::uniform_real_distribution<double> u(0.3, 1.0);
    for (int k = 0; k < 10; ++k) {
        store.insert(entry(Tier::episodic, k % 2 ? "ALPH" : "BRVO", u(rng), static_cast<std::size_t>(k)));
    }
    const MemoryQuery q{"ALPH", "tech", {}, 20, ""};
    const auto p = policy_named("full_detailed");
    const auto r = retrieve(store, p, q);
    std::vector<std::string> ids;
    for (const auto& e : r.entries) ids.push_back(e.entry_id);
    EXPECT_EQ(ids, oracle::top_k(store, p, q));
    EXPECT_EQ(ids.size(), 5u);
}

TEST(Retrieve, QualityGate) {
    MemoryStore store;
    for (int k = 0; k < 6; ++k) {
        store.insert(entry(Tier::episodic, "ALPH", 0.1, 0));
    }
    EXPECT_TRUE(retrieve(store, policy_named("full_detailed"), {"ALPH", "", {}, 1, ""}).entries.empty());
}

TEST(Retrieve, SlidingWindowIsFirstPlusLatest) {
    MemoryStore store;
    for (std::size_t k = 0; k < 9; ++k) {
        store.insert(entry(Tier::episodic, "ALPH", 0.9, k));
    }
    const auto r = retrieve(store, policy_named("recent_window"), {"ALPH", "", {}, 9, ""});
    ASSERT_EQ(r.entries.size(), 5u);
    EXPECT_EQ(r.entries[0].created_at, 0u);
    EXPECT_EQ(r.entries[1].created_at, 5u);
    EXPECT_EQ(r.entries[4].created_at, 8u);
}

TEST(Retrieve, RankedTruncateRespectsBudget) {
    MemoryStore store;
    for (std::size_t k = 0; k < 5; ++k) {
        auto e = entry(Tier::semantic, "ALPH", 0.9, k);
        e.content = std::string(40, 'x');
        store.insert(e);
    }
    RetrievalPolicy p{"tight", {Tier::semantic}, 5, Format::ranked_truncate, 0.3, 100};
    const auto r = retrieve(store, p, {"ALPH", "", {}, 5, ""});
    EXPECT_LE(r.context.size(), 100u);
    EXPECT_EQ(r.context.size(), 82u);
}

TEST(Retrieve, ReadOnlyStoreHashUnchanged) {
    MemoryStore store;
    for (std::size_t k = 0; k < 30; ++k) {
        store.insert(entry(static_cast<Tier>(k % 3), k % 2 ? "ALPH" : "BRVO", 0.5 + 0.01 * k, k));
    }
    store.set_read_only(true);
    const auto before = store.hash();
    for (const auto& p : default_policies()) {
        retrieve(store, p, {"ALPH", "tech", {}, 40, ""});
    }
    EXPECT_EQ(store.hash(), before);
    EXPECT_THROW(store.insert(entry(Tier::episodic, "ALPH", 1.0, 40)), FrozenStateViolation);
}

TEST(Episodic, QualityEndpointsAndThreshold) {
    MemoryStore store;
    EpisodeRecord win{0, "ALPH", "tech", "", 1.0, {"compute_momentum"}, {}};
    const auto id = write_episodic(store, win);
    ASSERT_TRUE(id.has_value());
    EXPECT_DOUBLE_EQ(store.tier(Tier::episodic)[0].quality, 1.0);
    EpisodeRecord loss{1, "ALPH", "tech", "", -1.0, {}, {}};
    EXPECT_FALSE(write_episodic(store, loss).has_value());
    EXPECT_EQ(store.size(Tier::episodic), 1u);
}

TEST(Episodic, ReadOnlyWriteIsAViolation) {
    MemoryStore store;
    store.set_read_only(true);
    EXPECT_THROW(write_episodic(store, {0, "ALPH", "tech", "", 1.0, {}, {}}), FrozenStateViolation);
}

TEST(Episodic, EvictionDropsLowestQualityThenOldest) {
    MemoryStore store(500);
    Rng rng(12);
    std::uniform_int_distribution<int> level(3, 9);
    std::vector<MemoryEntry> mirror;
    for (std::size_t k = 0; k < 500; ++k) {
        auto e = entry(Tier::episodic, "ALPH", level(rng) / 10.0, k);
        e.entry_id = "e" + std::to_string(100000 + k);
        store.insert(e);
        mirror.push_back(e);
    }
    auto e = entry(Tier::episodic, "ALPH", 0.95, 500);
    e.entry_id = "e" + std::to_string(100500);
    store.insert(e);
    mirror.push_back(e);
    // Oracle: minimum by (quality, created_at).
    const auto victim = std::min_element(mirror.begin(), mirror.end(), [](const auto& a, const auto& b) {
        return a.quality != b.quality ? a.quality < b.quality : a.created_at < b.created_at;
    });
    EXPECT_EQ(store.size(Tier::episodic), 500u);
    for (const auto& kept : store.tier(Tier::episodic)) {
        EXPECT_NE(kept.entry_id, victim->entry_id);
    }
}

TEST(Evidence, TalliesHitsMissesAndRules) {
    const std::string context =
        "episode=3 ticker=ALPH regime=bull s=0.500 hits=compute_momentum misses=run_dcf_model\n"
        "episode=4 ticker=BRVO regime=bull s=0.500 hits=run_dcf_model misses=-\n"
        "tool=run_dcf_model ticker=ALPH hit_rate=0.800 n=10 regime=flat\n"
        "RULE tool=compute_momentum ticker=ALPH hit_rate=0.900 n=10 regime=bull\n";
    const auto ev = tally_evidence(context, "ALPH", "bull");
    EXPECT_DOUBLE_EQ(ev.at("compute_momentum").hits, 1.0 + 2.0 * 9.0);
    EXPECT_NEAR(ev.at("compute_momentum").misses, 2.0 * 1.0, 1e-12);
    EXPECT_NEAR(ev.at("run_dcf_model").hits, 0.5 * 8.0, 1e-12);
    EXPECT_NEAR(ev.at("run_dcf_model").misses, 1.0 + 0.5 * 2.0, 1e-12);
}

TEST(Distill, StubWritesHitRateEntries) {
    MemoryStore store;
    reflection::StubBackend stub;
    std::vector<DistillObservation> window = {{"compute_momentum", "ALPH", "tech", 9, 1},
                                              {"run_dcf_model", "ALPH", "tech", 3, 7}};
    const auto written = distill_semantic(store, window, stub, 9, "bull");
    ASSERT_EQ(written.size(), 1u);
    EXPECT_EQ(written[0].ticker, "ALPH");
    EXPECT_EQ(written[0].tools_used, std::vector<std::string>{"compute_momentum"});
    EXPECT_DOUBLE_EQ(written[0].quality, 0.9);
    EXPECT_EQ(written[0].tier, Tier::semantic);
}

TEST(Distill, NothingAboveHalfWritesNothing) {
    MemoryStore store;
    reflection::StubBackend stub;
    const auto written = distill_semantic(store, {{"compute_momentum", "ALPH", "tech", 2, 8}}, stub, 9, "");
    EXPECT_TRUE(written.empty());
}

TEST(Distill, Deterministic) {
    std::vector<DistillObservation> window = {{"compute_momentum", "ALPH", "tech", 7, 3},
                                              {"score_risk", "BRVO", "tech", 6, 2}};
    MemoryStore a, b;
    reflection::StubBackend sa, sb;
    distill_semantic(a, window, sa, 9, "flat");
    distill_semantic(b, window, sb, 9, "flat");
    EXPECT_EQ(a.hash(), b.hash());
}

namespace {

class FailingBackend : public reflection::CompletionBackend {
public:
    std::string name() const override { return "failing"; }

protected:
    reflection::CompletionResponse do_complete(const reflection::CompletionRequest&) override {
        throw BackendError("offline");
    }
};

}  // namespace

TEST(Distill, BackendFailureSkipsTheCycle) {
    MemoryStore store;
    FailingBackend backend;
    const auto written = distill_semantic(store, {{"compute_momentum", "ALPH", "tech", 9, 1}}, backend, 9, "");
    EXPECT_TRUE(written.empty());
    EXPECT_EQ(store.size(Tier::semantic), 0u);
}

TEST(Promote, HighQualityAfterTwoFurtherCycles) {
    MemoryStore store;
    reflection::StubBackend stub;
    distill_semantic(store, {{"compute_momentum", "ALPH", "tech", 9, 1}, {"score_risk", "ALPH", "tech", 6, 4}}, stub, 9,
                     "");
    EXPECT_TRUE(promote_procedural(store, 9).empty());
    store.advance_cycle();
    EXPECT_TRUE(promote_procedural(store, 19).empty());
    store.advance_cycle();
    const auto promoted = promote_procedural(store, 29);
    ASSERT_EQ(promoted.size(), 1u);
    EXPECT_EQ(promoted[0].tier, Tier::procedural);
    EXPECT_EQ(promoted[0].content.rfind("RULE ", 0), 0u);
    EXPECT_EQ(store.size(Tier::semantic), 2u);
    EXPECT_TRUE(promote_procedural(store, 39).empty());
    EXPECT_EQ(procedural_rules_for(store, "ALPH").size(), 1u);
}

TEST(Promote, EmptySemanticTier) {
    MemoryStore store;
    EXPECT_TRUE(promote_procedural(store, 100).empty());
}
