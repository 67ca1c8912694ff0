#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "ael/config.hpp"
#include "ael/errors.hpp"
#include "ael/harness.hpp"
#include "ael/rng.hpp"

using namespace ael;
using namespace ael::harness;

namespace {

RunConfig small_config() {
    RunConfig c;
    c.train = 40;
    c.val = 10;
    c.test = 10;
    c.warm_up = 5;
    c.slow_window = 10;
    c.distill_every = 10;
    c.shapley_every = 20;
    return c;
}

// One ticker trends up steadily, the rest wander; aligned hourly grid.
market::PriceSeries trending_market(std::size_t bars, std::uint64_t seed) {
    market::SynthConfig cfg;
    cfg.tickers = {{"TRND", "tech", 1.0, 0.0}};
    for (int i = 0; i < 5; ++i) cfg.tickers.push_back({"N" + std::to_string(i), "misc", 0.0, 0.004});
    cfg.regimes["run"] = {0.004, 0.002, 0.0, 0.0};
    cfg.segments = {{"run", bars}};
    return market::synth_generate(cfg, seed);
}

}  // namespace

TEST(Config, DefaultsValidateAndMatchTheMainSetup) {
    RunConfig c;
    EXPECT_NO_THROW(c.validate());
    EXPECT_TRUE(c.memory);
    EXPECT_TRUE(c.reflection);
    EXPECT_FALSE(c.per_tool_selection);
    EXPECT_EQ(c.episodes(), 208u);
}

TEST(Config, IniRoundTrip) {
    const auto c = config_from_string(
        "[run]\nseed = 7\nseeds = 1,2,3\n[split]\ntrain = 60\nwarm_up = 10\n[flags]\nreflection = false\n"
        "[credit]\nmethod = fcc\n[data]\ncost_bp = 5\n");
    EXPECT_EQ(c.seed, 7u);
    EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{1, 2, 3}));
    EXPECT_EQ(c.train, 60u);
    EXPECT_FALSE(c.reflection);
    EXPECT_EQ(c.credit, credit::Method::fcc);
    EXPECT_DOUBLE_EQ(c.cost_bp, 5.0);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
    EXPECT_THROW(config_from_string("[run]\ncolour = red\n"), ConfigError);
    EXPECT_THROW(config_from_string("[split]\ntrain = many\n"), ConfigError);
    EXPECT_THROW(config_from_string("[split]\nwarm_up = 500\n"), ConfigError);
    EXPECT_THROW(config_from_string("[credit]\nlambda = 2\n"), ConfigError);
    EXPECT_THROW(config_from_string("[data]\ncost_bp = -1\n"), ConfigError);
    EXPECT_THROW(load_config("/nonexistent/run.ini"), ConfigError);
}

TEST(Config, Presets) {
    EXPECT_FALSE(preset("Stateless").memory);
    EXPECT_TRUE(preset("+Tools").per_tool_selection);
    EXPECT_TRUE(preset("+Memory").memory);
    EXPECT_FALSE(preset("+Memory").reflection);
    EXPECT_EQ(preset("AEL").to_json(), RunConfig{}.to_json());
    EXPECT_THROW(preset("Oracle"), ConfigError);
}

TEST(MarketView, RefusesFutureBars) {
    const auto series = trending_market(100, 1);
    MarketView view(series);
    view.set_decision_bar(50);
    EXPECT_EQ(view.window(0, 50, 20).size(), 20u);
    EXPECT_EQ(view.window(0, 50, 20).back().timestamp, series.timestamps[50]);
    EXPECT_EQ(view.window(0, 5, 20).size(), 6u);
    EXPECT_THROW(view.window(0, 51, 20), LookAheadViolation);
    EXPECT_EQ(view.violations(), 1u);
}

TEST(Environment, TooFewBarsIsAConfigError) {
    const auto series = trending_market(60, 1);
    EXPECT_THROW(build_environment(small_config(), 1, &series), ConfigError);
}

TEST(Environment, NoLookAheadWhilePrecomputing) {
    const auto env = build_environment(small_config(), 3);
    EXPECT_EQ(env.lookahead_violations, 0u);
    EXPECT_EQ(env.tools.size(), 60u);
    EXPECT_EQ(env.tools[0].size(), env.num_tickers());
    EXPECT_EQ(env.tools[0][0].size(), toolkit::kNumTools);
}

TEST(Train, AllWarmUpMeansNoPosteriorUpdates) {
    auto cfg = small_config();
    cfg.warm_up = cfg.train;
    const auto env = build_environment(cfg, 5);
    reflection::StubBackend stub;
    const auto start = initial_state(env, stub);
    reflection::StubBackend stub2;
    const auto trained = train(env, stub2);
    EXPECT_EQ(trained.posterior_updates, 0u);
    EXPECT_EQ(trained.state.posterior_hash(), start.posterior_hash());
    for (const auto& entry : trained.log) EXPECT_EQ(entry.phase, "warm_up");
}

TEST(Train, UpdatesStartAfterWarmUp) {
    const auto cfg = small_config();
    const auto env = build_environment(cfg, 5);
    reflection::StubBackend stub;
    const auto trained = train(env, stub);
    EXPECT_EQ(trained.posterior_updates, cfg.train - cfg.warm_up);
    for (std::size_t e = 0; e < cfg.train; ++e) EXPECT_EQ(trained.log[e].phase, e < cfg.warm_up ? "warm_up" : "train");
}

TEST(Train, ArmCountNeverShrinks) {
    auto cfg = small_config();
    cfg.evolution.j_min = 0;
    cfg.evolution.every = 1;
    cfg.evolution.r_min = 1.0;  // every due window evolves
    const auto env = build_environment(cfg, 9);
    reflection::StubBackend stub;
    const auto trained = train(env, stub);
    ASSERT_EQ(trained.arm_counts.size(), cfg.train);
    for (std::size_t e = 1; e < trained.arm_counts.size(); ++e) {
        EXPECT_GE(trained.arm_counts[e], trained.arm_counts[e - 1]);
    }
    EXPECT_GT(trained.evolved_policies, 0u);
    EXPECT_GT(trained.arm_counts.back(), trained.arm_counts.front());
}

TEST(Frozen, TestPhaseWritesNothing) {
    const auto env = build_environment(small_config(), 11);
    reflection::StubBackend stub;
    const auto trained = train(env, stub);
    const auto snap = validate_and_freeze(env, trained);
    EXPECT_EQ(snap.validation_means.size(), trained.checkpoints.size());
    const auto out = test_frozen(env, snap);
    EXPECT_EQ(out.posterior_hash_before, out.posterior_hash_after);
    EXPECT_EQ(out.memory_hash_before, out.memory_hash_after);
    EXPECT_EQ(out.returns.size(), 10u);
    EXPECT_TRUE(snap.state.frozen);
}

TEST(Frozen, SelectsTheBestCheckpointEarliestOnTies) {
    const auto env = build_environment(small_config(), 13);
    reflection::StubBackend stub;
    const auto snap = validate_and_freeze(env, train(env, stub));
    const auto& m = snap.validation_means;
    const auto best = std::max_element(m.begin(), m.end()) - m.begin();
    EXPECT_EQ(snap.selected, static_cast<std::size_t>(best));
}

TEST(Run, SameSeedSameDocument) {
    const auto a = run_experiment(small_config(), 21).to_json();
    const auto b = run_experiment(small_config(), 21).to_json();
    EXPECT_EQ(canonical_dump(a), canonical_dump(b));
    EXPECT_EQ(a["lookahead_violations"], 0);
    const auto c = run_experiment(small_config(), 22).to_json();
    EXPECT_NE(canonical_dump(a), canonical_dump(c));
}

TEST(Run, CostGridMonotoneAndZeroIsExact) {
    const auto r = run_experiment(small_config(), 31);
    const auto& grid = r.test.cost_grid;
    ASSERT_EQ(grid.size(), 4u);
    EXPECT_LE(grid.at("5").sharpe, grid.at("0").sharpe);
    EXPECT_LE(grid.at("10").sharpe, grid.at("5").sharpe);
    EXPECT_LE(grid.at("20").sharpe, grid.at("10").sharpe);
    const auto raw = market::compute_metrics(r.test.returns);
    EXPECT_EQ(grid.at("0").sharpe, raw.sharpe);
    EXPECT_EQ(r.test.metrics.sharpe, raw.sharpe);
}

TEST(Run, SeedsRunIndependently) {
    const std::vector<std::uint64_t> seeds = {4, 5};
    const auto both = run_seeds(small_config(), seeds);
    ASSERT_EQ(both.size(), 2u);
    EXPECT_EQ(canonical_dump(both[1].to_json()), canonical_dump(run_experiment(small_config(), 5).to_json()));
}

TEST(Aggregate, MeanAndSampleStd) {
    market::MetricsReport a, b, c;
    a.sharpe = 1.0;
    b.sharpe = 2.0;
    c.sharpe = 3.0;
    const std::vector<market::MetricsReport> reps = {a, b, c};
    const std::vector<std::uint64_t> seeds = {1, 2, 3};
    const auto agg = aggregate(reps, seeds);
    EXPECT_DOUBLE_EQ(agg.metrics.at("sharpe").mean, 2.0);
    EXPECT_DOUBLE_EQ(agg.metrics.at("sharpe").std, 1.0);
    const auto one = aggregate(std::span(reps).first(1), std::span(seeds).first(1));
    EXPECT_TRUE(one.single_seed);
    EXPECT_EQ(one.metrics.at("sharpe").std, 0.0);
}

TEST(Ablation, NineSingleChangeVariants) {
    const RunConfig base;
    const auto vs = ablation_variants(base);
    ASSERT_EQ(vs.size(), 9u);
    for (const auto& v : vs) {
        EXPECT_FALSE(config_diff(base, v.config).empty()) << v.name;
        EXPECT_NO_THROW(v.config.validate()) << v.name;
    }
    EXPECT_EQ(vs[1].name, "- reflection (= +Memory)");
    EXPECT_EQ(vs[1].config.to_json(), preset("+Memory").to_json());
    EXPECT_TRUE(config_diff(base, base).empty());
}

TEST(Baselines, FourRowsAndMomentumRidesTheTrend) {
    auto cfg = small_config();
    const auto series = trending_market(cfg.history + cfg.episodes() + 1, 17);
    const auto env = build_environment(cfg, 17, &series);
    const auto rows = run_baselines(env);
    ASSERT_EQ(rows.size(), 4u);
    std::map<std::string, double> sharpe;
    for (const auto& r : rows) {
        EXPECT_EQ(r.returns.size(), cfg.test);
        sharpe[r.name] = r.metrics.sharpe;
    }
    EXPECT_GE(sharpe.at("Mom"), sharpe.at("EqW"));
}
