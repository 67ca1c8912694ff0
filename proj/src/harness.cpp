#include "ael/harness.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <future>
#include <numeric>

#include <spdlog/spdlog.h>

#include "ael/errors.hpp"

namespace ael::harness {

namespace {

const std::vector<std::string>& tool_names() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> out;
        for (const auto& info : toolkit::registry()) {
            out.push_back(info.name);
        }
        return out;
    }();
    return names;
}

double mean_of(std::span<const double> xs) {
    return xs.empty() ? 0.0 : std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double sample_sd(std::span<const double> xs) {
    if (xs.size() < 2) {
        return 0.0;
    }
    const double m = mean_of(xs);
    double ss = 0.0;
    for (double x : xs) {
        ss += (x - m) * (x - m);
    }
    return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

int sign(double x) { return (x > 0.0) - (x < 0.0); }

std::size_t policy_index(const AgentState& state, const std::string& id) {
    for (std::size_t k = 0; k < state.policies.size(); ++k) {
        if (state.policies[k].policy_id == id) {
            return k;
        }
    }
    throw ConfigError("retrieval policy '" + id + "' is not in the pool");
}

std::map<std::string, Json> load_static(const std::string& dir, const std::vector<std::string>& tickers) {
    std::map<std::string, Json> out;
    if (dir.empty()) {
        return out;
    }
    if (!std::filesystem::is_directory(dir)) {
        throw ConfigError("static data directory not found: " + dir);
    }
    for (const auto& ticker : tickers) {
        const auto path = std::filesystem::path(dir) / (ticker + ".json");
        if (!std::filesystem::exists(path)) {
            continue;
        }
        std::ifstream in(path);
        try {
            out[ticker] = Json::parse(in);
        } catch (const Json::parse_error& err) {
            throw ConfigError("static data file " + path.string() + ": " + err.what());
        }
    }
    return out;
}

// Portfolio-level context: bias, 30-bar volatility, log market cap, data
// richness, momentum, options availability, analyst coverage; ticker means.
bandits::ContextVector episode_context(const std::vector<std::vector<toolkit::ToolOutput>>& outputs,
                                       const std::vector<std::span<const market::Bar>>& windows,
                                       const std::map<std::string, Json>& static_data,
                                       const std::vector<std::string>& tickers) {
    bandits::ContextVector phi = bandits::ContextVector::Zero(bandits::kContextDim);
    const double n = static_cast<double>(tickers.size());
    const std::size_t mom = toolkit::tool_index("compute_momentum");
    const std::size_t opt = toolkit::tool_index("get_options_data");
    const std::size_t ana = toolkit::tool_index("get_analyst_data");
    phi(0) = 1.0;
    for (std::size_t i = 0; i < tickers.size(); ++i) {
        const auto closes = toolkit::closes_of(windows[i].subspan(windows[i].size() > 31 ? windows[i].size() - 31 : 0));
        phi(1) += 100.0 * sample_sd(toolkit::simple_returns(closes)) / n;
        auto it = static_data.find(tickers[i]);
        if (it != static_data.end() && it->second.contains("fundamentals")) {
            const double cap = it->second["fundamentals"].value("market_cap", 0.0);
            if (cap > 0.0) {
                phi(2) += std::log10(cap) / 12.0 / n;
            }
        }
        int backed = 0;
        int present = 0;
        for (const auto& out : outputs[i]) {
            if (toolkit::registry()[toolkit::tool_index(out.tool)].data_backed) {
                ++backed;
                present += out.confidence > 0.0 ? 1 : 0;
            }
        }
        phi(3) += (backed > 0 ? static_cast<double>(present) / backed : 0.0) / n;
        phi(4) += outputs[i][mom].signal / n;
        phi(5) += (outputs[i][opt].confidence > 0.0 ? 1.0 : 0.0) / n;
        phi(6) += (outputs[i][ana].confidence > 0.0 ? 1.0 : 0.0) / n;
    }
    return phi;
}

Choice frozen_choice(const Environment& env, AgentState& state, std::size_t e) {
    const RunConfig& cfg = env.config;
    Choice ch;
    ch.policy = cfg.memory ? state.memory_bandit.select() : policy_index(state, cfg.default_policy);
    ch.planner = cfg.planner_evolution ? bandits::linucb_select(state.planner_arms, env.phi[e], cfg.linucb_alpha) : 0;
    for (std::size_t i = 0; i < env.num_tickers(); ++i) {
        if (cfg.per_tool_selection) {
            std::vector<std::string> names;
            for (std::size_t k : bandits::per_tool_select(state.tool_arms[i], cfg.per_tool, e, state.tool_rng)) {
                names.push_back(tool_names()[k]);
            }
            ch.tools.push_back(names);
        } else {
            ch.tools.push_back(tool_names());
        }
    }
    return ch;
}

EpisodeLog make_log(const Environment& env, const AgentState& state, std::size_t e, const std::string& phase,
                    const Choice& ch, const Decision& d) {
    EpisodeLog log;
    log.episode = e;
    log.phase = phase;
    log.policy = env.config.memory ? state.policies[ch.policy].policy_id : "-";
    log.planner = state.planners[ch.planner].id;
    log.portfolio_return = d.portfolio_return;
    log.score = d.score;
    log.reward = credit::uniform_reward(d.score);
    log.retrieved = d.retrieved_scores.size();
    return log;
}

std::vector<double> index_returns(const market::PriceSeries& series, std::size_t from_bar, std::size_t to_bar) {
    std::vector<double> out;
    for (std::size_t t = from_bar; t < to_bar; ++t) {
        double r = 0.0;
        for (std::size_t i = 0; i < series.num_tickers(); ++i) {
            r += series.bar_return(i, t);
        }
        out.push_back(r / static_cast<double>(series.num_tickers()));
    }
    return out;
}

struct WindowTally {
    toolkit::HitStats hits;
    std::map<std::string, std::vector<double>> planner_scores;
    std::vector<double> ticker_correct;
    std::vector<double> ticker_decided;
    std::vector<double> ticker_return;
    std::size_t episodes = 0;

    void reset(std::size_t n) {
        hits.clear();
        planner_scores.clear();
        ticker_correct.assign(n, 0.0);
        ticker_decided.assign(n, 0.0);
        ticker_return.assign(n, 0.0);
        episodes = 0;
    }
};

reflection::ReflectionRequest reflection_request(const Environment& env, const AgentState& state,
                                                 const WindowTally& tally, std::size_t window, std::size_t last_episode) {
    const RunConfig& cfg = env.config;
    const auto& series = env.series;
    reflection::ReflectionRequest req;
    req.window = window;
    const std::size_t first_episode = last_episode + 1 - cfg.slow_window;
    const std::size_t end_bar = env.decision_bar(last_episode) + 1;
    req.index_returns = index_returns(series, env.decision_bar(first_episode), end_bar);
    req.realized_vol = sample_sd(req.index_returns);

    // Tercile cut points from every complete window of realized bars so far.
    const auto past = index_returns(series, 0, end_bar);
    std::vector<double> vols;
    for (std::size_t start = 0; start + cfg.slow_window <= past.size(); start += cfg.slow_window) {
        vols.push_back(sample_sd(std::span<const double>(past).subspan(start, cfg.slow_window)));
    }
    req.terciles = reflection::vol_terciles(vols);

    for (const auto& name : tool_names()) {
        const auto total = tally.hits.tool_total(name);
        if (total.total > 0) {
            req.tool_accuracy[name] = {static_cast<double>(total.correct), static_cast<double>(total.incorrect)};
        }
    }
    std::map<std::string, std::pair<double, int>> sector;
    for (std::size_t i = 0; i < series.num_tickers(); ++i) {
        auto& [sum, count] = sector[series.sectors[i]];
        sum += tally.ticker_return[i];
        ++count;
        req.episode_summaries.push_back(
            {{"ticker", series.tickers[i]},
             {"mean_return", tally.episodes > 0 ? tally.ticker_return[i] / static_cast<double>(tally.episodes) : 0.0},
             {"directional_accuracy",
              tally.ticker_decided[i] > 0 ? tally.ticker_correct[i] / tally.ticker_decided[i] : 0.5}});
    }
    for (const auto& [name, acc] : sector) {
        req.sector_returns[name] = acc.first / acc.second / static_cast<double>(std::max<std::size_t>(1, tally.episodes));
    }
    for (const auto& [planner, scores] : tally.planner_scores) {
        req.episode_summaries.push_back({{"planner", planner}, {"mean_score", mean_of(scores)}});
    }
    // Mean pairwise correlation of the window's bar returns.
    std::vector<std::vector<double>> rets(series.num_tickers());
    for (std::size_t i = 0; i < series.num_tickers(); ++i) {
        for (std::size_t t = env.decision_bar(first_episode); t < end_bar; ++t) {
            rets[i].push_back(series.bar_return(i, t));
        }
    }
    const auto corr = toolkit::correlation_matrix(rets);
    double sum = 0.0;
    int pairs = 0;
    for (std::size_t a = 0; a < corr.size(); ++a) {
        for (std::size_t b = a + 1; b < corr.size(); ++b) {
            sum += corr[a][b];
            ++pairs;
        }
    }
    req.mean_cross_correlation = pairs > 0 ? sum / pairs : 0.0;
    const std::size_t keep = std::min<std::size_t>(3, state.insights.size());
    req.prior_insights.assign(state.insights.end() - static_cast<std::ptrdiff_t>(keep), state.insights.end());
    return req;
}

}  // namespace

std::span<const market::Bar> MarketView::window(std::size_t ticker, std::size_t end, std::size_t length) const {
    if (end > decision_bar_) {
        ++violations_;
        throw LookAheadViolation("read of bar " + std::to_string(end) + " while deciding at bar " +
                                 std::to_string(decision_bar_));
    }
    const auto& bars = series_->bars.at(ticker);
    if (end >= bars.size()) {
        throw ContractViolation("bar index past the end of the series");
    }
    const std::size_t start = end + 1 > length ? end + 1 - length : 0;
    return std::span<const market::Bar>(bars).subspan(start, end + 1 - start);
}

market::PriceSeries load_series(const RunConfig& config, std::uint64_t seed) {
    if (!config.data_csv.empty()) {
        if (!std::filesystem::exists(config.data_csv)) {
            throw ConfigError("data file not found: " + config.data_csv);
        }
        return market::load_csv(config.data_csv);
    }
    return market::synth_generate(market::planted_market_config(config.history), seed);
}

Environment build_environment(const RunConfig& config, std::uint64_t seed, const market::PriceSeries* preloaded) {
    config.validate();
    Environment env;
    env.config = config;
    env.seed = seed;
    env.series = preloaded ? *preloaded : load_series(config, seed);
    const std::size_t n = env.series.num_tickers();
    if (n == 0) {
        throw ConfigError("market data has no tickers");
    }
    const std::size_t needed = config.history + config.episodes() + 1;
    if (env.series.num_bars() < needed) {
        throw ConfigError("split needs " + std::to_string(needed) + " bars (history + episodes + 1) but the data has " +
                          std::to_string(env.series.num_bars()));
    }
    env.static_data = load_static(config.static_dir, env.series.tickers);
    if (config.data_csv.empty()) {
        env.regime_path = market::planted_market_config(config.history).regime_path();
    }

    MarketView view(env.series);
    const std::size_t episodes = config.episodes();
    env.tools.resize(episodes);
    env.outcome_returns.resize(episodes);
    env.phi.resize(episodes);
    for (std::size_t e = 0; e < episodes; ++e) {
        const std::size_t t = env.decision_bar(e);
        view.set_decision_bar(t);
        std::vector<std::span<const market::Bar>> universe;
        for (std::size_t i = 0; i < n; ++i) {
            universe.push_back(view.window(i, t, config.tool_window));
        }
        env.tools[e].resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            toolkit::ToolInputs in;
            in.ticker = env.series.tickers[i];
            in.target = i;
            in.universe = universe;
            auto it = env.static_data.find(in.ticker);
            in.static_data = it == env.static_data.end() ? nullptr : &it->second;
            env.tools[e][i] = toolkit::run_all(in);
            env.outcome_returns[e].push_back(env.series.bar_return(i, t));
        }
        env.phi[e] = episode_context(env.tools[e], universe, env.static_data, env.series.tickers);
    }
    env.lookahead_violations = view.violations();
    return env;
}

void AgentState::freeze() {
    frozen = true;
    memory_bandit.freeze();
    store.set_read_only(true);
}

void AgentState::reseed(std::uint64_t seed) {
    memory_bandit.reseed(derive_seed(seed, "memory-bandit"));
    tool_rng.seed(derive_seed(seed, "tool-bandit"));
}

Json AgentState::posterior_snapshot() const {
    Json planners_doc = Json::array();
    for (const auto& arm : planner_arms) {
        planners_doc.push_back(arm.snapshot());
    }
    Json tools_doc = Json::array();
    for (const auto& per_ticker : tool_arms) {
        for (const auto& arm : per_ticker) {
            tools_doc.push_back({{"id", arm.id}, {"alpha", arm.alpha}, {"beta", arm.beta}});
        }
    }
    Json pool = Json::array();
    for (const auto& p : policies) {
        pool.push_back(p.to_json());
    }
    Json planner_pool = Json::array();
    for (const auto& p : planners) {
        planner_pool.push_back(p.to_json());
    }
    return {{"memory_bandit", memory_bandit.snapshot()},
            {"planner_arms", planners_doc},
            {"tool_arms", tools_doc},
            {"policies", pool},
            {"planners", planner_pool},
            {"skills", skills.snapshot()}};
}

std::string AgentState::posterior_hash() const { return state_hash(posterior_snapshot()); }

std::size_t AgentState::arm_count() const { return memory_bandit.size(); }

AgentState initial_state(const Environment& env, reflection::CompletionBackend& backend) {
    const RunConfig& cfg = env.config;
    AgentState s;
    s.policies = memory::default_policies();
    s.store = memory::MemoryStore(cfg.memory_capacity);

    std::vector<reflection::PriorRequestArm> request;
    if (cfg.memory) {
        for (const auto& p : s.policies) {
            const bool distilled = !p.tiers.empty() && !p.enables(memory::Tier::episodic);
            request.push_back({p.policy_id,
                               p.format == memory::Format::none ? "retrieval_none"
                               : distilled                      ? "retrieval_distilled"
                                                                : "retrieval_raw",
                               p.to_json().dump()});
        }
    }
    if (cfg.per_tool_selection) {
        for (const auto& info : toolkit::registry()) {
            request.push_back({info.name, info.data_backed ? "data_backed" : "computational", info.description});
        }
    }
    const auto priors = reflection::cold_start_priors(request, backend, cfg.cold_start);
    auto prior_of = [&](const std::string& id) {
        auto it = priors.find(id);
        return it == priors.end() ? reflection::Prior{1.0, 1.0} : it->second;
    };

    std::vector<bandits::BetaArm> arms;
    for (const auto& p : s.policies) {
        const auto [a, b] = prior_of(p.policy_id);
        arms.push_back({p.policy_id, a, b});
    }
    s.memory_bandit = bandits::ThompsonSelector(arms, derive_seed(env.seed, "memory-bandit"));
    s.tool_rng.seed(derive_seed(env.seed, "tool-bandit"));
    for (std::size_t i = 0; i < env.num_tickers(); ++i) {
        std::vector<bandits::BetaArm> per_ticker;
        for (const auto& name : tool_names()) {
            const auto [a, b] = prior_of(name);
            per_ticker.push_back({env.series.tickers[i] + "/" + name, a, b});
        }
        s.tool_arms.push_back(per_ticker);
    }
    if (cfg.planner_evolution) {
        for (auto family : planners::builtin_families()) {
            s.planners.push_back(planners::builtin_planner(family));
            s.planner_arms.emplace_back(s.planners.back().id, bandits::kContextDim);
        }
    } else {
        s.planners.push_back(planners::builtin_planner(planners::Family::sequential));
    }
    return s;
}

Decision decide(const Environment& env, const AgentState& state, std::size_t episode, const Choice& choice,
                bool warm) {
    const RunConfig& cfg = env.config;
    const auto& series = env.series;
    const std::size_t n = env.num_tickers();
    if (episode >= env.tools.size()) {
        throw ContractViolation("episode outside the prepared range");
    }
    const bool use_insight = !warm && cfg.reflection && state.insight.has_value();
    const std::string regime = use_insight ? state.insight->regime : std::string();
    const auto hints = !warm && cfg.skill_extraction ? state.skills.hints() : std::vector<std::vector<std::string>>{};
    const std::optional<reflection::ReflectionInsight> insight =
        use_insight ? state.insight : std::optional<reflection::ReflectionInsight>{};

    Decision d;
    planners::PlannerContext ctx;
    ctx.tickers = series.tickers;
    ctx.insight = insight;
    for (std::size_t i = 0; i < n; ++i) {
        planners::ToolMap tm;
        for (const auto& name : choice.tools.at(i)) {
            tm[name] = env.tools[episode][i][toolkit::tool_index(name)];
        }
        std::map<std::string, memory::ToolEvidence> evidence;
        if (!warm && cfg.memory) {
            memory::MemoryQuery q;
            q.ticker = series.tickers[i];
            q.sector = series.sectors[i];
            q.current_episode = episode;
            q.regime = regime;
            for (const auto& [name, out] : tm) {
                if (out.signal != 0.0) {
                    q.tools.push_back(name);
                }
            }
            const auto rr = memory::retrieve(state.store, state.policies.at(choice.policy), q);
            d.retrieved_scores.insert(d.retrieved_scores.end(), rr.scores.begin(), rr.scores.end());
            std::string text = rr.context;
            for (const auto& rule : memory::procedural_rules_for(state.store, q.ticker)) {
                text += rule + "\n";
                ctx.procedural_rules.push_back(rule);
            }
            ctx.retrieved_memory += rr.context;
            evidence = memory::tally_evidence(text, q.ticker, regime);
        }
        ctx.multipliers.push_back(planners::tool_multipliers(evidence, insight, hints));
        ctx.tool_outputs.push_back(std::move(tm));
    }
    d.allocation = planners::plan(state.planners.at(choice.planner), ctx, cfg.allocation);
    d.tool_maps = ctx.tool_outputs;
    for (std::size_t i = 0; i < n; ++i) {
        d.portfolio_return += d.allocation.weights[i] * env.outcome_returns[episode][i];
    }
    d.score = market::outcome_score(d.portfolio_return, cfg.outcome_scale);
    return d;
}

Json EpisodeLog::to_json() const {
    Json doc = {{"episode", episode}, {"phase", phase},   {"policy", policy},       {"planner", planner},
                {"return", portfolio_return}, {"score", score}, {"reward", reward}, {"retrieved", retrieved}};
    if (credit) {
        doc["credit"] = credit->to_json();
    }
    return doc;
}

TrainedState train(const Environment& env, reflection::CompletionBackend& backend) {
    const RunConfig& cfg = env.config;
    const auto& series = env.series;
    const std::size_t n = env.num_tickers();
    const std::size_t warm_up = cfg.warm_up;
    const double equal_share = cfg.allocation.risk_budget / static_cast<double>(n);

    TrainedState out;
    AgentState& state = out.state;
    state = initial_state(env, backend);
    const std::size_t default_policy = policy_index(state, cfg.default_policy);

    WindowTally tally;
    tally.reset(n);
    reflection::FailureStreaks streaks;
    std::vector<std::array<double, 8>> coalition_rewards;
    credit::CreditVector shapley;

    for (std::size_t e = 0; e < cfg.train; ++e) {
        const bool warm = e < warm_up;
        Choice ch;
        if (warm) {
            ch.policy = default_policy;
            ch.planner = 0;
            ch.tools.assign(n, tool_names());
        } else {
            ch = frozen_choice(env, state, e);
            if (!cfg.memory) {
                ch.policy = default_policy;
            }
        }
        const Decision d = decide(env, state, e, ch, warm);
        const double r_tilde = credit::uniform_reward(d.score);

        // Directional accounting against each ticker's excess over the equal-weight universe.
        const double universe = mean_of(env.outcome_returns[e]);
        credit::EpisodeOutcome outcome;
        outcome.score = d.score;
        std::vector<std::vector<std::string>> hits(n), misses(n);
        double active = 0.0;
        bool warning_ignored = false;
        for (std::size_t i = 0; i < n; ++i) {
            const double x = env.outcome_returns[e][i] - universe;
            active += (d.allocation.weights[i] - equal_share) * x;
            for (const auto& [name, o] : d.tool_maps[i]) {
                tally.hits.record(name, series.tickers[i], o.signal, x);
                auto& count = outcome.per_tool_hits[name];
                ++count.total;
                const int h = toolkit::hit_outcome(o.signal, x);
                if (h > 0) {
                    ++count.correct;
                    hits[i].push_back(name);
                } else if (h < 0) {
                    ++count.incorrect;
                    misses[i].push_back(name);
                }
                if (toolkit::registry()[toolkit::tool_index(name)].group == toolkit::Group::risk && o.signal <= -0.3 &&
                    d.allocation.weights[i] > equal_share && d.portfolio_return < 0.0) {
                    warning_ignored = true;
                }
            }
            const int tilt = sign(d.allocation.weights[i] - equal_share);
            if (tilt != 0 && x != 0.0) {
                tally.ticker_decided[i] += 1.0;
                tally.ticker_correct[i] += tilt == sign(x) ? 1.0 : 0.0;
            }
            tally.ticker_return[i] += env.outcome_returns[e][i];
        }
        ++tally.episodes;
        outcome.steps_completed = d.allocation.fell_back ? 0.5 : 1.0;
        outcome.prediction_correct = active > 0.0;
        if (d.retrieved_scores.empty()) {
            outcome.memory_usefulness = 0.5;
        } else {
            const auto useful = std::count_if(d.retrieved_scores.begin(), d.retrieved_scores.end(),
                                              [](double s) { return s >= 0.5; });
            outcome.memory_usefulness =
                d.score > 0.0 ? static_cast<double>(useful) / static_cast<double>(d.retrieved_scores.size()) : 0.0;
        }

        // Credit.
        std::optional<credit::CreditVector> g;
        if (cfg.credit == credit::Method::fcc) {
            std::array<double, 8> scores{};
            for (unsigned mask = 0; mask <= credit::kGrandCoalition; ++mask) {
                if (mask == credit::kGrandCoalition) {
                    scores[mask] = d.score;
                    continue;
                }
                Choice alt;
                alt.policy = (mask & credit::bit(credit::Module::memory)) ? ch.policy : default_policy;
                alt.planner = (mask & credit::bit(credit::Module::planner)) ? ch.planner : 0;
                alt.tools = (mask & credit::bit(credit::Module::tools)) ? ch.tools
                                                                         : std::vector<std::vector<std::string>>(n, tool_names());
                scores[mask] = decide(env, state, e, alt, warm).score;
            }
            std::array<double, 8> rewards{};
            for (unsigned mask = 0; mask < 8; ++mask) {
                rewards[mask] = credit::uniform_reward(scores[mask]);
            }
            coalition_rewards.push_back(rewards);
            const auto counter =
                credit::counterfactual_credit([&](unsigned mask) -> std::optional<double> { return scores[mask]; });
            g = credit::fcc_combine(credit::structural_credit(outcome), counter, shapley);
        } else if (cfg.credit == credit::Method::llm_fcc) {
            credit::LlmFccContext ctx;
            ctx.warning_ignored = warning_ignored;
            ctx.summary = "episode " + std::to_string(e);
            g = credit::llm_fcc_credit(outcome, ctx, backend);
        }
        auto blended = [&](double r, credit::Module m) { return g ? credit::module_reward(r, (*g)[m], cfg.lambda) : r; };

        EpisodeLog log = make_log(env, state, e, warm ? "warm_up" : "train", ch, d);
        log.reward = blended(r_tilde, credit::Module::memory);
        log.credit = g;

        if (!warm) {
            if (cfg.memory) {
                state.memory_bandit.update(ch.policy, log.reward);
                ++out.posterior_updates;
            }
            if (cfg.planner_evolution) {
                state.planner_arms[ch.planner].update(env.phi[e], blended(r_tilde, credit::Module::planner));
                ++out.posterior_updates;
            }
            if (cfg.per_tool_selection) {
                for (std::size_t i = 0; i < n; ++i) {
                    for (const auto& [name, o] : d.tool_maps[i]) {
                        const int h = toolkit::hit_outcome(o.signal, env.outcome_returns[e][i] - universe);
                        const double r = h > 0 ? 1.0 : (h < 0 ? 0.0 : 0.5);
                        auto& arm = state.tool_arms[i][toolkit::tool_index(name)];
                        arm = bandits::ts_update(arm, blended(r, credit::Module::tools));
                        ++out.posterior_updates;
                    }
                }
            }
        }

        if (cfg.memory) {
            const std::string regime = cfg.reflection && state.insight ? state.insight->regime : std::string();
            for (std::size_t i = 0; i < n; ++i) {
                memory::EpisodeRecord rec{e, series.tickers[i], series.sectors[i], regime, d.score, hits[i], misses[i]};
                memory::write_episodic(state.store, rec, cfg.write_threshold);
            }
        }

        if (cfg.skill_extraction) {
            for (std::size_t i = 0; i < n; ++i) {
                const int predicted = sign(d.allocation.scores[i]);
                if (predicted == 0) {
                    continue;
                }
                std::vector<std::string> support;
                for (const auto& [name, o] : d.tool_maps[i]) {
                    if (sign(o.signal) == predicted) {
                        support.push_back(name);
                    }
                }
                state.skills.observe(support, sign(env.outcome_returns[e][i] - universe) == predicted);
            }
        }

        tally.planner_scores[log.planner].push_back(d.score);
        out.log.push_back(log);

        if (cfg.credit == credit::Method::fcc && (e + 1) % cfg.shapley_every == 0) {
            credit::CharacteristicFunction v;
            const std::size_t block = std::min(cfg.shapley_every, coalition_rewards.size());
            for (unsigned mask = 0; mask < 8; ++mask) {
                double sum = 0.0;
                for (std::size_t k = coalition_rewards.size() - block; k < coalition_rewards.size(); ++k) {
                    sum += coalition_rewards[k][mask];
                }
                v.set(mask, sum / static_cast<double>(block));
            }
            shapley = credit::shapley_credit(v);
        }

        if ((e + 1) % cfg.slow_window == 0) {
            const std::size_t j = (e + 1) / cfg.slow_window;
            if (cfg.reflection) {
                const auto request = reflection_request(env, state, tally, j, e);
                state.insight = reflection::reflect(request, backend, state.insight);
                state.insights.push_back(*state.insight);
            }
            if (cfg.memory && (e + 1) % cfg.distill_every == 0) {
                std::vector<memory::DistillObservation> obs;
                for (const auto& [key, count] : tally.hits.all()) {
                    const std::size_t i = series.ticker_index(key.second);
                    obs.push_back({key.first, key.second, series.sectors[i], count.correct, count.incorrect});
                }
                const std::string regime = state.insight ? state.insight->regime : std::string();
                out.semantic_written += memory::distill_semantic(state.store, obs, backend, e, regime).size();
                out.procedural_written += memory::promote_procedural(state.store, e).size();
            }
            if (!warm) {
                if (cfg.reflection && cfg.memory) {
                    ++out.evolution_checks;
                    if (auto p = reflection::evolve_memory_policy(state.memory_bandit, state.policies, state.insight,
                                                                  backend, j, cfg.evolution)) {
                        state.policies.push_back(*p);
                        state.memory_bandit.add_arm({p->policy_id, 1.0, 1.0});
                        ++out.evolved_policies;
                    }
                }
                if (cfg.planner_evolution) {
                    ++out.evolution_checks;
                    for (const auto& [planner, scores] : tally.planner_scores) {
                        streaks.record(planner, mean_of(scores));
                    }
                    if (auto p = reflection::planner_evolution_check(streaks, true, backend, out.evolved_planners,
                                                                     cfg.planner_streak)) {
                        state.planners.push_back(*p);
                        state.planner_arms.emplace_back(p->id, bandits::kContextDim);
                        ++out.evolved_planners;
                    }
                }
            }
            tally.reset(n);
            out.checkpoints.push_back({j, e, state});
        }
        out.arm_counts.push_back(state.arm_count());
    }
    return out;
}

FrozenSnapshot validate_and_freeze(const Environment& env, const TrainedState& trained) {
    const RunConfig& cfg = env.config;
    if (trained.checkpoints.empty()) {
        throw ConfigError("no checkpoints to validate");
    }
    FrozenSnapshot snap;
    for (const auto& cp : trained.checkpoints) {
        AgentState st = cp.state;
        st.freeze();
        st.reseed(derive_seed(env.seed, "validate"));
        const std::string posterior_before = st.posterior_hash();
        const std::string memory_before = st.store.hash();
        double sum = 0.0;
        for (std::size_t e = cfg.train; e < cfg.train + cfg.val; ++e) {
            const Choice ch = frozen_choice(env, st, e);
            sum += decide(env, st, e, ch, false).score;
        }
        if (st.posterior_hash() != posterior_before || st.store.hash() != memory_before) {
            throw FrozenStateViolation("validation scoring changed frozen state");
        }
        snap.validation_means.push_back(sum / static_cast<double>(cfg.val));
    }
    snap.selected = static_cast<std::size_t>(
        std::max_element(snap.validation_means.begin(), snap.validation_means.end()) - snap.validation_means.begin());
    snap.state = trained.checkpoints[snap.selected].state;
    snap.state.freeze();
    return snap;
}

TestOutcome test_frozen(const Environment& env, const FrozenSnapshot& snapshot) {
    const RunConfig& cfg = env.config;
    if (!snapshot.state.frozen) {
        throw ContractViolation("test needs a frozen snapshot");
    }
    TestOutcome out;
    AgentState st = snapshot.state;
    st.reseed(derive_seed(env.seed, "test"));
    out.posterior_hash_before = st.posterior_hash();
    out.memory_hash_before = st.store.hash();
    for (std::size_t e = cfg.train + cfg.val; e < cfg.episodes(); ++e) {
        const Choice ch = frozen_choice(env, st, e);
        const Decision d = decide(env, st, e, ch, false);
        out.returns.push_back(d.portfolio_return);
        out.weights.push_back(d.allocation.weights);
        out.log.push_back(make_log(env, st, e, "test", ch, d));
    }
    out.posterior_hash_after = st.posterior_hash();
    out.memory_hash_after = st.store.hash();
    out.metrics = market::compute_metrics(market::apply_costs(out.returns, out.weights, cfg.cost_bp));
    for (double c : {0.0, 5.0, 10.0, 20.0}) {
        out.cost_grid[std::to_string(static_cast<int>(c))] =
            market::compute_metrics(market::apply_costs(out.returns, out.weights, c));
    }
    return out;
}

Json RunResult::to_json() const {
    Json train_log = Json::array();
    for (const auto& l : trained.log) {
        train_log.push_back(l.to_json());
    }
    Json test_log = Json::array();
    for (const auto& l : test.log) {
        test_log.push_back(l.to_json());
    }
    Json insights = Json::array();
    for (const auto& i : trained.state.insights) {
        insights.push_back(i.to_json());
    }
    Json checkpoints = Json::array();
    for (std::size_t k = 0; k < trained.checkpoints.size(); ++k) {
        checkpoints.push_back({{"window", trained.checkpoints[k].window},
                               {"episode", trained.checkpoints[k].episode},
                               {"validation_mean", frozen.validation_means.at(k)}});
    }
    Json grid = Json::object();
    for (const auto& [c, m] : test.cost_grid) {
        grid[c] = m.to_json();
    }
    return {
        {"config", config},
        {"seed", seed},
        {"data_digest", data_digest},
        {"train",
         {{"episodes", train_log},
          {"arm_counts", trained.arm_counts},
          {"posterior_updates", trained.posterior_updates},
          {"evolution_checks", trained.evolution_checks},
          {"evolved_policies", trained.evolved_policies},
          {"evolved_planners", trained.evolved_planners},
          {"semantic_written", trained.semantic_written},
          {"procedural_written", trained.procedural_written},
          {"insights", insights}}},
        {"validation", {{"checkpoints", checkpoints}, {"selected", frozen.selected}}},
        {"frozen_state", frozen.state.posterior_snapshot()},
        {"test",
         {{"episodes", test_log},
          {"returns", test.returns},
          {"metrics", test.metrics.to_json()},
          {"cost_grid", grid},
          {"posterior_hash_before", test.posterior_hash_before},
          {"posterior_hash_after", test.posterior_hash_after},
          {"memory_hash_before", test.memory_hash_before},
          {"memory_hash_after", test.memory_hash_after}}},
        {"backend_calls", backend_calls},
        {"lookahead_violations", lookahead_violations},
    };
}

RunResult run_experiment(const RunConfig& config, std::uint64_t seed, const market::PriceSeries* preloaded) {
    RunConfig cfg = config;
    cfg.seed = seed;
    const Environment env = build_environment(cfg, seed, preloaded);
    auto backend = reflection::make_backend(cfg.backend);
    RunResult result;
    result.config = cfg.to_json();
    result.seed = seed;
    result.data_digest = env.series.digest();
    result.trained = train(env, *backend);
    result.frozen = validate_and_freeze(env, result.trained);
    result.test = test_frozen(env, result.frozen);
    result.backend_calls = backend->calls();
    result.lookahead_violations = env.lookahead_violations;
    return result;
}

Json Aggregate::to_json() const {
    Json m = Json::object();
    for (const auto& [name, agg] : metrics) {
        m[name] = {{"mean", agg.mean}, {"std", agg.std}};
    }
    return {{"seeds", seeds}, {"metrics", m}, {"single_seed", single_seed}};
}

Aggregate aggregate(std::span<const market::MetricsReport> reports, std::span<const std::uint64_t> seeds) {
    if (reports.empty()) {
        throw ConfigError("aggregate needs at least one run");
    }
    Aggregate agg;
    agg.seeds.assign(seeds.begin(), seeds.end());
    agg.single_seed = reports.size() == 1;
    for (const auto& name : market::MetricsReport::metric_names()) {
        std::vector<double> values;
        for (const auto& r : reports) {
            values.push_back(r.get(name));
        }
        agg.metrics[name] = {mean_of(values), sample_sd(values)};
    }
    return agg;
}

std::vector<RunResult> run_seeds(const RunConfig& config, std::span<const std::uint64_t> seeds) {
    if (seeds.empty()) {
        throw ConfigError("run_seeds needs at least one seed");
    }
    // Seeds share nothing, so each runs on its own worker.
    std::vector<std::future<RunResult>> jobs;
    for (std::uint64_t seed : seeds) {
        jobs.push_back(std::async(std::launch::async, [&config, seed] { return run_experiment(config, seed); }));
    }
    std::vector<RunResult> out;
    for (auto& job : jobs) {
        out.push_back(job.get());
    }
    return out;
}

std::vector<Variant> ablation_variants(const RunConfig& base) {
    std::vector<Variant> v;
    auto add = [&](const std::string& name, auto change) {
        RunConfig c = base;
        change(c);
        v.push_back({name, c});
    };
    add("- warm-up", [](RunConfig& c) { c.warm_up = 0; });
    add("- reflection (= +Memory)", [](RunConfig& c) { c.reflection = false; });
    add("- memory", [](RunConfig& c) { c.memory = false; });
    add("+ cold-start init", [](RunConfig& c) { c.cold_start = true; });
    add("+ planner evolution", [](RunConfig& c) { c.planner_evolution = true; });
    add("+ per-tool selection", [](RunConfig& c) { c.per_tool_selection = true; });
    add("+ skill extraction", [](RunConfig& c) { c.skill_extraction = true; });
    add("-> FCC credit", [](RunConfig& c) { c.credit = credit::Method::fcc; });
    add("-> LLM-FCC credit", [](RunConfig& c) { c.credit = credit::Method::llm_fcc; });
    return v;
}

std::vector<std::string> config_diff(const RunConfig& a, const RunConfig& b) {
    const Json fa = a.to_json().flatten();
    const Json fb = b.to_json().flatten();
    std::vector<std::string> diff;
    for (const auto& [key, value] : fa.items()) {
        if (!fb.contains(key) || fb[key] != value) {
            diff.push_back(key);
        }
    }
    for (const auto& [key, value] : fb.items()) {
        if (!fa.contains(key)) {
            diff.push_back(key);
        }
    }
    return diff;
}

Json AblationTable::to_json() const {
    Json rows_doc = Json::array();
    for (const auto& r : rows) {
        rows_doc.push_back({{"configuration", r.variant},
                            {"sharpe", r.sharpe},
                            {"sortino", r.sortino},
                            {"delta_sharpe", r.delta_sharpe},
                            {"sharpe_std", r.sharpe_std}});
    }
    return {{"rows", rows_doc}};
}

std::string AblationTable::to_csv() const {
    auto num = [](double x) {
        char buffer[40];
        std::snprintf(buffer, sizeof(buffer), "%.12g", canonical_number(x));
        return std::string(buffer);
    };
    std::string out = "configuration,sharpe,sortino,delta_sharpe,sharpe_std\n";
    for (const auto& r : rows) {
        out += "\"" + r.variant + "\"," + num(r.sharpe) + "," + num(r.sortino) + "," + num(r.delta_sharpe) + "," +
               num(r.sharpe_std) + "\n";
    }
    return out;
}

AblationTable run_ablation(const RunConfig& base, std::span<const std::uint64_t> seeds) {
    std::vector<Variant> all = {{"AEL", base}};
    for (auto& v : ablation_variants(base)) {
        all.push_back(std::move(v));
    }
    AblationTable table;
    double base_sharpe = 0.0;
    for (const auto& v : all) {
        auto results = run_seeds(v.config, seeds);
        std::vector<market::MetricsReport> reports;
        for (const auto& r : results) {
            reports.push_back(r.test.metrics);
        }
        const auto agg = aggregate(reports, seeds);
        AblationRow row;
        row.variant = v.name;
        row.sharpe = agg.metrics.at("sharpe").mean;
        row.sortino = agg.metrics.at("sortino").mean;
        row.sharpe_std = agg.metrics.at("sharpe").std;
        if (table.rows.empty()) {
            base_sharpe = row.sharpe;
        }
        row.delta_sharpe = row.sharpe - base_sharpe;
        table.rows.push_back(row);
        table.results.push_back(std::move(results));
    }
    return table;
}

std::vector<BaselineResult> run_baselines(const Environment& env) {
    const RunConfig& cfg = env.config;
    std::vector<BaselineResult> out;
    for (auto kind : planners::all_baselines()) {
        BaselineResult res;
        res.name = planners::baseline_name(kind);
        std::vector<std::vector<double>> weights;
        for (std::size_t e = cfg.train + cfg.val; e < cfg.episodes(); ++e) {
            const std::size_t t = env.decision_bar(e);
            std::vector<std::vector<double>> closes;
            for (std::size_t i = 0; i < env.num_tickers(); ++i) {
                std::vector<double> c;
                for (std::size_t b = t + 1 > cfg.tool_window ? t + 1 - cfg.tool_window : 0; b <= t; ++b) {
                    c.push_back(env.series.bars[i][b].close);
                }
                closes.push_back(std::move(c));
            }
            const auto w = planners::baseline_allocate(kind, closes);
            double r = 0.0;
            for (std::size_t i = 0; i < w.size(); ++i) {
                r += w[i] * env.outcome_returns[e][i];
            }
            res.returns.push_back(r);
            weights.push_back(w);
        }
        res.metrics = market::compute_metrics(market::apply_costs(res.returns, weights, cfg.cost_bp));
        out.push_back(std::move(res));
    }
    return out;
}

}  // namespace ael::harness
