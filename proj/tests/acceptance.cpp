// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>

#include <spdlog/spdlog.h>

#include "ael/bandits.hpp"
#include "ael/cli.hpp"
#include "ael/config.hpp"
#include "ael/credit.hpp"
#include "ael/harness.hpp"
#include "ael/market.hpp"
#include "ael/memory.hpp"
#include "ael/rng.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace ael;

namespace {

struct Verdict {
    bool pass = false;
    std::string detail;
};

std::string say(const char* pattern, auto... args) {
    char buffer[512];
    std::snprintf(buffer, sizeof(buffer), pattern, args...);
    return buffer;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

bool close_rel(double a, double b, double tol) { return std::abs(a - b) <= tol * std::max(1.0, std::abs(b)); }

// ---- 1 -------------------------------------------------------------------------------

Verdict bandit_correctness() {
    const auto t0 = std::chrono::steady_clock::now();
    const double p[5] = {0.2, 0.35, 0.5, 0.65, 0.8};
    std::size_t best = 0, late = 0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        std::vector<bandits::BetaArm> arms;
        for (int k = 0; k < 5; ++k) arms.push_back({"arm" + std::to_string(k), 1.0, 1.0});
        bandits::ThompsonSelector sel(arms, seed);
        Rng env(derive_seed(seed, "bernoulli"));
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (int e = 0; e < 2000; ++e) {
            const std::size_t k = sel.select();
            sel.update(k, u(env) < p[k] ? 1.0 : 0.0);
            if (e >= 1500) {
                ++late;
                best += k == 4 ? 1 : 0;
            }
        }
    }
    const double frac = static_cast<double>(best) / static_cast<double>(late);
    const double secs = seconds_since(t0);
    return {frac >= 0.85 && secs < 5.0, say("best-arm fraction %.4f over episodes 1500-2000 x 20 seeds, %.2f s", frac, secs)};
}

// ---- 2 -------------------------------------------------------------------------------

Verdict linucb_learning() {
    constexpr int d = 7;
    Rng rng(7);
    std::normal_distribution<double> n01(0.0, 1.0);
    std::vector<Eigen::VectorXd> theta(3, Eigen::VectorXd(d));
    for (auto& th : theta) {
        for (int i = 0; i < d; ++i) th(i) = n01(rng);
        th.normalize();
    }
    std::vector<bandits::LinUcbArm> arms;
    for (int a = 0; a < 3; ++a) arms.emplace_back("arm" + std::to_string(a), d);
    double got = 0.0, optimal = 0.0, worst_residual = 0.0;
    for (int t = 0; t < 5000; ++t) {
        bandits::ContextVector phi(d);
        for (int i = 0; i < d; ++i) phi(i) = n01(rng);
        phi.normalize();
        double best_mean = -1e9;
        for (const auto& th : theta) best_mean = std::max(best_mean, 0.5 + 0.25 * phi.dot(th));
        const std::size_t k = bandits::linucb_select(arms, phi, 1.0);
        // Planner rewards live in [0, 1]: linear mean in [0.25, 0.75], clipped noisy draw.
        const double mean = 0.5 + 0.25 * phi.dot(theta[k]);
        arms[k].update(phi, std::clamp(mean + 0.1 * n01(rng), 0.0, 1.0));
        for (const auto& arm : arms) {
            const double res = (arm.a() * arm.theta() - arm.b()).norm() / std::max(1.0, arm.b().norm());
            worst_residual = std::max(worst_residual, res);
        }
        if (t >= 4500) {
            got += mean;
            optimal += best_mean;
        }
    }
    got /= 500.0;
    optimal /= 500.0;
    const bool ok = optimal - got <= 0.1 && worst_residual <= 1e-10;
    return {ok, say("final-500 mean %.4f vs optimal %.4f (gap %.4f), max |A theta - b| %.2e", got, optimal,
                    optimal - got, worst_residual)};
}

// ---- 3 -------------------------------------------------------------------------------

Verdict shapley_exactness() {
    using credit::CharacteristicFunction;
    Rng rng(3);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    double worst = 0.0;
    auto shap = [](const std::array<double, 8>& v) {
        CharacteristicFunction f;
        for (unsigned m = 0; m < 8; ++m) f.set(m, v[m]);
        return credit::shapley_credit(f);
    };
    auto track = [&](double a, double b) { worst = std::max(worst, std::abs(a - b)); };
    for (int trial = 0; trial < 100; ++trial) {
        std::array<double, 8> v;
        for (double& x : v) x = u(rng);
        const auto s = shap(v);
        const auto o = oracle::shapley(v);
        track(s.planner, o[0]);
        track(s.tools, o[1]);
        track(s.memory, o[2]);
        track(s.planner + s.tools + s.memory, v[7] - v[0]);

        // Symmetric tools and memory: swap-invariant coalition values.
        auto sym = v;
        sym[4] = sym[2];
        sym[5] = sym[3];
        const auto ss = shap(sym);
        track(ss.tools, ss.memory);

        // Memory as a dummy: constant marginal contribution c.
        auto dummy = v;
        const double c = u(rng);
        for (unsigned m : {0u, 1u, 2u, 3u}) dummy[m | 4u] = dummy[m] + c;
        track(shap(dummy).memory, c);
    }
    return {worst <= 1e-12, say("100 random games: max deviation %.2e (oracle, efficiency, symmetry, dummy)", worst)};
}

// ---- 4 -------------------------------------------------------------------------------

Verdict metric_oracle() {
    Rng rng(4);
    std::normal_distribution<double> z(0.0, 1.0);
    std::uniform_int_distribution<int> len(10, 500);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst = 0.0;
    bool finite = true;
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<double> r(static_cast<std::size_t>(len(rng)));
        const double mu = 0.004 * (u(rng) - 0.5), sd = 0.001 + 0.03 * u(rng);
        for (double& x : r) x = mu + sd * z(rng);
        const auto g = market::compute_metrics(r);
        const auto o = oracle::metrics(r);
        const double got[7] = {g.sharpe, g.sortino, g.calmar, g.return_pct, g.max_dd_pct, g.win_rate, g.tail_ratio};
        const double want[7] = {o.sharpe, o.sortino, o.calmar, o.return_pct, o.max_dd_pct, o.win_rate, o.tail_ratio};
        for (int k = 0; k < 7; ++k) {
            finite = finite && std::isfinite(got[k]);
            worst = std::max(worst, std::abs(got[k] - want[k]) / std::max(1.0, std::abs(want[k])));
        }
    }
    // Degenerate inputs must be flagged, not silently NaN.
    const auto flat = market::compute_metrics(std::vector<double>(50, 0.002));
    const auto rising = market::compute_metrics(std::vector<double>{0.01, 0.02, 0.0, 0.03});
    const bool flagged = flat.is_undefined("sharpe") && std::isfinite(flat.sharpe) && flat.is_undefined("calmar") &&
                         rising.max_dd_pct == 0.0 && rising.is_undefined("calmar") && std::isfinite(rising.calmar);
    return {worst <= 1e-9 && finite && flagged,
            say("1000 series: max relative deviation %.2e; degenerate cases flagged: %s", worst,
                flagged ? "yes" : "no")};
}

// ---- 5 -------------------------------------------------------------------------------

Verdict retrieval_correctness() {
    using namespace memory;
    Rng rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const char* tickers[] = {"ALPH", "BRVO", "CHRL", "DELT", "ECHO"};
    const char* sectors[] = {"tech", "energy", "health"};
    const char* tools[] = {"compute_momentum", "run_dcf_model", "score_risk", "compute_technicals"};
    const char* regimes[] = {"", "bull", "bear", "flat"};
    auto pick = [&](auto& arr) { return arr[static_cast<std::size_t>(u(rng) * std::size(arr)) % std::size(arr)]; };
    auto random_tools = [&] {
        std::vector<std::string> out;
        for (const char* t : tools) {
            if (u(rng) < 0.4) out.push_back(t);
        }
        return out;
    };
    std::size_t mismatches = 0, monotone_failures = 0, checks = 0;
    for (int trial = 0; trial < 200; ++trial) {
        MemoryStore store(500);
        for (int t = 0; t < 3; ++t) {
            const int n = static_cast<int>(u(rng) * 501);
            for (int k = 0; k < n; ++k) {
                MemoryEntry e;
                e.tier = static_cast<Tier>(t);
                e.ticker = pick(tickers);
                e.sector = pick(sectors);
                e.tools_used = random_tools();
                e.content = "entry";
                e.quality = std::round(u(rng) * 20.0) / 20.0;
                e.created_at = static_cast<std::size_t>(u(rng) * 300);
                e.regime = pick(regimes);
                store.insert(e);
            }
        }
        const auto& pool = default_policies();
        RetrievalPolicy policy = pool[static_cast<std::size_t>(u(rng) * pool.size()) % pool.size()];
        if (policy.format == Format::none || policy.format == Format::sliding_window) {
            policy.format = Format::full;
            policy.tiers = {Tier::episodic, Tier::semantic, Tier::procedural};
            policy.top_k = 1 + static_cast<std::size_t>(u(rng) * 8);
        }
        policy.quality_threshold = std::round(u(rng) * 10.0) / 20.0;
        const MemoryQuery q{pick(tickers), pick(sectors), random_tools(), 150 + static_cast<std::size_t>(u(rng) * 200),
                            pick(regimes)};
        std::vector<std::string> ids;
        for (const auto& e : retrieve(store, policy, q).entries) ids.push_back(e.entry_id);
        mismatches += ids != oracle::top_k(store, policy, q) ? 1 : 0;

        // Perturbation pairs on entries from this store.
        for (const auto& e : store.tier(Tier::episodic)) {
            if (e.created_at > q.current_episode || checks % 7 != 0) {
                ++checks;
                continue;
            }
            ++checks;
            const double base = relevance_score(q, e);
            MemoryEntry better = e;
            better.quality = std::min(1.0, e.quality + 0.1);
            MemoryEntry newer = e;
            newer.created_at = std::min(q.current_episode, e.created_at + 5);
            MemoryEntry semantic = e;
            semantic.tier = Tier::semantic;
            MemoryEntry procedural = e;
            procedural.tier = Tier::procedural;
            const bool ok = (better.quality == e.quality || relevance_score(q, better) > base) &&
                            relevance_score(q, newer) >= base &&
                            close_rel(relevance_score(q, semantic), 1.2 * base, 1e-12) &&
                            close_rel(relevance_score(q, procedural), 1.5 * base, 1e-12);
            monotone_failures += ok ? 0 : 1;
        }
    }
    return {mismatches == 0 && monotone_failures == 0,
            say("200 stores: %zu ranking mismatches vs brute force, %zu monotonicity failures", mismatches,
                monotone_failures)};
}

// ---- 6 and 9 share full runs -----------------------------------------------------------

Verdict frozen_integrity(const harness::RunResult& r, const harness::Environment& env) {
    const bool shape = env.num_tickers() == 10 && r.trained.log.size() == 140 && r.test.returns.size() == 28 &&
                       env.config.val == 40;
    const bool hashes = r.test.posterior_hash_before == r.test.posterior_hash_after &&
                        r.test.memory_hash_before == r.test.memory_hash_after;
    const std::size_t violations = r.lookahead_violations + env.lookahead_violations;
    return {shape && hashes && violations == 0,
            say("10 tickers, 140/40/28: posterior hash %s, memory hash %s, look-ahead violations %zu",
                r.test.posterior_hash_before == r.test.posterior_hash_after ? "unchanged" : "CHANGED",
                r.test.memory_hash_before == r.test.memory_hash_after ? "unchanged" : "CHANGED", violations)};
}

bool cost_checks(const harness::RunResult& r, std::string* why) {
    double turnover = 0.0;
    for (std::size_t t = 0; t < r.test.weights.size(); ++t) {
        turnover += market::turnover(t == 0 ? std::vector<double>{} : r.test.weights[t - 1], r.test.weights[t]);
    }
    if (!(turnover > 0.0)) {
        *why = "zero turnover";
        return false;
    }
    const auto& g = r.test.cost_grid;
    if (!(g.at("5").sharpe <= g.at("0").sharpe && g.at("10").sharpe <= g.at("5").sharpe &&
          g.at("20").sharpe <= g.at("10").sharpe)) {
        *why = say("sharpe not monotone for seed %llu", static_cast<unsigned long long>(r.seed));
        return false;
    }
    const auto raw = market::compute_metrics(r.test.returns);
    for (const auto& m : market::MetricsReport::metric_names()) {
        if (g.at("0").get(m) != raw.get(m)) {
            *why = "c = 0 differs from unadjusted " + m;
            return false;
        }
    }
    return true;
}

// ---- 7 and 10 share the ablate output ------------------------------------------------------

Verdict determinism(const fs::path& root) {
    const auto a = root / "run_a", b = root / "run_b", c = root / "ablate";
    const int ra = cli::main({"run", "--seed", "42", "--output", a.string()});
    const int rb = cli::main({"run", "--seed", "42", "--output", b.string()});
    const int rc = cli::main({"ablate", "--seed", "42", "--output", c.string()});
    if (ra != 0 || rb != 0 || rc != 0) return {false, say("cli exit codes %d %d %d", ra, rb, rc)};
    const std::string first = slurp(a / "result_42.json");
    const bool runs = !first.empty() && first == slurp(b / "result_42.json");
    const bool base = first == slurp(c / "ael" / "result_42.json");
    return {runs && base, say("run vs run: %s; run vs ablate base row: %s (%zu bytes)", runs ? "identical" : "DIFFER",
                              base ? "identical" : "DIFFER", first.size())};
}

Verdict ablation_structure(const fs::path& root) {
    const RunConfig base;
    const auto variants = harness::ablation_variants(base);
    const std::vector<std::string> expected = {"- warm-up",          "- reflection (= +Memory)", "- memory",
                                               "+ cold-start init",  "+ planner evolution",      "+ per-tool selection",
                                               "+ skill extraction", "-> FCC credit",            "-> LLM-FCC credit"};
    std::vector<std::string> names;
    std::size_t single = 0;
    for (const auto& v : variants) {
        names.push_back(v.name);
        single += harness::config_diff(base, v.config).size() == 1 ? 1 : 0;
    }
    const bool plus_memory = variants.size() > 1 && variants[1].config.to_json() == preset("+Memory").to_json();
    const auto doc = Json::parse(slurp(root / "ablate" / "ablation.json"));
    std::vector<std::string> emitted;
    for (const auto& row : doc.at("rows")) emitted.push_back(row.at("configuration").get<std::string>());
    std::vector<std::string> with_base = {"AEL"};
    with_base.insert(with_base.end(), expected.begin(), expected.end());
    const bool ok = names == expected && single == 9 && plus_memory && emitted == with_base;
    return {ok, say("%zu variants, %zu single-field, -reflection == +Memory: %s, emitted rows %zu", variants.size(),
                    single, plus_memory ? "yes" : "no", emitted.size())};
}

// ---- 8 ------------------------------------------------------------------------------------

struct ProtocolRuns {
    std::map<std::string, std::vector<harness::RunResult>> by_preset;
    double seconds = 0.0;
};

ProtocolRuns protocol_runs() {
    const auto t0 = std::chrono::steady_clock::now();
    ProtocolRuns out;
    const std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    for (const char* name : {"Stateless", "+Memory", "AEL"}) {
        out.by_preset[name] = harness::run_seeds(preset(name), seeds);
    }
    out.seconds = seconds_since(t0);
    return out;
}

Verdict directional(const ProtocolRuns& runs) {
    const auto& st = runs.by_preset.at("Stateless");
    const auto& mem = runs.by_preset.at("+Memory");
    const auto& ael = runs.by_preset.at("AEL");
    int mem_wins = 0, ael_wins = 0;
    std::string line;
    for (std::size_t k = 0; k < st.size(); ++k) {
        const double s = st[k].test.metrics.sharpe, m = mem[k].test.metrics.sharpe, a = ael[k].test.metrics.sharpe;
        mem_wins += m > s ? 1 : 0;
        ael_wins += a >= m ? 1 : 0;
        line += say(" [%llu: %.2f/%.2f/%.2f]", static_cast<unsigned long long>(st[k].seed), s, m, a);
    }
    std::cout << "    per-seed test Sharpe Stateless/+Memory/AEL:" << line << "\n";
    const bool ok = mem_wins >= 8 && ael_wins >= 7 && runs.seconds < 600.0;
    return {ok, say("+Memory > Stateless in %d/10 seeds, AEL >= +Memory in %d/10 seeds, %.1f s", mem_wins, ael_wins,
                    runs.seconds)};
}

void report(int id, const char* title, const std::function<Verdict()>& check, int& failures) {
    Verdict v;
    try {
        v = check();
    } catch (const std::exception& err) {
        v = {false, std::string("exception: ") + err.what()};
    }
    failures += v.pass ? 0 : 1;
    std::cout << (v.pass ? "PASS" : "FAIL") << "  " << id << ". " << title << ": " << v.detail << std::endl;
}

}  // namespace

int main() {
    spdlog::set_level(spdlog::level::err);
    const fs::path root = fs::temp_directory_path() / "ael_acceptance";
    fs::remove_all(root);
    fs::create_directories(root);

    int failures = 0;
    report(1, "bandit correctness", bandit_correctness, failures);
    report(2, "LinUCB learning", linucb_learning, failures);
    report(3, "Shapley exactness", shapley_exactness, failures);
    report(4, "metric oracle equivalence", metric_oracle, failures);
    report(5, "retrieval correctness", retrieval_correctness, failures);

    std::optional<harness::RunResult> main_run;
    std::optional<harness::Environment> main_env;
    report(6, "frozen-test integrity", [&] {
        const RunConfig cfg;
        main_env = harness::build_environment(cfg, cfg.seed);
        main_run = harness::run_experiment(cfg, cfg.seed);
        return frozen_integrity(*main_run, *main_env);
    }, failures);

    report(7, "end-to-end determinism", [&] { return determinism(root); }, failures);

    std::optional<ProtocolRuns> runs;
    report(8, "directional protocol check", [&] {
        runs = protocol_runs();
        return directional(*runs);
    }, failures);

    report(9, "cost monotonicity", [&] {
        std::vector<const harness::RunResult*> all;
        if (main_run) all.push_back(&*main_run);
        if (runs) {
            for (const auto& [name, rs] : runs->by_preset)
                for (const auto& r : rs) all.push_back(&r);
        }
        if (all.empty()) return Verdict{false, "no runs available"};
        std::string why;
        for (const auto* r : all) {
            if (!cost_checks(*r, &why)) return Verdict{false, why};
        }
        // A priced run applies the same deduction as the grid.
        RunConfig priced;
        priced.cost_bp = 10.0;
        const auto pr = harness::run_experiment(priced, priced.seed);
        const bool same = pr.test.metrics.sharpe == pr.test.cost_grid.at("10").sharpe;
        return Verdict{same, say("%zu runs: Sharpe non-increasing over 0/5/10/20 bp, c = 0 bit-exact; "
                                 "cost_bp = 10 run matches its grid entry: %s",
                                 all.size(), same ? "yes" : "no")};
    }, failures);

    report(10, "ablation grid structure", [&] { return ablation_structure(root); }, failures);

    std::cout << (failures == 0 ? "ALL PASS" : say("%d FAILED", failures)) << std::endl;
    return failures == 0 ? 0 : 1;
}
