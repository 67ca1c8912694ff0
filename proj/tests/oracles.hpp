#pragma once

// Reference implementations written straight from the formulas, kept apart
// from the library code they check.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "ael/memory.hpp"

namespace oracle {

// ---- metrics ------------------------------------------------------------------

struct Metrics {
    double sharpe, sortino, calmar, return_pct, max_dd_pct, win_rate, tail_ratio;
};

inline double lerp_percentile(std::vector<double> xs, double p) {
    std::sort(xs.begin(), xs.end());
    const double pos = p * static_cast<double>(xs.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = static_cast<std::size_t>(std::ceil(pos));
    return xs[lo] + (pos - static_cast<double>(lo)) * (xs[hi] - xs[lo]);
}

// Annualization 1008 (four bars a day); sample std; downside deviation
// over all bars with positive parts zeroed; drawdown on compounded equity;
// tail ratio uses the upper percentile as a gain, so it is floored at 0.
inline Metrics metrics(const std::vector<double>& r) {
    const double n = static_cast<double>(r.size());
    double sum = 0.0;
    for (double x : r) sum += x;
    const double mean = sum / n;
    double ss = 0.0;
    for (double x : r) ss += (x - mean) * (x - mean);
    const double sd = r.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    double down = 0.0;
    for (double x : r) down += std::min(x, 0.0) * std::min(x, 0.0);
    const double dd = std::sqrt(down / n);

    // Every (peak, trough) pair on the equity curve, starting from 1.
    std::vector<double> curve = {1.0};
    for (double x : r) curve.push_back(curve.back() * (1.0 + x));
    double worst = 0.0;
    for (std::size_t j = 0; j < curve.size(); ++j) {
        for (std::size_t i = 0; i <= j; ++i) {
            worst = std::min(worst, curve[j] / curve[i] - 1.0);
        }
    }
    const double total = curve.back() - 1.0;
    const double ann_return = mean * 1008.0;

    Metrics m{};
    m.sharpe = sd > 0 ? mean / sd * std::sqrt(1008.0) : 0.0;
    m.sortino = dd > 0 ? mean / dd * std::sqrt(1008.0) : 0.0;
    m.calmar = worst < 0 ? ann_return / std::abs(worst) : 0.0;
    m.return_pct = 100.0 * total;
    m.max_dd_pct = 100.0 * worst;
    int wins = 0;
    for (double x : r) wins += x > 0 ? 1 : 0;
    m.win_rate = wins / n;
    const double p95 = lerp_percentile(r, 0.95);
    const double p5 = lerp_percentile(r, 0.05);
    m.tail_ratio = p5 != 0.0 ? std::max(p95, 0.0) / std::abs(p5) : 0.0;
    return m;
}

// ---- Shapley by permutation enumeration -------------------------------------------

inline std::array<double, 3> shapley(const std::array<double, 8>& v) {
    std::array<int, 3> order = {0, 1, 2};
    std::array<double, 3> phi = {0, 0, 0};
    int count = 0;
    do {
        unsigned mask = 0;
        for (int player : order) {
            const unsigned with = mask | (1u << player);
            phi[player] += v[with] - v[mask];
            mask = with;
        }
        ++count;
    } while (std::next_permutation(order.begin(), order.end()));
    for (double& x : phi) x /= count;
    return phi;
}

// ---- memory relevance -----------------------------------------------------------------

inline double match(const ael::memory::MemoryQuery& q, const ael::memory::MemoryEntry& e) {
    double f = 0.0;
    if (!q.ticker.empty() && q.ticker == e.ticker) f += 2.0;
    if (!q.sector.empty() && q.sector == e.sector) f += 1.0;
    for (const auto& t : e.tools_used) {
        if (std::count(q.tools.begin(), q.tools.end(), t)) f += 0.5;
    }
    if (!q.regime.empty() && q.regime == e.regime) f += 0.5;
    return f > 0.0 ? f : 0.1;
}

inline double relevance(const ael::memory::MemoryQuery& q, const ael::memory::MemoryEntry& e) {
    static const double boost[3] = {1.0, 1.2, 1.5};
    const double delta = static_cast<double>(q.current_episode - e.created_at);
    return match(q, e) * (0.5 + 0.5 * e.quality) * (0.3 + 0.7 * std::exp(-0.01 * delta)) *
           boost[static_cast<int>(e.tier)];
}

// Score every admissible entry, sort descending (ties by id), keep k.
inline std::vector<std::string> top_k(const ael::memory::MemoryStore& store, const ael::memory::RetrievalPolicy& p,
                                      const ael::memory::MemoryQuery& q) {
    std::vector<std::pair<double, std::string>> all;
    for (auto t : p.tiers) {
        for (const auto& e : store.tier(t)) {
            if (e.created_at <= q.current_episode && e.quality >= p.quality_threshold) {
                all.emplace_back(relevance(q, e), e.entry_id);
            }
        }
    }
    std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
        return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    std::vector<std::string> ids;
    for (std::size_t k = 0; k < std::min(p.top_k, all.size()); ++k) {
        ids.push_back(all[k].second);
    }
    return ids;
}

}  // namespace oracle
