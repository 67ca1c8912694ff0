#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ael/canonical.hpp"

namespace ael::market {

inline constexpr double kBarsPerYear = 1008.0;  // 252 trading days x 4 hourly bars

struct Bar {
    std::int64_t timestamp = 0;  // epoch seconds, UTC
    double open = 0.0;
    double high = 0.0;
    double low = 0.0;
    double close = 0.0;
    double volume = 0.0;
};

// Aligned OHLCV bars: bars[i][t] is ticker i at timestamps[t].
struct PriceSeries {
    std::vector<std::string> tickers;
    std::vector<std::string> sectors;
    std::vector<std::int64_t> timestamps;
    std::vector<std::vector<Bar>> bars;

    std::size_t num_tickers() const { return tickers.size(); }
    std::size_t num_bars() const { return timestamps.size(); }
    std::size_t ticker_index(const std::string& ticker) const;

    std::vector<double> closes(std::size_t ticker) const;
    // close[t+1] / close[t] - 1
    double bar_return(std::size_t ticker, std::size_t t) const;

    // Content digest, used in run manifests.
    std::string digest() const;
};

std::string format_timestamp(std::int64_t epoch_seconds);
// Accepts YYYY-MM-DDTHH:MM:SSZ (or +00:00). Throws ParseError.
std::int64_t parse_timestamp(const std::string& text);

// Header must be exactly timestamp,ticker,open,high,low,close,volume.
PriceSeries load_csv(const std::string& path);
void write_csv(const PriceSeries& series, const std::string& path);

struct RegimeParams {
    double drift = 0.0;       // market log drift per bar
    double vol = 0.0;         // market log vol per bar
    double dispersion = 0.0;  // std of per-ticker drift drawn once per segment
    double reversion = 0.0;   // pull per bar toward the segment's opening log price
};

struct TickerSpec {
    std::string ticker;
    std::string sector;
    double beta = 1.0;
    double idio_vol = 0.0;
};

struct Segment {
    std::string regime;
    std::size_t bars = 0;
};

struct SynthConfig {
    std::vector<TickerSpec> tickers;
    std::vector<Segment> segments;
    std::map<std::string, RegimeParams> regimes;
    std::int64_t start_timestamp = 1704117600;  // 2024-01-01T14:00:00Z
    double start_price = 100.0;

    std::size_t total_bars() const;
    // Regime label of every bar, in order.
    std::vector<std::string> regime_path() const;
};

// Ten tickers over five sectors with a bull/flat/bear schedule in which
// trend, reversal and risk signals each pay off in a different regime.
SynthConfig planted_market_config(std::size_t history_bars = 40);

PriceSeries synth_generate(const SynthConfig& config, std::uint64_t seed);

struct PortfolioState {
    double equity = 1.0;
    std::vector<std::vector<double>> weight_history;
    std::vector<double> returns;
};

// r = sum_i w_i r_i, cash earns zero; equity *= 1 + r.
double step(PortfolioState& state, const std::vector<double>& weights,
            std::span<const double> next_bar_returns);

double outcome_score(double portfolio_return, double scale = 0.01);

// sum_i |w_i - prev_i|; a missing previous vector means all cash.
double turnover(std::span<const double> prev, std::span<const double> next);

// r_adj[t] = r[t] - cost_bp / 1e4 * turnover(w[t-1], w[t]).
std::vector<double> apply_costs(std::span<const double> returns,
                                const std::vector<std::vector<double>>& weight_history,
                                double cost_bp);

struct MetricsReport {
    double sharpe = 0.0;
    double sortino = 0.0;
    double calmar = 0.0;
    double return_pct = 0.0;
    double max_dd_pct = 0.0;
    double win_rate = 0.0;
    double tail_ratio = 0.0;
    // Names of metrics whose denominator vanished; their value is reported as 0.
    std::vector<std::string> undefined;

    bool is_undefined(const std::string& metric) const;
    Json to_json() const;
    static const std::vector<std::string>& metric_names();
    double get(const std::string& metric) const;
};

// Linear interpolation between order statistics (sorted input, p in [0, 1]).
double percentile(std::span<const double> sorted, double p);

// Peak-to-trough drawdown of the compounded equity curve, as a fraction <= 0.
double max_drawdown(std::span<const double> returns);

MetricsReport compute_metrics(std::span<const double> returns);

}  // namespace ael::market
