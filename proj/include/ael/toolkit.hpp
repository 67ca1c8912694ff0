#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ael/canonical.hpp"
#include "ael/market.hpp"

namespace ael::toolkit {

using market::Bar;

enum class Group { valuation, momentum, sentiment, risk };

std::string group_name(Group group);

struct ToolInfo {
    std::string name;
    std::string category;  // data_retrieval | computation | analysis
    bool data_backed = false;
    Group group = Group::momentum;
    std::string description;
};

inline constexpr std::size_t kNumTools = 12;

// Registry order is fixed; tool indices below refer to it.
const std::vector<ToolInfo>& registry();
std::size_t tool_index(const std::string& name);
bool is_tool(const std::string& name);

struct ToolOutput {
    std::string tool;
    double signal = 0.0;      // [-1, 1], bullish positive
    double confidence = 0.0;  // [0, 1]
    std::map<std::string, double> fields;
    std::string label;  // BUY / SELL / HOLD for the composite, empty otherwise

    Json to_json() const;
    bool operator==(const ToolOutput& other) const = default;
};

ToolOutput neutral_output(const std::string& tool);

struct ToolParams {
    int rsi_period = 14;
    int macd_fast = 12;
    int macd_slow = 26;
    int macd_signal = 9;
    int bollinger_period = 20;
    double bollinger_k = 2.0;
    int dcf_lookback = 20;
    double dcf_growth = 1.0;
    double dcf_scale = 0.2;
    double composite_buy = 0.2;
    double composite_sell = -0.2;
};

// Everything a tool may look at for one ticker at one decision bar. Windows
// hold only bars at or before the decision bar.
struct ToolInputs {
    std::string ticker;
    std::size_t target = 0;
    std::vector<std::span<const Bar>> universe;  // aligned windows, one per ticker
    const Json* static_data = nullptr;           // optional per-ticker document
    ToolParams params;

    std::span<const Bar> window() const { return universe.at(target); }
};

// Dispatches by name. Unknown tool -> ConfigError. The composite is fed the
// other computational and data-backed outputs of the same ticker.
ToolOutput run_tool(const std::string& tool_name, const ToolInputs& inputs);

// Runs the whole registry for one ticker, composite last.
std::vector<ToolOutput> run_all(const ToolInputs& inputs);

// ---- indicator primitives -------------------------------------------------

std::vector<double> closes_of(std::span<const Bar> window);
std::vector<double> simple_returns(std::span<const double> closes);

// Wilder RSI over the whole series; 50 when nothing moved.
double rsi_wilder(std::span<const double> closes, int period);

// EMA seeded with the first value, smoothing 2 / (period + 1).
std::vector<double> ema_series(std::span<const double> values, int period);

struct Macd {
    double macd = 0.0;
    double signal = 0.0;
    double histogram = 0.0;
};
Macd macd(std::span<const double> closes, int fast, int slow, int signal);

struct Bollinger {
    double lower = 0.0;
    double middle = 0.0;
    double upper = 0.0;
    double percent_b = 0.5;
    double width = 0.0;
};
// Population standard deviation over the last `period` closes.
Bollinger bollinger(std::span<const double> closes, int period, double k);

struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
};
LinearFit fit_line(std::span<const double> y);

// Pearson correlation; sets zero_variance and returns 0 when either side is flat.
double pearson(std::span<const double> a, std::span<const double> b, bool* zero_variance = nullptr);

std::vector<std::vector<double>> correlation_matrix(const std::vector<std::vector<double>>& returns);

// Loss quantile at 95%: the m-th worst return with m = max(1, floor(0.05 n)).
double value_at_risk(std::span<const double> returns);
double conditional_var(std::span<const double> returns);

struct BetaAlpha {
    double beta = 0.0;
    double alpha = 0.0;
};
BetaAlpha beta_alpha(std::span<const double> returns, std::span<const double> index);

// ---- tools ------------------------------------------------------------------

ToolOutput get_price_history(std::span<const Bar> window);
ToolOutput compute_technicals(std::span<const Bar> window, const ToolParams& params = {});
ToolOutput compute_momentum(std::span<const Bar> window);
ToolOutput compute_quant_risk(const ToolInputs& inputs);
ToolOutput compute_correlations(const ToolInputs& inputs);
ToolOutput run_dcf_model(std::span<const Bar> window, const Json* static_data, const ToolParams& params = {});
ToolOutput score_risk(const ToolInputs& inputs);
ToolOutput get_fundamentals(const Json* static_data);
ToolOutput get_analyst_data(const Json* static_data, double last_close);
ToolOutput get_options_data(const Json* static_data);
ToolOutput get_earnings_data(const Json* static_data);
ToolOutput score_composite_signal(std::span<const ToolOutput> constituents, const ToolParams& params = {});

// ---- hit accounting -----------------------------------------------------------

struct HitCount {
    int correct = 0;
    int incorrect = 0;
    int total = 0;
};

class HitStats {
public:
    // Hit when signal and return share a nonzero sign, miss when they oppose,
    // otherwise only total moves.
    void record(const std::string& tool, const std::string& ticker, double signal, double realized_return);

    HitCount get(const std::string& tool, const std::string& ticker) const;
    HitCount tool_total(const std::string& tool) const;
    const std::map<std::pair<std::string, std::string>, HitCount>& all() const { return counts_; }
    void clear() { counts_.clear(); }

    Json snapshot() const;

private:
    std::map<std::pair<std::string, std::string>, HitCount> counts_;
};

// 0 = abstain, 1 = hit, -1 = miss.
int hit_outcome(double signal, double realized_return);

HitStats record_hit(HitStats stats, const std::string& tool, const std::string& ticker, double signal,
                    double realized_return);

}  // namespace ael::toolkit
