#include "ael/toolkit.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <spdlog/spdlog.h>

#include "ael/errors.hpp"

namespace ael::toolkit {

namespace {

double clip1(double x) { return std::clamp(x, -1.0, 1.0); }

double mean_of(std::span<const double> v) {
    return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_sd(std::span<const double> v) {
    if (v.size() < 2) {
        return 0.0;
    }
    const double m = mean_of(v);
    double ss = 0.0;
    for (double x : v) {
        ss += (x - m) * (x - m);
    }
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

const Json* section(const Json* doc, const char* name) {
    if (doc == nullptr || !doc->is_object()) {
        return nullptr;
    }
    auto it = doc->find(name);
    if (it == doc->end() || !it->is_object()) {
        return nullptr;
    }
    return &*it;
}

bool number_at(const Json* sec, const char* key, double& out) {
    if (sec == nullptr) {
        return false;
    }
    auto it = sec->find(key);
    if (it == sec->end() || !it->is_number()) {
        return false;
    }
    out = it->get<double>();
    return std::isfinite(out);
}

// Equal-weight index of per-bar returns over the last n bars of every window.
std::vector<double> index_returns(const std::vector<std::span<const Bar>>& universe, std::size_t n) {
    std::vector<double> index(n, 0.0);
    for (const auto& w : universe) {
        const auto c = closes_of(w.subspan(w.size() - n - 1));
        const auto r = simple_returns(c);
        for (std::size_t t = 0; t < n; ++t) {
            index[t] += r[t] / static_cast<double>(universe.size());
        }
    }
    return index;
}

}  // namespace

std::string group_name(Group group) {
    switch (group) {
        case Group::valuation: return "valuation";
        case Group::momentum: return "momentum";
        case Group::sentiment: return "sentiment";
        case Group::risk: return "risk";
    }
    return "momentum";
}

const std::vector<ToolInfo>& registry() {
    static const std::vector<ToolInfo> tools = {
        {"get_price_history", "data_retrieval", false, Group::momentum, "Recent OHLCV bars, latest close, highs/lows, volume"},
        {"get_fundamentals", "data_retrieval", true, Group::valuation, "Profitability, leverage, growth and valuation ratios"},
        {"get_analyst_data", "data_retrieval", true, Group::sentiment, "Target prices, consensus, upgrade/downgrade history"},
        {"get_options_data", "data_retrieval", true, Group::sentiment, "Implied volatility, put/call ratio, open interest"},
        {"get_earnings_data", "data_retrieval", true, Group::sentiment, "Quarterly earnings surprise and calendar"},
        {"compute_technicals", "computation", false, Group::momentum, "RSI, MACD, Bollinger bands, moving averages"},
        {"compute_quant_risk", "computation", false, Group::risk, "Volatility, VaR/CVaR, Sharpe, Sortino, drawdown, beta"},
        {"compute_momentum", "computation", false, Group::momentum, "Multi-horizon returns, trend slope and strength"},
        {"compute_correlations", "computation", false, Group::risk, "Cross-ticker correlation matrix"},
        {"run_dcf_model", "analysis", false, Group::valuation, "Implied-upside valuation signal"},
        {"score_risk", "analysis", false, Group::risk, "Overall 1-10 risk rating with sub-scores"},
        {"score_composite_signal", "analysis", false, Group::momentum, "Weighted BUY/SELL/HOLD summary"},
    };
    return tools;
}

std::size_t tool_index(const std::string& name) {
    const auto& tools = registry();
    for (std::size_t i = 0; i < tools.size(); ++i) {
        if (tools[i].name == name) {
            return i;
        }
    }
    throw ConfigError("unknown tool " + name);
}

bool is_tool(const std::string& name) {
    const auto& tools = registry();
    return std::any_of(tools.begin(), tools.end(), [&](const ToolInfo& t) { return t.name == name; });
}

Json ToolOutput::to_json() const {
    Json doc = {{"tool", tool}, {"signal", signal}, {"confidence", confidence}, {"fields", fields}};
    if (!label.empty()) {
        doc["label"] = label;
    }
    return doc;
}

ToolOutput neutral_output(const std::string& tool) { return ToolOutput{tool, 0.0, 0.0, {}, ""}; }

std::vector<double> closes_of(std::span<const Bar> window) {
    std::vector<double> out;
    out.reserve(window.size());
    for (const auto& bar : window) {
        out.push_back(bar.close);
    }
    return out;
}

std::vector<double> simple_returns(std::span<const double> closes) {
    std::vector<double> out;
    for (std::size_t i = 1; i < closes.size(); ++i) {
        out.push_back(closes[i] / closes[i - 1] - 1.0);
    }
    return out;
}

double rsi_wilder(std::span<const double> closes, int period) {
    const auto p = static_cast<std::size_t>(period);
    if (period <= 0 || closes.size() < p + 1) {
        throw ContractViolation("RSI needs period + 1 closes");
    }
    double gain = 0.0;
    double loss = 0.0;
    for (std::size_t i = 1; i <= p; ++i) {
        const double d = closes[i] - closes[i - 1];
        gain += std::max(d, 0.0);
        loss += std::max(-d, 0.0);
    }
    gain /= period;
    loss /= period;
    for (std::size_t i = p + 1; i < closes.size(); ++i) {
        const double d = closes[i] - closes[i - 1];
        gain = (gain * (period - 1) + std::max(d, 0.0)) / period;
        loss = (loss * (period - 1) + std::max(-d, 0.0)) / period;
    }
    if (loss == 0.0) {
        return gain == 0.0 ? 50.0 : 100.0;
    }
    return 100.0 - 100.0 / (1.0 + gain / loss);
}

std::vector<double> ema_series(std::span<const double> values, int period) {
    std::vector<double> out;
    if (values.empty()) {
        return out;
    }
    const double k = 2.0 / (period + 1.0);
    out.push_back(values[0]);
    for (std::size_t i = 1; i < values.size(); ++i) {
        out.push_back(values[i] * k + out.back() * (1.0 - k));
    }
    return out;
}

Macd macd(std::span<const double> closes, int fast, int slow, int signal) {
    const auto f = ema_series(closes, fast);
    const auto s = ema_series(closes, slow);
    std::vector<double> line(closes.size());
    for (std::size_t i = 0; i < closes.size(); ++i) {
        line[i] = f[i] - s[i];
    }
    const auto sig = ema_series(line, signal);
    Macd out;
    if (!line.empty()) {
        out.macd = line.back();
        out.signal = sig.back();
        out.histogram = out.macd - out.signal;
    }
    return out;
}

Bollinger bollinger(std::span<const double> closes, int period, double k) {
    const auto p = static_cast<std::size_t>(period);
    if (closes.size() < p) {
        throw ContractViolation("Bollinger bands need `period` closes");
    }
    const auto tail = closes.subspan(closes.size() - p);
    const double mid = mean_of(tail);
    double ss = 0.0;
    for (double c : tail) {
        ss += (c - mid) * (c - mid);
    }
    const double sd = std::sqrt(ss / static_cast<double>(p));
    Bollinger out;
    out.middle = mid;
    out.lower = mid - k * sd;
    out.upper = mid + k * sd;
    out.width = out.upper - out.lower;
    out.percent_b = out.width > 0.0 ? (closes.back() - out.lower) / out.width : 0.5;
    return out;
}

LinearFit fit_line(std::span<const double> y) {
    LinearFit fit;
    const auto n = static_cast<double>(y.size());
    if (y.size() < 2) {
        return fit;
    }
    const double xm = (n - 1.0) / 2.0;
    const double ym = mean_of(y);
    double sxy = 0.0;
    double sxx = 0.0;
    double syy = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double dx = static_cast<double>(i) - xm;
        const double dy = y[i] - ym;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    fit.slope = sxy / sxx;
    fit.intercept = ym - fit.slope * xm;
    fit.r_squared = syy > 0.0 ? std::clamp(sxy * sxy / (sxx * syy), 0.0, 1.0) : 1.0;
    return fit;
}

double pearson(std::span<const double> a, std::span<const double> b, bool* zero_variance) {
    if (a.size() != b.size() || a.empty()) {
        throw ContractViolation("correlation inputs must be aligned and non-empty");
    }
    const double ma = mean_of(a);
    const double mb = mean_of(b);
    double sab = 0.0;
    double saa = 0.0;
    double sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (saa == 0.0 || sbb == 0.0) {
        if (zero_variance != nullptr) {
            *zero_variance = true;
        }
        return 0.0;
    }
    return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

std::vector<std::vector<double>> correlation_matrix(const std::vector<std::vector<double>>& returns) {
    const std::size_t n = returns.size();
    std::vector<std::vector<double>> m(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        m[i][i] = 1.0;
        for (std::size_t j = i + 1; j < n; ++j) {
            m[i][j] = m[j][i] = pearson(returns[i], returns[j]);
        }
    }
    return m;
}

double value_at_risk(std::span<const double> returns) {
    if (returns.empty()) {
        return 0.0;
    }
    std::vector<double> sorted(returns.begin(), returns.end());
    std::sort(sorted.begin(), sorted.end());
    const std::size_t m = std::max<std::size_t>(1, static_cast<std::size_t>(0.05 * static_cast<double>(sorted.size())));
    return std::max(0.0, -sorted[m - 1]);
}

double conditional_var(std::span<const double> returns) {
    if (returns.empty()) {
        return 0.0;
    }
    std::vector<double> sorted(returns.begin(), returns.end());
    std::sort(sorted.begin(), sorted.end());
    const std::size_t m = std::max<std::size_t>(1, static_cast<std::size_t>(0.05 * static_cast<double>(sorted.size())));
    double tail = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        tail += sorted[i];
    }
    return std::max(0.0, -tail / static_cast<double>(m));
}

BetaAlpha beta_alpha(std::span<const double> returns, std::span<const double> index) {
    if (returns.size() != index.size() || returns.empty()) {
        throw ContractViolation("beta inputs must be aligned and non-empty");
    }
    const double mr = mean_of(returns);
    const double mi = mean_of(index);
    double cov = 0.0;
    double var = 0.0;
    for (std::size_t i = 0; i < returns.size(); ++i) {
        cov += (returns[i] - mr) * (index[i] - mi);
        var += (index[i] - mi) * (index[i] - mi);
    }
    BetaAlpha out;
    out.beta = var > 0.0 ? cov / var : 0.0;
    out.alpha = mr - out.beta * mi;
    return out;
}

ToolOutput get_price_history(std::span<const Bar> window) {
    ToolOutput out = neutral_output("get_price_history");
    if (window.empty()) {
        spdlog::warn("get_price_history: empty window");
        return out;
    }
    const Bar& last = window.back();
    double hi = last.high;
    double lo = last.low;
    double vol_sum = 0.0;
    for (const auto& bar : window) {
        hi = std::max(hi, bar.high);
        lo = std::min(lo, bar.low);
        vol_sum += bar.volume;
    }
    out.fields = {{"close", last.close},
                  {"open", last.open},
                  {"high", last.high},
                  {"low", last.low},
                  {"volume", last.volume},
                  {"window_high", hi},
                  {"window_low", lo},
                  {"avg_volume", vol_sum / static_cast<double>(window.size())},
                  {"bars", static_cast<double>(window.size())}};
    if (window.size() >= 2) {
        const double r = last.close / window[window.size() - 2].close - 1.0;
        out.fields["last_return"] = r;
        out.signal = clip1(r / 0.01);
        out.confidence = 0.5;
    }
    return out;
}

ToolOutput compute_technicals(std::span<const Bar> window, const ToolParams& params) {
    ToolOutput out = neutral_output("compute_technicals");
    const auto need = static_cast<std::size_t>(std::max({params.macd_slow, params.bollinger_period, params.rsi_period + 1}));
    if (window.size() < need) {
        spdlog::warn("compute_technicals: {} bars, need {}", window.size(), need);
        return out;
    }
    const auto c = closes_of(window);
    const double rsi = rsi_wilder(c, params.rsi_period);
    const Macd m = macd(c, params.macd_fast, params.macd_slow, params.macd_signal);
    const Bollinger bb = bollinger(c, params.bollinger_period, params.bollinger_k);
    const double sma10 = mean_of(std::span<const double>(c).subspan(c.size() - 10));
    const double sma20 = mean_of(std::span<const double>(c).subspan(c.size() - 20));
    double support = window.back().low;
    double resistance = window.back().high;
    for (std::size_t i = window.size() - 20; i < window.size(); ++i) {
        support = std::min(support, window[i].low);
        resistance = std::max(resistance, window[i].high);
    }
    const double price = c.back();
    const double rsi_sub = (rsi - 50.0) / 50.0;
    const double macd_sub = std::tanh(m.histogram / price / 0.002);
    const double bb_sub = clip1(2.0 * (bb.percent_b - 0.5));
    const double ma_sub = std::tanh((sma10 / sma20 - 1.0) / 0.01);
    const double score = clip1((rsi_sub + macd_sub + bb_sub + ma_sub) / 4.0);
    out.signal = score;
    out.confidence = 1.0;
    out.fields = {{"rsi", rsi},
                  {"macd", m.macd},
                  {"macd_signal", m.signal},
                  {"macd_hist", m.histogram},
                  {"bb_lower", bb.lower},
                  {"bb_middle", bb.middle},
                  {"bb_upper", bb.upper},
                  {"bb_percent_b", bb.percent_b},
                  {"bb_width", bb.width},
                  {"sma10", sma10},
                  {"sma20", sma20},
                  {"support", support},
                  {"resistance", resistance},
                  {"technical_score", score}};
    return out;
}

ToolOutput compute_momentum(std::span<const Bar> window) {
    ToolOutput out = neutral_output("compute_momentum");
    if (window.size() < 20) {
        spdlog::warn("compute_momentum: {} bars, need 20", window.size());
        return out;
    }
    const auto c = closes_of(window);
    std::vector<double> logc(c.size());
    std::transform(c.begin(), c.end(), logc.begin(), [](double x) { return std::log(x); });
    std::vector<double> logret;
    for (std::size_t i = 1; i < logc.size(); ++i) {
        logret.push_back(logc[i] - logc[i - 1]);
    }
    const double sigma = sample_sd(logret);
    const std::size_t last = c.size() - 1;
    double z_sum = 0.0;
    for (std::size_t h : {5u, 10u, 20u}) {
        const std::size_t lag = std::min(h, last);
        const double r = c[last] / c[last - lag] - 1.0;
        out.fields["return_" + std::to_string(h)] = r;
        const double lr = logc[last] - logc[last - lag];
        double z = 0.0;
        if (sigma > 0.0) {
            z = lr / (sigma * std::sqrt(static_cast<double>(lag)));
        } else {
            z = lr > 0.0 ? 2.0 : (lr < 0.0 ? -2.0 : 0.0);
        }
        z_sum += z;
    }
    const auto tail = std::span<const double>(logc).subspan(logc.size() - 20);
    const LinearFit fit = fit_line(tail);
    std::vector<double> logv;
    for (std::size_t i = window.size() - 20; i < window.size(); ++i) {
        logv.push_back(std::log(std::max(window[i].volume, 1.0)));
    }
    const LinearFit vfit = fit_line(logv);
    out.signal = clip1(z_sum / 3.0 / 2.0);
    out.confidence = 1.0;
    out.fields["trend_slope"] = fit.slope;
    out.fields["trend_strength"] = fit.r_squared;
    out.fields["volume_trend"] = vfit.slope;
    out.fields["trend_score"] = out.signal;
    return out;
}

ToolOutput compute_quant_risk(const ToolInputs& inputs) {
    ToolOutput out = neutral_output("compute_quant_risk");
    const auto window = inputs.window();
    if (window.size() < 20) {
        spdlog::warn("compute_quant_risk: {} bars, need 20", window.size());
        return out;
    }
    const auto r = simple_returns(closes_of(window));
    const double sd = sample_sd(r);
    const double mean = mean_of(r);
    const double vol_ann = sd * std::sqrt(market::kBarsPerYear);
    double downside = 0.0;
    for (double x : r) {
        downside += std::min(x, 0.0) * std::min(x, 0.0);
    }
    const double sd_down = std::sqrt(downside / static_cast<double>(r.size()));
    std::size_t n = r.size();
    for (const auto& w : inputs.universe) {
        n = std::min(n, w.size() - 1);
    }
    const auto idx = index_returns(inputs.universe, n);
    const BetaAlpha ba = beta_alpha(std::span<const double>(r).subspan(r.size() - n), idx);
    const double var95 = value_at_risk(r);
    const double risk_score = 1.0 + 9.0 * std::clamp(vol_ann / 0.5, 0.0, 1.0);
    out.fields = {{"volatility", vol_ann},
                  {"var95", var95},
                  {"cvar95", conditional_var(r)},
                  {"sharpe", sd > 0.0 ? std::sqrt(market::kBarsPerYear) * mean / sd : 0.0},
                  {"sortino", sd_down > 0.0 ? std::sqrt(market::kBarsPerYear) * mean / sd_down : 0.0},
                  {"max_drawdown", market::max_drawdown(r)},
                  {"beta", ba.beta},
                  {"alpha", ba.alpha},
                  {"risk_score", risk_score}};
    out.signal = -clip1((vol_ann - 0.2) / 0.2);
    out.confidence = 1.0;
    return out;
}

ToolOutput compute_correlations(const ToolInputs& inputs) {
    ToolOutput out = neutral_output("compute_correlations");
    std::size_t n = inputs.window().size();
    for (const auto& w : inputs.universe) {
        n = std::min(n, w.size());
    }
    if (n < 10) {
        spdlog::warn("compute_correlations: {} aligned bars, need 10", n);
        return out;
    }
    const std::size_t span_bars = std::min<std::size_t>(n, 21);
    std::vector<std::vector<double>> rets;
    for (const auto& w : inputs.universe) {
        rets.push_back(simple_returns(closes_of(w.subspan(w.size() - span_bars))));
    }
    double sum = 0.0;
    int others = 0;
    for (std::size_t j = 0; j < rets.size(); ++j) {
        if (j == inputs.target) {
            continue;
        }
        bool flat = false;
        const double rho = pearson(rets[inputs.target], rets[j], &flat);
        if (flat) {
            spdlog::warn("compute_correlations: zero-variance returns, correlation set to 0");
        }
        out.fields["corr_" + std::to_string(j)] = rho;
        sum += rho;
        ++others;
    }
    const double mean_corr = others > 0 ? sum / others : 0.0;
    out.fields["mean_correlation"] = mean_corr;
    out.signal = clip1(-0.5 * mean_corr);
    out.confidence = others > 0 ? 0.5 : 0.0;
    return out;
}

ToolOutput run_dcf_model(std::span<const Bar> window, const Json* static_data, const ToolParams& params) {
    ToolOutput out = neutral_output("run_dcf_model");
    if (window.empty()) {
        return out;
    }
    const double price = window.back().close;
    const Json* fund = section(static_data, "fundamentals");
    double fcf = 0.0;
    double g = 0.0;
    double rate = 0.0;
    double fair = 0.0;
    if (number_at(fund, "fcf_per_share", fcf) && number_at(fund, "growth", g) &&
        number_at(fund, "discount_rate", rate) && rate > g && fcf > 0.0) {
        fair = fcf * (1.0 + g) / (rate - g);
        out.confidence = 0.8;
        out.fields["method"] = 1.0;
    } else {
        const std::size_t look = std::min<std::size_t>(window.size(), static_cast<std::size_t>(params.dcf_lookback));
        const auto c = closes_of(window.subspan(window.size() - look));
        fair = mean_of(c) * params.dcf_growth;
        out.confidence = 0.6;
        out.fields["method"] = 0.0;
    }
    out.fields["fair_value"] = fair;
    out.fields["price"] = price;
    out.fields["implied_upside"] = fair / price - 1.0;
    out.signal = clip1((fair / price - 1.0) / params.dcf_scale);
    return out;
}

ToolOutput score_risk(const ToolInputs& inputs) {
    ToolOutput out = neutral_output("score_risk");
    const auto window = inputs.window();
    if (window.size() < 20) {
        spdlog::warn("score_risk: {} bars, need 20", window.size());
        return out;
    }
    const ToolOutput q = compute_quant_risk(inputs);
    const Json* fund = section(inputs.static_data, "fundamentals");
    auto scale = [](double x, double lo, double hi) { return 1.0 + 9.0 * std::clamp((x - lo) / (hi - lo), 0.0, 1.0); };
    double v = 0.0;
    const double price = window.back().close;
    const auto c = closes_of(window.subspan(window.size() - 20));
    double valuation = scale(std::abs(price / mean_of(c) - 1.0), 0.0, 0.1);
    if (number_at(fund, "pe", v)) {
        valuation = scale(v, 10.0, 50.0);
    }
    double financial = 5.5;
    if (number_at(fund, "debt_to_equity", v)) {
        financial = scale(v, 0.0, 2.0);
    }
    double growth = 5.5;
    if (number_at(fund, "revenue_growth", v)) {
        growth = scale(-v, -0.2, 0.1);
    }
    const double macro = scale(q.fields.at("beta"), 0.0, 2.0);
    const double technical = scale(q.fields.at("volatility"), 0.0, 0.5);
    const double overall = (valuation + financial + growth + macro + technical) / 5.0;
    out.fields = {{"valuation", valuation}, {"financial", financial}, {"growth", growth},
                  {"macro", macro},         {"technical", technical}, {"overall", overall}};
    out.signal = clip1((5.5 - overall) / 4.5);
    out.confidence = 0.8;
    return out;
}

ToolOutput get_fundamentals(const Json* static_data) {
    ToolOutput out = neutral_output("get_fundamentals");
    const Json* fund = section(static_data, "fundamentals");
    if (fund == nullptr) {
        return out;
    }
    double score = 0.0;
    int parts = 0;
    double v = 0.0;
    for (const auto& [key, value] : fund->items()) {
        if (value.is_number()) {
            out.fields[key] = value.get<double>();
        }
    }
    if (number_at(fund, "roe", v)) {
        score += std::tanh((v - 0.10) / 0.10);
        ++parts;
    }
    if (number_at(fund, "revenue_growth", v)) {
        score += std::tanh(v / 0.10);
        ++parts;
    }
    if (number_at(fund, "debt_to_equity", v)) {
        score -= std::tanh(v - 1.0);
        ++parts;
    }
    if (number_at(fund, "pe", v) && v > 0.0) {
        score -= std::tanh((v - 25.0) / 15.0);
        ++parts;
    }
    if (parts > 0) {
        out.signal = clip1(score / parts);
        out.confidence = 0.7;
    }
    return out;
}

ToolOutput get_analyst_data(const Json* static_data, double last_close) {
    ToolOutput out = neutral_output("get_analyst_data");
    const Json* sec = section(static_data, "analyst");
    if (sec == nullptr) {
        return out;
    }
    double target = 0.0;
    double buy = 0.0;
    double hold = 0.0;
    double sell = 0.0;
    double up = 0.0;
    double down = 0.0;
    const bool has_target = number_at(sec, "target_price", target) && last_close > 0.0;
    number_at(sec, "buy", buy);
    number_at(sec, "hold", hold);
    number_at(sec, "sell", sell);
    number_at(sec, "upgrades", up);
    number_at(sec, "downgrades", down);
    const double upside = has_target ? target / last_close - 1.0 : 0.0;
    const double votes = buy + hold + sell;
    const double consensus = votes > 0.0 ? (buy - sell) / votes : 0.0;
    const double revisions = (up - down) / (up + down + 1.0);
    out.fields = {{"target_price", target}, {"upside", upside}, {"consensus", consensus}, {"revisions", revisions}};
    out.signal = clip1(0.4 * std::tanh(upside / 0.1) + 0.4 * consensus + 0.2 * revisions);
    out.confidence = 0.6;
    return out;
}

ToolOutput get_options_data(const Json* static_data) {
    ToolOutput out = neutral_output("get_options_data");
    const Json* sec = section(static_data, "options");
    double pcr = 0.0;
    if (sec == nullptr || !number_at(sec, "put_call_ratio", pcr)) {
        return out;
    }
    double iv = 0.3;
    double oi = 0.0;
    number_at(sec, "implied_vol", iv);
    number_at(sec, "open_interest", oi);
    out.fields = {{"put_call_ratio", pcr}, {"implied_vol", iv}, {"open_interest", oi}};
    out.signal = clip1(0.7 * std::tanh((1.0 - pcr) / 0.5) - 0.3 * std::tanh((iv - 0.3) / 0.2));
    out.confidence = 0.5;
    return out;
}

ToolOutput get_earnings_data(const Json* static_data) {
    ToolOutput out = neutral_output("get_earnings_data");
    const Json* sec = section(static_data, "earnings");
    double actual = 0.0;
    double estimate = 0.0;
    if (sec == nullptr || !number_at(sec, "eps_actual", actual) || !number_at(sec, "eps_estimate", estimate) ||
        estimate == 0.0) {
        return out;
    }
    double days = 90.0;
    number_at(sec, "days_to_next", days);
    const double surprise = (actual - estimate) / std::abs(estimate);
    out.fields = {{"eps_actual", actual}, {"eps_estimate", estimate}, {"surprise", surprise}, {"days_to_next", days}};
    out.signal = clip1(std::tanh(surprise / 0.05));
    out.confidence = days < 5.0 ? 0.25 : 0.5;
    return out;
}

ToolOutput score_composite_signal(std::span<const ToolOutput> constituents, const ToolParams& params) {
    ToolOutput out = neutral_output("score_composite_signal");
    if (constituents.empty()) {
        throw ContractViolation("composite signal needs at least one constituent");
    }
    double weighted = 0.0;
    double weight = 0.0;
    int used = 0;
    for (const auto& c : constituents) {
        weighted += c.confidence * c.signal;
        weight += c.confidence;
        used += c.confidence > 0.0 ? 1 : 0;
    }
    out.signal = weight > 0.0 ? clip1(weighted / weight) : 0.0;
    out.confidence = used > 0 ? std::min(1.0, weight / used) * 0.8 : 0.0;
    out.label = out.signal > params.composite_buy ? "BUY" : (out.signal < params.composite_sell ? "SELL" : "HOLD");
    out.fields = {{"constituents", static_cast<double>(constituents.size())}, {"score", out.signal}};
    return out;
}

ToolOutput run_tool(const std::string& tool_name, const ToolInputs& inputs) {
    const auto window = inputs.window();
    const double last_close = window.empty() ? 0.0 : window.back().close;
    if (tool_name == "get_price_history") return get_price_history(window);
    if (tool_name == "get_fundamentals") return get_fundamentals(inputs.static_data);
    if (tool_name == "get_analyst_data") return get_analyst_data(inputs.static_data, last_close);
    if (tool_name == "get_options_data") return get_options_data(inputs.static_data);
    if (tool_name == "get_earnings_data") return get_earnings_data(inputs.static_data);
    if (tool_name == "compute_technicals") return compute_technicals(window, inputs.params);
    if (tool_name == "compute_quant_risk") return compute_quant_risk(inputs);
    if (tool_name == "compute_momentum") return compute_momentum(window);
    if (tool_name == "compute_correlations") return compute_correlations(inputs);
    if (tool_name == "run_dcf_model") return run_dcf_model(window, inputs.static_data, inputs.params);
    if (tool_name == "score_risk") return score_risk(inputs);
    if (tool_name == "score_composite_signal") {
        const std::vector<ToolOutput> parts = {
            compute_technicals(window, inputs.params), compute_momentum(window),
            run_dcf_model(window, inputs.static_data, inputs.params), get_analyst_data(inputs.static_data, last_close),
            get_options_data(inputs.static_data), compute_quant_risk(inputs)};
        return score_composite_signal(parts, inputs.params);
    }
    throw ConfigError("unknown tool " + tool_name);
}

std::vector<ToolOutput> run_all(const ToolInputs& inputs) {
    std::vector<ToolOutput> out;
    out.reserve(kNumTools);
    for (const auto& info : registry()) {
        if (info.name != "score_composite_signal") {
            out.push_back(run_tool(info.name, inputs));
        } else {
            out.emplace_back();
        }
    }
    const std::vector<ToolOutput> parts = {out[tool_index("compute_technicals")], out[tool_index("compute_momentum")],
                                           out[tool_index("run_dcf_model")],      out[tool_index("get_analyst_data")],
                                           out[tool_index("get_options_data")],   out[tool_index("compute_quant_risk")]};
    out[tool_index("score_composite_signal")] = score_composite_signal(parts, inputs.params);
    return out;
}

int hit_outcome(double signal, double realized_return) {
    if (signal == 0.0 || realized_return == 0.0) {
        return 0;
    }
    return (signal > 0.0) == (realized_return > 0.0) ? 1 : -1;
}

void HitStats::record(const std::string& tool, const std::string& ticker, double signal, double realized_return) {
    HitCount& c = counts_[{tool, ticker}];
    const int h = hit_outcome(signal, realized_return);
    c.correct += h > 0 ? 1 : 0;
    c.incorrect += h < 0 ? 1 : 0;
    c.total += 1;
}

HitCount HitStats::get(const std::string& tool, const std::string& ticker) const {
    auto it = counts_.find({tool, ticker});
    return it == counts_.end() ? HitCount{} : it->second;
}

HitCount HitStats::tool_total(const std::string& tool) const {
    HitCount sum;
    for (const auto& [key, c] : counts_) {
        if (key.first == tool) {
            sum.correct += c.correct;
            sum.incorrect += c.incorrect;
            sum.total += c.total;
        }
    }
    return sum;
}

Json HitStats::snapshot() const {
    Json doc = Json::array();
    for (const auto& [key, c] : counts_) {
        doc.push_back({{"tool", key.first}, {"ticker", key.second}, {"correct", c.correct},
                       {"incorrect", c.incorrect}, {"total", c.total}});
    }
    return doc;
}

HitStats record_hit(HitStats stats, const std::string& tool, const std::string& ticker, double signal,
                    double realized_return) {
    stats.record(tool, ticker, signal, realized_return);
    return stats;
}

}  // namespace ael::toolkit
