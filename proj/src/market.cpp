#include "ael/market.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "ael/errors.hpp"
#include "ael/rng.hpp"

namespace ael::market {

namespace {

// Howard Hinnant's civil-date conversions.
std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const auto yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t z, std::int64_t& y, unsigned& m, unsigned& d) {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const auto doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    y = static_cast<std::int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    d = doy - (153 * mp + 2) / 5 + 1;
    m = mp < 10 ? mp + 3 : mp - 9;
    y += m <= 2;
}

std::int64_t day_of(std::int64_t ts) {
    return ts >= 0 ? ts / 86400 : (ts - 86399) / 86400;
}

bool is_weekday(std::int64_t day) {
    // 1970-01-01 was a Thursday
    const std::int64_t dow = ((day % 7) + 7 + 3) % 7;  // 0 = Monday
    return dow < 5;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, ',')) {
        out.push_back(field);
    }
    if (!line.empty() && line.back() == ',') {
        out.emplace_back();
    }
    return out;
}

double parse_number(const std::string& text, std::size_t line, const char* what) {
    try {
        std::size_t used = 0;
        const double value = std::stod(text, &used);
        if (used != text.size() || !std::isfinite(value)) {
            throw ParseError(std::string("bad ") + what + " '" + text + "'", line);
        }
        return value;
    } catch (const std::invalid_argument&) {
        throw ParseError(std::string("bad ") + what + " '" + text + "'", line);
    } catch (const std::out_of_range&) {
        throw ParseError(std::string("bad ") + what + " '" + text + "'", line);
    }
}

}  // namespace

std::size_t PriceSeries::ticker_index(const std::string& ticker) const {
    for (std::size_t i = 0; i < tickers.size(); ++i) {
        if (tickers[i] == ticker) {
            return i;
        }
    }
    throw ConfigError("unknown ticker " + ticker);
}

std::vector<double> PriceSeries::closes(std::size_t ticker) const {
    std::vector<double> out;
    out.reserve(bars.at(ticker).size());
    for (const auto& bar : bars[ticker]) {
        out.push_back(bar.close);
    }
    return out;
}

double PriceSeries::bar_return(std::size_t ticker, std::size_t t) const {
    const auto& row = bars.at(ticker);
    return row.at(t + 1).close / row.at(t).close - 1.0;
}

std::string PriceSeries::digest() const {
    std::uint64_t hash = fnv1a64("prices");
    char buffer[160];
    for (std::size_t i = 0; i < tickers.size(); ++i) {
        hash ^= fnv1a64(tickers[i]);
        for (const auto& bar : bars[i]) {
            std::snprintf(buffer, sizeof(buffer), "%lld,%.17g,%.17g,%.17g,%.17g,%.17g",
                          static_cast<long long>(bar.timestamp), bar.open, bar.high, bar.low,
                          bar.close, bar.volume);
            hash = hash * 0x100000001b3ULL ^ fnv1a64(buffer);
        }
    }
    std::snprintf(buffer, sizeof(buffer), "%016llx", static_cast<unsigned long long>(hash));
    return buffer;
}

std::string format_timestamp(std::int64_t epoch_seconds) {
    const std::int64_t day = day_of(epoch_seconds);
    const std::int64_t secs = epoch_seconds - day * 86400;
    std::int64_t y = 0;
    unsigned m = 0;
    unsigned d = 0;
    civil_from_days(day, y, m, d);
    char buffer[64];
    std::snprintf(buffer, sizeof(buffer), "%04lld-%02u-%02uT%02lld:%02lld:%02lldZ",
                  static_cast<long long>(y), m, d, static_cast<long long>(secs / 3600),
                  static_cast<long long>((secs / 60) % 60), static_cast<long long>(secs % 60));
    return buffer;
}

std::int64_t parse_timestamp(const std::string& text) {
    int y = 0;
    unsigned mo = 0;
    unsigned d = 0;
    unsigned h = 0;
    unsigned mi = 0;
    unsigned s = 0;
    char tail[8] = {0};
    const int got = std::sscanf(text.c_str(), "%4d-%2u-%2uT%2u:%2u:%2u%7s", &y, &mo, &d, &h, &mi, &s, tail);
    const std::string suffix = tail;
    if (got != 7 || (suffix != "Z" && suffix != "+00:00") || text.size() != 19 + suffix.size() ||
        mo < 1 || mo > 12 || d < 1 || d > 31 || h > 23 || mi > 59 || s > 60) {
        throw ParseError("timestamp '" + text + "' is not ISO-8601 UTC");
    }
    return days_from_civil(y, mo, d) * 86400 + h * 3600 + mi * 60 + s;
}

PriceSeries load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open price file " + path);
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw ParseError("empty file", 1);
    }
    if (!line.empty() && line.back() == '\r') {
        line.pop_back();
    }
    if (line != "timestamp,ticker,open,high,low,close,volume") {
        throw ParseError("unexpected header '" + line + "'", 1);
    }

    std::map<std::string, std::map<std::int64_t, Bar>> rows;
    std::vector<std::string> order;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        const auto fields = split_csv(line);
        if (fields.size() != 7) {
            throw ParseError("expected 7 fields, got " + std::to_string(fields.size()), line_no);
        }
        Bar bar;
        try {
            bar.timestamp = parse_timestamp(fields[0]);
        } catch (const ParseError& err) {
            throw ParseError(err.what(), line_no);
        }
        const std::string& ticker = fields[1];
        if (ticker.empty()) {
            throw ParseError("empty ticker", line_no);
        }
        bar.open = parse_number(fields[2], line_no, "open");
        bar.high = parse_number(fields[3], line_no, "high");
        bar.low = parse_number(fields[4], line_no, "low");
        bar.close = parse_number(fields[5], line_no, "close");
        bar.volume = parse_number(fields[6], line_no, "volume");
        if (bar.open <= 0 || bar.high <= 0 || bar.low <= 0 || bar.close <= 0) {
            throw ParseError("prices must be positive", line_no);
        }
        if (bar.volume <= 0) {
            throw ParseError("volume must be positive", line_no);
        }
        if (bar.low > bar.high) {
            throw ParseError("low above high", line_no);
        }
        auto& per_ticker = rows[ticker];
        if (per_ticker.empty()) {
            order.push_back(ticker);
        }
        if (!per_ticker.emplace(bar.timestamp, bar).second) {
            throw ParseError("duplicate timestamp " + fields[0] + " for " + ticker, line_no);
        }
    }
    if (rows.empty()) {
        throw ParseError("no data rows", line_no);
    }

    PriceSeries series;
    series.tickers = order;
    series.sectors.assign(order.size(), "unknown");
    for (const auto& [ts, bar] : rows.at(order.front())) {
        series.timestamps.push_back(ts);
    }
    for (const auto& ticker : order) {
        const auto& per_ticker = rows.at(ticker);
        if (per_ticker.size() != series.timestamps.size()) {
            throw AlignmentError("ticker " + ticker + " has " + std::to_string(per_ticker.size()) +
                                 " bars, expected " + std::to_string(series.timestamps.size()));
        }
        std::vector<Bar> bars;
        bars.reserve(per_ticker.size());
        std::size_t t = 0;
        for (const auto& [ts, bar] : per_ticker) {
            if (ts != series.timestamps[t++]) {
                throw AlignmentError("ticker " + ticker + " is off the shared timestamp grid at " +
                                     format_timestamp(ts));
            }
            bars.push_back(bar);
        }
        series.bars.push_back(std::move(bars));
    }
    for (std::size_t t = 1; t < series.timestamps.size(); ++t) {
        const std::int64_t d0 = day_of(series.timestamps[t - 1]);
        const std::int64_t d1 = day_of(series.timestamps[t]);
        int missing = 0;
        for (std::int64_t d = d0 + 1; d < d1; ++d) {
            missing += is_weekday(d) ? 1 : 0;
        }
        if (missing > 1) {
            throw ParseError("gap of " + std::to_string(missing) + " trading days before " +
                             format_timestamp(series.timestamps[t]));
        }
    }
    return series;
}

void write_csv(const PriceSeries& series, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw ConfigError("cannot write " + path);
    }
    out << "timestamp,ticker,open,high,low,close,volume\n";
    char buffer[256];
    for (std::size_t t = 0; t < series.num_bars(); ++t) {
        const std::string ts = format_timestamp(series.timestamps[t]);
        for (std::size_t i = 0; i < series.num_tickers(); ++i) {
            const Bar& b = series.bars[i][t];
            std::snprintf(buffer, sizeof(buffer), "%s,%s,%.17g,%.17g,%.17g,%.17g,%.17g\n", ts.c_str(),
                          series.tickers[i].c_str(), b.open, b.high, b.low, b.close, b.volume);
            out << buffer;
        }
    }
}

std::size_t SynthConfig::total_bars() const {
    std::size_t total = 0;
    for (const auto& seg : segments) {
        total += seg.bars;
    }
    return total;
}

std::vector<std::string> SynthConfig::regime_path() const {
    std::vector<std::string> path;
    for (const auto& seg : segments) {
        path.insert(path.end(), seg.bars, seg.regime);
    }
    return path;
}

SynthConfig planted_market_config(std::size_t history_bars) {
    SynthConfig config;
    config.tickers = {
        {"ALPH", "tech", 1.6, 0.006},   {"BRVO", "tech", 1.3, 0.006},
        {"CHRL", "energy", 1.2, 0.006}, {"DLTA", "energy", 0.9, 0.006},
        {"ECHO", "health", 0.7, 0.006}, {"FXTR", "health", 0.5, 0.006},
        {"GOLF", "finance", 1.4, 0.006}, {"HOTL", "finance", 1.0, 0.006},
        {"INDA", "consumer", 0.8, 0.006}, {"JULT", "consumer", 0.6, 0.006},
    };
    // Trending regimes carry persistent per-ticker drift, so trend tools are
    // right there. The flat regime pulls every ticker back to its opening
    // price, which makes trend tools wrong and the valuation tool right.
    config.regimes["bull"] = {0.0015, 0.004, 0.002, 0.0};
    config.regimes["bear"] = {-0.0015, 0.006, 0.002, 0.0};
    config.regimes["flat"] = {0.0, 0.001, 0.0, 0.5};
    // Training alternates flat stretches with two bull and one bear stretch;
    // validation and test stay flat.
    config.segments = {{"flat", history_bars}, {"flat", 20}, {"bull", 20}, {"flat", 20}, {"bear", 20},
                       {"flat", 20},           {"bull", 20}, {"flat", 20}, {"flat", 40}, {"flat", 29}};
    return config;
}

PriceSeries synth_generate(const SynthConfig& config, std::uint64_t seed) {
    if (config.tickers.empty()) {
        throw ConfigError("synthetic market needs at least one ticker");
    }
    for (const auto& seg : config.segments) {
        if (!config.regimes.count(seg.regime)) {
            throw ConfigError("segment uses undefined regime '" + seg.regime + "'");
        }
    }
    Rng rng(derive_seed(seed, "synth"));
    const std::size_t n = config.tickers.size();
    PriceSeries series;
    for (const auto& spec : config.tickers) {
        series.tickers.push_back(spec.ticker);
        series.sectors.push_back(spec.sector);
    }
    series.bars.assign(n, {});

    std::vector<double> log_price(n, std::log(config.start_price));
    std::vector<double> anchor(n);
    std::vector<double> alpha(n);
    std::int64_t day = day_of(config.start_timestamp);
    const std::int64_t first_second = config.start_timestamp - day * 86400;
    int slot = 0;
    for (const auto& seg : config.segments) {
        const RegimeParams& p = config.regimes.at(seg.regime);
        for (std::size_t i = 0; i < n; ++i) {
            anchor[i] = log_price[i];
            alpha[i] = p.dispersion > 0 ? sample_normal(0.0, p.dispersion, rng) : 0.0;
        }
        for (std::size_t b = 0; b < seg.bars; ++b) {
            while (!is_weekday(day)) {
                ++day;
            }
            series.timestamps.push_back(day * 86400 + first_second + slot * 3600);
            if (++slot == 4) {
                slot = 0;
                ++day;
            }
            const double z = p.vol > 0 ? sample_normal(0.0, 1.0, rng) : 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const TickerSpec& spec = config.tickers[i];
                const double eps = spec.idio_vol > 0 ? sample_normal(0.0, 1.0, rng) : 0.0;
                const double step_log = spec.beta * (p.drift + p.vol * z) + alpha[i] + spec.idio_vol * eps -
                                        p.reversion * (log_price[i] - anchor[i]);
                const double open = std::exp(log_price[i]);
                log_price[i] += step_log;
                const double close = std::exp(log_price[i]);
                const double wick = 0.25 * (p.vol * spec.beta + spec.idio_vol);
                const double up = wick > 0 ? std::abs(sample_normal(0.0, wick, rng)) : 0.0;
                const double down = wick > 0 ? std::abs(sample_normal(0.0, wick, rng)) : 0.0;
                const double volume = 1.0e6 * std::exp(sample_normal(0.0, 0.2, rng)) * (1.0 + 50.0 * std::abs(step_log));
                series.bars[i].push_back(Bar{series.timestamps.back(), open,
                                             std::max(open, close) * std::exp(up),
                                             std::min(open, close) * std::exp(-down), close,
                                             std::round(volume)});
            }
        }
    }
    return series;
}

double step(PortfolioState& state, const std::vector<double>& weights,
            std::span<const double> next_bar_returns) {
    if (weights.size() != next_bar_returns.size()) {
        throw ContractViolation("weight and return vectors differ in length");
    }
    double total = 0.0;
    double r = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        if (weights[i] < 0.0) {
            throw ContractViolation("negative portfolio weight");
        }
        total += weights[i];
        r += weights[i] * next_bar_returns[i];
    }
    if (total > 1.0 + 1e-9) {
        throw ContractViolation("portfolio weights exceed 1");
    }
    state.equity *= 1.0 + r;
    state.weight_history.push_back(weights);
    state.returns.push_back(r);
    return r;
}

double outcome_score(double portfolio_return, double scale) {
    return std::clamp(portfolio_return / scale, -1.0, 1.0);
}

double turnover(std::span<const double> prev, std::span<const double> next) {
    double sum = 0.0;
    for (std::size_t i = 0; i < next.size(); ++i) {
        const double before = i < prev.size() ? prev[i] : 0.0;
        sum += std::abs(next[i] - before);
    }
    return sum;
}

std::vector<double> apply_costs(std::span<const double> returns,
                                const std::vector<std::vector<double>>& weight_history,
                                double cost_bp) {
    if (returns.size() != weight_history.size()) {
        throw ContractViolation("return and weight histories are not aligned");
    }
    if (cost_bp < 0.0) {
        throw ContractViolation("negative transaction cost");
    }
    std::vector<double> out(returns.begin(), returns.end());
    if (cost_bp == 0.0) {
        return out;
    }
    const double c = cost_bp / 1e4;
    const std::vector<double> none;
    for (std::size_t t = 0; t < out.size(); ++t) {
        const auto& prev = t == 0 ? none : weight_history[t - 1];
        out[t] -= c * turnover(prev, weight_history[t]);
    }
    return out;
}

const std::vector<std::string>& MetricsReport::metric_names() {
    static const std::vector<std::string> names = {"sharpe",     "sortino",  "calmar",    "return_pct",
                                                   "max_dd_pct", "win_rate", "tail_ratio"};
    return names;
}

double MetricsReport::get(const std::string& metric) const {
    if (metric == "sharpe") return sharpe;
    if (metric == "sortino") return sortino;
    if (metric == "calmar") return calmar;
    if (metric == "return_pct") return return_pct;
    if (metric == "max_dd_pct") return max_dd_pct;
    if (metric == "win_rate") return win_rate;
    if (metric == "tail_ratio") return tail_ratio;
    throw ConfigError("unknown metric " + metric);
}

bool MetricsReport::is_undefined(const std::string& metric) const {
    return std::find(undefined.begin(), undefined.end(), metric) != undefined.end();
}

Json MetricsReport::to_json() const {
    Json doc = Json::object();
    for (const auto& name : metric_names()) {
        doc[name] = get(name);
    }
    doc["undefined"] = undefined;
    return doc;
}

double percentile(std::span<const double> sorted, double p) {
    if (sorted.empty()) {
        throw ContractViolation("percentile of an empty sample");
    }
    const double pos = p * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

double max_drawdown(std::span<const double> returns) {
    double equity = 1.0;
    double peak = 1.0;
    double worst = 0.0;
    for (double r : returns) {
        equity *= 1.0 + r;
        peak = std::max(peak, equity);
        worst = std::min(worst, equity / peak - 1.0);
    }
    return worst;
}

MetricsReport compute_metrics(std::span<const double> returns) {
    const std::size_t n = returns.size();
    if (n < 2) {
        throw ContractViolation("metrics need at least 2 bars");
    }
    for (double r : returns) {
        if (!std::isfinite(r)) {
            throw ContractViolation("non-finite return in metric input");
        }
    }
    MetricsReport report;
    const double mean = std::accumulate(returns.begin(), returns.end(), 0.0) / static_cast<double>(n);
    double ss = 0.0;
    double downside = 0.0;
    double growth = 1.0;
    std::size_t wins = 0;
    for (double r : returns) {
        ss += (r - mean) * (r - mean);
        const double neg = std::min(r, 0.0);
        downside += neg * neg;
        growth *= 1.0 + r;
        wins += r > 0.0 ? 1 : 0;
    }
    std::vector<double> sorted(returns.begin(), returns.end());
    std::sort(sorted.begin(), sorted.end());
    // A constant series has zero spread; summation rounding must not say otherwise.
    const double sd = sorted.front() == sorted.back() ? 0.0 : std::sqrt(ss / static_cast<double>(n - 1));
    const double sd_down = std::sqrt(downside / static_cast<double>(n));
    const double ann = std::sqrt(kBarsPerYear);
    if (sd > 0.0) {
        report.sharpe = ann * mean / sd;
    } else {
        report.undefined.push_back("sharpe");
    }
    if (sd_down > 0.0) {
        report.sortino = ann * mean / sd_down;
    } else {
        report.undefined.push_back("sortino");
    }
    const double dd = max_drawdown(returns);
    if (dd < 0.0) {
        report.calmar = mean * kBarsPerYear / std::abs(dd);
    } else {
        report.undefined.push_back("calmar");
    }
    report.return_pct = (growth - 1.0) * 100.0;
    report.max_dd_pct = dd * 100.0;
    report.win_rate = static_cast<double>(wins) / static_cast<double>(n);
    const double p95 = percentile(sorted, 0.95);
    const double p5 = percentile(sorted, 0.05);
    if (p5 != 0.0) {
        report.tail_ratio = std::max(p95, 0.0) / std::abs(p5);
    } else {
        report.undefined.push_back("tail_ratio");
    }
    return report;
}

}  // namespace ael::market
