#include "ael/cli.hpp"

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "ael/errors.hpp"
#include "ael/harness.hpp"

#ifndef AEL_VERSION
#define AEL_VERSION "0.0.0"
#endif

namespace ael::cli {

namespace fs = std::filesystem;

namespace {

struct Options {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string seeds;
    std::optional<double> cost_bp;
    std::string output = "ael_out";
    std::string backend;
    std::string preset;
    std::string data;
    std::string returns_path;
    std::string input;
};

std::string utc_now() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buffer[32];
    std::strftime(buffer, sizeof(buffer), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buffer;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
    out << text;
}

void write_json(const fs::path& path, const Json& doc) { write_text(path, canonical_dump(doc) + "\n"); }

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
    std::vector<std::uint64_t> seeds;
    std::stringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        try {
            std::size_t used = 0;
            seeds.push_back(std::stoull(item, &used));
            if (used != item.size()) {
                throw std::invalid_argument(item);
            }
        } catch (const std::exception&) {
            throw ConfigError("bad seed '" + item + "' in --seeds");
        }
    }
    if (seeds.empty()) {
        throw ConfigError("--seeds is empty");
    }
    return seeds;
}

// Config file first, then presets, then flag overrides.
RunConfig resolve(const Options& opt) {
    RunConfig cfg = opt.config_path.empty() ? RunConfig{} : load_config(opt.config_path);
    if (!opt.preset.empty()) {
        cfg = preset(opt.preset, cfg);
    }
    if (!opt.seeds.empty()) {
        cfg.seeds = parse_seed_list(opt.seeds);
    }
    if (opt.seed) {
        cfg.seed = *opt.seed;
        cfg.seeds = {*opt.seed};
    }
    if (opt.cost_bp) {
        cfg.cost_bp = *opt.cost_bp;
    }
    if (!opt.backend.empty()) {
        cfg.backend = opt.backend;
    }
    if (!opt.data.empty()) {
        cfg.data_csv = opt.data;
    }
    cfg.validate();
    if (!cfg.data_csv.empty() && !fs::exists(cfg.data_csv)) {
        throw ConfigError("data file not found: " + cfg.data_csv);
    }
    return cfg;
}

Json manifest(const std::string& command, const RunConfig& cfg, const std::vector<std::string>& digests,
              const std::string& started, double seconds) {
    return {{"command", command},
            {"version", version()},
            {"config", cfg.to_json()},
            {"seeds", cfg.seeds},
            {"data_hashes", digests},
            {"started_utc", started},
            {"wall_clock_seconds", seconds}};
}

double elapsed(std::chrono::steady_clock::time_point since) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - since).count();
}

std::string slug(const std::string& name) {
    std::string out;
    for (char c : name) {
        if (std::isalnum(static_cast<unsigned char>(c))) {
            out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        } else if (!out.empty() && out.back() != '-') {
            out += '-';
        }
    }
    while (!out.empty() && out.back() == '-') {
        out.pop_back();
    }
    return out.empty() ? "base" : out;
}

std::string csv_number(double x) {
    char buffer[40];
    std::snprintf(buffer, sizeof(buffer), "%.12g", canonical_number(x));
    return buffer;
}

std::string metrics_csv_header() {
    std::string h = "name";
    for (const auto& m : market::MetricsReport::metric_names()) {
        h += "," + m;
    }
    return h + "\n";
}

std::string metrics_csv_row(const std::string& name, const market::MetricsReport& r) {
    std::string row = name;
    for (const auto& m : market::MetricsReport::metric_names()) {
        row += "," + csv_number(r.get(m));
    }
    return row + "\n";
}

int cmd_run(const Options& opt) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::string started = utc_now();
    const RunConfig cfg = resolve(opt);
    fs::create_directories(opt.output);
    const auto results = harness::run_seeds(cfg, cfg.seeds);
    std::vector<market::MetricsReport> reports;
    std::vector<std::string> digests;
    for (const auto& r : results) {
        write_json(fs::path(opt.output) / ("result_" + std::to_string(r.seed) + ".json"), r.to_json());
        reports.push_back(r.test.metrics);
        digests.push_back(r.data_digest);
    }
    write_json(fs::path(opt.output) / "aggregate.json", harness::aggregate(reports, cfg.seeds).to_json());
    write_json(fs::path(opt.output) / "manifest.json", manifest("run", cfg, digests, started, elapsed(t0)));
    for (const auto& r : results) {
        std::cout << "seed " << r.seed << ": test sharpe " << csv_number(r.test.metrics.sharpe) << "\n";
    }
    return kOk;
}

int cmd_ablate(const Options& opt) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::string started = utc_now();
    const RunConfig cfg = resolve(opt);
    fs::create_directories(opt.output);
    const auto table = harness::run_ablation(cfg, cfg.seeds);
    std::vector<std::string> digests;
    for (std::size_t k = 0; k < table.rows.size(); ++k) {
        const fs::path dir = fs::path(opt.output) / slug(table.rows[k].variant);
        fs::create_directories(dir);
        for (const auto& r : table.results[k]) {
            write_json(dir / ("result_" + std::to_string(r.seed) + ".json"), r.to_json());
            if (k == 0) {
                digests.push_back(r.data_digest);
            }
        }
    }
    write_json(fs::path(opt.output) / "ablation.json", table.to_json());
    write_text(fs::path(opt.output) / "ablation.csv", table.to_csv());
    write_json(fs::path(opt.output) / "manifest.json", manifest("ablate", cfg, digests, started, elapsed(t0)));
    std::cout << table.to_csv();
    return kOk;
}

int cmd_baselines(const Options& opt) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::string started = utc_now();
    const RunConfig cfg = resolve(opt);
    fs::create_directories(opt.output);
    Json doc = Json::object();
    std::string csv = "seed," + metrics_csv_header();
    std::vector<std::string> digests;
    for (std::uint64_t seed : cfg.seeds) {
        RunConfig c = cfg;
        c.seed = seed;
        const auto env = harness::build_environment(c, seed);
        digests.push_back(env.series.digest());
        Json rows = Json::object();
        for (const auto& b : harness::run_baselines(env)) {
            rows[b.name] = b.metrics.to_json();
            csv += std::to_string(seed) + "," + metrics_csv_row(b.name, b.metrics);
        }
        doc[std::to_string(seed)] = rows;
    }
    write_json(fs::path(opt.output) / "baselines.json", doc);
    write_text(fs::path(opt.output) / "baselines.csv", csv);
    write_json(fs::path(opt.output) / "manifest.json", manifest("baselines", cfg, digests, started, elapsed(t0)));
    std::cout << csv;
    return kOk;
}

int cmd_synth(const Options& opt) {
    const RunConfig cfg = resolve(opt);
    fs::create_directories(opt.output);
    const auto synth = market::planted_market_config(cfg.history);
    const auto series = market::synth_generate(synth, cfg.seed);
    const fs::path path = fs::path(opt.output) / ("market_" + std::to_string(cfg.seed) + ".csv");
    market::write_csv(series, path.string());
    std::string regimes = "timestamp,regime\n";
    const auto labels = synth.regime_path();
    for (std::size_t t = 0; t < series.num_bars(); ++t) {
        regimes += market::format_timestamp(series.timestamps[t]) + "," + labels[t] + "\n";
    }
    write_text(fs::path(opt.output) / ("regimes_" + std::to_string(cfg.seed) + ".csv"), regimes);
    std::cout << path.string() << "\n";
    return kOk;
}

// Reads a returns series from a result file (test returns) or from a text
// file holding one number per line.
std::vector<double> read_returns(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("returns file not found: " + path);
    }
    std::stringstream buffer;
    buffer << in.rdbuf();
    const std::string text = buffer.str();
    if (fs::path(path).extension() == ".json") {
        try {
            const Json doc = Json::parse(text);
            return doc.at("test").at("returns").get<std::vector<double>>();
        } catch (const Json::exception& err) {
            throw ParseError(std::string("result file: ") + err.what(), 0);
        }
    }
    std::vector<double> out;
    std::istringstream lines(text);
    std::string line;
    std::size_t number = 0;
    while (std::getline(lines, line)) {
        ++number;
        if (line.empty() || line == "return") {
            continue;
        }
        try {
            out.push_back(std::stod(line));
        } catch (const std::exception&) {
            throw ParseError("returns file: not a number: '" + line + "'", number);
        }
    }
    return out;
}

int cmd_metrics(const Options& opt) {
    if (opt.returns_path.empty()) {
        throw ConfigError("metrics needs --returns");
    }
    const auto returns = read_returns(opt.returns_path);
    const Json doc = market::compute_metrics(returns).to_json();
    fs::create_directories(opt.output);
    write_json(fs::path(opt.output) / "metrics.json", doc);
    std::cout << canonical_dump(doc) << "\n";
    return kOk;
}

// Series behind the comparison, incremental-build and ablation bar charts.
int cmd_plot_data(const Options& opt) {
    const RunConfig cfg = resolve(opt);
    fs::create_directories(opt.output);
    std::string comparison = "method,sharpe_mean,sharpe_std\n";
    std::string incremental = comparison;
    for (const auto& name : preset_names()) {
        const auto results = harness::run_seeds(preset(name, cfg), cfg.seeds);
        std::vector<market::MetricsReport> reports;
        for (const auto& r : results) {
            reports.push_back(r.test.metrics);
        }
        const auto agg = harness::aggregate(reports, cfg.seeds);
        const std::string row = name + "," + csv_number(agg.metrics.at("sharpe").mean) + "," +
                                csv_number(agg.metrics.at("sharpe").std) + "\n";
        incremental += row;
        comparison += row;
    }
    std::map<std::string, std::vector<market::MetricsReport>> baseline_reports;
    for (std::uint64_t seed : cfg.seeds) {
        RunConfig c = cfg;
        c.seed = seed;
        for (const auto& b : harness::run_baselines(harness::build_environment(c, seed))) {
            baseline_reports[b.name].push_back(b.metrics);
        }
    }
    for (const auto& [name, reports] : baseline_reports) {
        const auto agg = harness::aggregate(reports, cfg.seeds);
        comparison += name + "," + csv_number(agg.metrics.at("sharpe").mean) + "," +
                      csv_number(agg.metrics.at("sharpe").std) + "\n";
    }
    write_text(fs::path(opt.output) / "incremental.csv", incremental);
    write_text(fs::path(opt.output) / "comparison.csv", comparison);
    if (!opt.input.empty()) {
        const fs::path source = fs::path(opt.input) / "ablation.json";
        std::ifstream in(source);
        if (!in) {
            throw ConfigError("ablation table not found: " + source.string());
        }
        const Json doc = Json::parse(in);
        std::string bars = "configuration,sharpe_mean,sharpe_std,delta_sharpe\n";
        for (const auto& row : doc.at("rows")) {
            bars += "\"" + row.at("configuration").get<std::string>() + "\"," +
                    csv_number(row.at("sharpe").get<double>()) + "," + csv_number(row.at("sharpe_std").get<double>()) +
                    "," + csv_number(row.at("delta_sharpe").get<double>()) + "\n";
        }
        write_text(fs::path(opt.output) / "ablation_bars.csv", bars);
    }
    std::cout << comparison;
    return kOk;
}

void add_common(CLI::App* sub, Options& opt) {
    sub->add_option("--config", opt.config_path, "INI config file");
    sub->add_option("--seed", opt.seed, "single seed (replaces the seed list)");
    sub->add_option("--seeds", opt.seeds, "comma-separated seed list");
    sub->add_option("--cost-bp", opt.cost_bp, "transaction cost in basis points");
    sub->add_option("--output", opt.output, "output directory");
    sub->add_option("--backend", opt.backend, "completion backend")->check(CLI::IsMember({"stub", "http"}));
    sub->add_option("--data", opt.data, "OHLCV csv (overrides data.csv)");
}

}  // namespace

std::string version() { return AEL_VERSION; }

int main(const std::vector<std::string>& args) {
    CLI::App app{"Adaptive experience-learning agent: experiments, ablations and baselines"};
    app.require_subcommand(1);
    app.set_version_flag("--version", version());
    Options opt;

    auto* run = app.add_subcommand("run", "train, validate and test over each seed");
    add_common(run, opt);
    run->add_option("--preset", opt.preset, "Stateless, +Tools, +Memory or AEL")
        ->check(CLI::IsMember(preset_names()));
    auto* ablate = app.add_subcommand("ablate", "main configuration plus the nine single-change variants");
    add_common(ablate, opt);
    auto* baselines = app.add_subcommand("baselines", "non-learning allocators over the test split");
    add_common(baselines, opt);
    auto* synth = app.add_subcommand("synth-data", "write the planted market as csv");
    add_common(synth, opt);
    auto* metrics = app.add_subcommand("metrics", "recompute the seven metrics from a returns file");
    metrics->add_option("--returns", opt.returns_path, "result json or one return per line")->required();
    metrics->add_option("--output", opt.output, "output directory");
    auto* plot = app.add_subcommand("plot-data", "csv series behind the Sharpe bar charts");
    add_common(plot, opt);
    plot->add_option("--input", opt.input, "directory holding ablation.json");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kConfig;
    }

    try {
        if (run->parsed()) return cmd_run(opt);
        if (ablate->parsed()) return cmd_ablate(opt);
        if (baselines->parsed()) return cmd_baselines(opt);
        if (synth->parsed()) return cmd_synth(opt);
        if (metrics->parsed()) return cmd_metrics(opt);
        if (plot->parsed()) return cmd_plot_data(opt);
    } catch (const ConfigError& err) {
        std::cerr << "config error: " << err.what() << "\n";
        return kConfig;
    } catch (const ParseError& err) {
        std::cerr << "input error: " << err.what() << "\n";
        return kConfig;
    } catch (const AlignmentError& err) {
        std::cerr << "input error: " << err.what() << "\n";
        return kConfig;
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << "\n";
        return kRuntime;
    }
    return kConfig;
}

int main(int argc, const char* const* argv) {
    std::vector<std::string> args;
    for (int k = 1; k < argc; ++k) {
        args.emplace_back(argv[k]);
    }
    return main(args);
}

}  // namespace ael::cli
