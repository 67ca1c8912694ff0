#include "ael/backend.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <sstream>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "ael/errors.hpp"

namespace ael::reflection {

namespace {

const std::map<std::string, std::string>& schemas() {
    static const std::map<std::string, std::string> table = {
        {"reflect",
         "regime: one of bull|bear|flat|mixed\nconfidence: number in [0,1]\n"
         "insight: one line, name tools to rely on and to discount\n"},
        {"distill", "pattern: tool=<name> ticker=<symbol> hit_rate=<0..1> n=<count>   (repeat per pattern)\n"},
        {"cold_start", "prior: <arm id> <alpha> <beta>   (repeat per arm, alpha and beta in [0.5, 10])\n"},
        {"llm_fcc", "planner: [-1,1]\ntools: [-1,1]\nmemory: [-1,1]\nrationale: one line\n"},
        {"evolve_policy", "tiers: comma list of episodic|semantic|procedural\ntop_k: integer\n"
                          "format: full|ranked_truncate|sliding_window\n"},
        {"evolve_planner", "floor: number in (0,0.1]\ngain: number in (0,1]\n"},
    };
    return table;
}

std::string fmt3(double x) {
    char buffer[32];
    std::snprintf(buffer, sizeof(buffer), "%.3f", x);
    return buffer;
}

std::string reply(const std::vector<std::pair<std::string, std::string>>& fields) {
    std::string out = "```response\n";
    for (const auto& [key, value] : fields) {
        out += key + ": " + value + "\n";
    }
    out += "```\n";
    return out;
}

std::string stub_reflect(const Json& p) {
    const auto returns = p.value("index_returns", std::vector<double>{});
    double mean = 0.0;
    for (double r : returns) {
        mean += r;
    }
    const std::size_t n = returns.size();
    mean = n > 0 ? mean / static_cast<double>(n) : 0.0;
    double ss = 0.0;
    for (double r : returns) {
        ss += (r - mean) * (r - mean);
    }
    const double sd = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
    VolTerciles terciles;
    if (p.contains("terciles")) {
        terciles.low = p["terciles"].value("low", 0.0);
        terciles.high = p["terciles"].value("high", 0.0);
    }
    const std::string regime = stub_regime(mean, sd, n, p.value("realized_vol", sd), terciles);

    std::string best;
    std::string worst;
    double best_rate = -1.0;
    double worst_rate = 2.0;
    if (p.contains("tool_accuracy")) {
        for (const auto& [tool, acc] : p["tool_accuracy"].items()) {
            const double hits = acc.value("hits", 0.0);
            const double misses = acc.value("misses", 0.0);
            if (hits + misses < 5.0) {
                continue;
            }
            const double rate = hits / (hits + misses);
            if (rate > best_rate) {
                best_rate = rate;
                best = tool;
            }
            if (rate < worst_rate) {
                worst_rate = rate;
                worst = tool;
            }
        }
    }
    double confidence = 0.0;
    std::string insight = "insufficient tool evidence; regime " + regime;
    if (!best.empty()) {
        confidence = std::clamp(std::abs(best_rate - 0.5) * 2.0, 0.0, 1.0);
        insight = "rely on " + best + " (hit " + fmt3(best_rate) + "); discount " + worst + " (hit " +
                  fmt3(worst_rate) + "); regime " + regime;
    }
    return reply({{"regime", regime}, {"confidence", fmt3(confidence)}, {"insight", insight}});
}

std::string stub_distill(const Json& p) {
    const double min_decided = p.value("min_decided", 5.0);
    const double min_rate = p.value("min_rate", 0.5);
    std::vector<std::pair<std::string, std::string>> lines;
    for (const auto& obs : p.value("observations", Json::array())) {
        const double hits = obs.value("hits", 0.0);
        const double misses = obs.value("misses", 0.0);
        const double decided = hits + misses;
        if (decided < min_decided) {
            continue;
        }
        const double rate = hits / decided;
        if (rate <= min_rate) {
            continue;
        }
        lines.emplace_back("pattern", "tool=" + obs.value("tool", std::string()) + " ticker=" +
                                          obs.value("ticker", std::string()) + " hit_rate=" + fmt3(rate) +
                                          " n=" + std::to_string(static_cast<long long>(decided)));
    }
    if (lines.empty()) {
        lines.emplace_back("note", "no pattern above threshold");
    }
    return reply(lines);
}

std::string stub_cold_start(const Json& p) {
    std::vector<std::pair<std::string, std::string>> lines;
    for (const auto& arm : p.value("arms", Json::array())) {
        const std::string kind = arm.value("kind", std::string());
        std::string prior = "1 1";
        if (kind == "computational" || kind == "retrieval_distilled") {
            prior = "2 1";
        } else if (kind == "data_backed" || kind == "retrieval_none") {
            prior = "1 2";
        }
        lines.emplace_back("prior", arm.value("id", std::string()) + " " + prior);
    }
    if (lines.empty()) {
        lines.emplace_back("note", "no arms");
    }
    return reply(lines);
}

std::string stub_llm_fcc(const Json& p) {
    const Json s = p.value("structural", Json::object());
    double planner = s.value("planner", 0.0);
    double tools = s.value("tools", 0.0);
    const double memory = s.value("memory", 0.0);
    std::string rationale = "no contradiction between tool warnings and the allocation";
    if (p.value("warning_ignored", false)) {
        planner -= 0.1;
        tools += 0.1;
        rationale = "risk tool warning was valid and the planner overrode it";
    }
    return reply({{"planner", fmt3(std::clamp(planner, -1.0, 1.0))},
                  {"tools", fmt3(std::clamp(tools, -1.0, 1.0))},
                  {"memory", fmt3(std::clamp(memory, -1.0, 1.0))},
                  {"rationale", rationale}});
}

std::string stub_evolve_policy(const Json& p) {
    const Json c = p.value("candidate", Json::object());
    std::string tiers;
    for (const auto& t : c.value("tiers", Json::array())) {
        tiers += (tiers.empty() ? "" : ",") + t.get<std::string>();
    }
    return reply({{"tiers", tiers},
                  {"top_k", std::to_string(c.value("top_k", 5))},
                  {"format", c.value("format", std::string("ranked_truncate"))}});
}

std::string stub_evolve_planner(const Json& p) {
    const Json c = p.value("candidate", Json::object());
    return reply({{"floor", fmt3(c.value("floor", 0.05))}, {"gain", fmt3(c.value("gain", 0.1))}});
}

std::string trim(std::string s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) {
        return "";
    }
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

struct ParsedUrl {
    std::string base;  // scheme://host:port
    std::string path;
};

ParsedUrl split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
        throw ConfigError("backend url needs a scheme: " + url);
    }
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) {
        return {url, "/"};
    }
    return {url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace

std::string CompletionRequest::render() const {
    std::ostringstream out;
    out << "### TASK\n" << task << "\n\n";
    out << "### TEMPERATURE\n" << fmt3(temperature) << "\n\n";
    out << "### INPUT\n" << payload.dump(2) << "\n\n";
    out << "### RESPONSE SCHEMA\nReply with exactly one fenced block:\n```response\n";
    auto it = schemas().find(task);
    out << (it == schemas().end() ? "key: value\n" : it->second);
    out << "```\n";
    return out.str();
}

std::multimap<std::string, std::string> parse_response(const std::string& text) {
    const auto open = text.find("```response");
    if (open == std::string::npos) {
        throw ParseError("reply has no ```response block");
    }
    const auto body_start = text.find('\n', open);
    if (body_start == std::string::npos) {
        throw ParseError("unterminated ```response block");
    }
    const auto close = text.find("```", body_start + 1);
    if (close == std::string::npos) {
        throw ParseError("unterminated ```response block");
    }
    std::multimap<std::string, std::string> fields;
    std::istringstream body(text.substr(body_start + 1, close - body_start - 1));
    std::string line;
    while (std::getline(body, line)) {
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        const auto colon = line.find(':');
        if (colon == std::string::npos) {
            throw ParseError("response line without key: " + line);
        }
        fields.emplace(trim(line.substr(0, colon)), trim(line.substr(colon + 1)));
    }
    return fields;
}

std::string response_value(const std::multimap<std::string, std::string>& fields, const std::string& key,
                           const std::string& fallback) {
    auto it = fields.find(key);
    return it == fields.end() ? fallback : it->second;
}

CompletionResponse CompletionBackend::complete(const CompletionRequest& request) {
    ++calls_;
    const std::string prompt = request.render();
    CompletionResponse response = do_complete(request);
    transcript_.emplace_back(prompt, response.text);
    return response;
}

CompletionResponse StubBackend::do_complete(const CompletionRequest& request) {
    const Json& p = request.payload;
    if (request.task == "reflect") return {stub_reflect(p)};
    if (request.task == "distill") return {stub_distill(p)};
    if (request.task == "cold_start") return {stub_cold_start(p)};
    if (request.task == "llm_fcc") return {stub_llm_fcc(p)};
    if (request.task == "evolve_policy") return {stub_evolve_policy(p)};
    if (request.task == "evolve_planner") return {stub_evolve_planner(p)};
    return {reply({{"note", "unknown task " + request.task}})};
}

std::string stub_regime(double window_mean, double window_sd, std::size_t n, double realized_vol,
                        const VolTerciles& terciles) {
    const double se = n > 0 ? window_sd / std::sqrt(static_cast<double>(n)) : 0.0;
    const double t = se > 0.0 ? window_mean / se : (window_mean > 0 ? 1e9 : (window_mean < 0 ? -1e9 : 0.0));
    if (std::abs(t) < 1.0) {
        return "flat";
    }
    const bool low_vol = realized_vol <= terciles.low;
    const bool high_vol = realized_vol > terciles.high;
    if (t > 0.0) {
        return high_vol ? "mixed" : "bull";
    }
    return low_vol ? "mixed" : "bear";
}

HttpSettings HttpSettings::from_environment() {
    HttpSettings s;
    if (const char* url = std::getenv("AEL_BACKEND_URL")) {
        s.url = url;
    }
    if (const char* key = std::getenv("AEL_BACKEND_KEY")) {
        s.api_key = key;
    }
    if (const char* model = std::getenv("AEL_BACKEND_MODEL")) {
        s.model = model;
    }
    if (s.url.empty()) {
        throw ConfigError("http backend selected but AEL_BACKEND_URL is not set");
    }
    return s;
}

HttpBackend::HttpBackend(HttpSettings settings) : settings_(std::move(settings)) {
    split_url(settings_.url);
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
    if (settings_.url.rfind("https://", 0) == 0) {
        throw ConfigError("https backend url needs a build with OpenSSL");
    }
#endif
}

CompletionResponse HttpBackend::do_complete(const CompletionRequest& request) {
    const ParsedUrl url = split_url(settings_.url);
    Json body = {{"temperature", request.temperature},
                 {"messages", Json::array({{{"role", "user"}, {"content", request.render()}}})}};
    if (!settings_.model.empty()) {
        body["model"] = settings_.model;
    }
    httplib::Headers headers;
    if (!settings_.api_key.empty()) {
        headers.emplace("Authorization", "Bearer " + settings_.api_key);
    }
    std::string last_error;
    for (int attempt = 0; attempt <= settings_.retries; ++attempt) {
        httplib::Client client(url.base);
        client.set_connection_timeout(settings_.timeout_seconds, 0);
        client.set_read_timeout(settings_.timeout_seconds, 0);
        auto res = client.Post(url.path, headers, body.dump(), "application/json");
        if (!res) {
            last_error = httplib::to_string(res.error());
        } else if (res->status != 200) {
            last_error = "HTTP " + std::to_string(res->status);
        } else {
            const Json doc = Json::parse(res->body, nullptr, false);
            if (doc.is_discarded()) {
                return {res->body};
            }
            if (doc.contains("choices") && !doc["choices"].empty()) {
                return {doc["choices"][0]["message"].value("content", std::string())};
            }
            if (doc.contains("content") && doc["content"].is_array() && !doc["content"].empty()) {
                return {doc["content"][0].value("text", std::string())};
            }
            if (doc.contains("text") && doc["text"].is_string()) {
                return {doc["text"].get<std::string>()};
            }
            return {res->body};
        }
        spdlog::warn("backend attempt {} failed: {}", attempt + 1, last_error);
    }
    throw BackendError("backend request failed: " + last_error);
}

std::unique_ptr<CompletionBackend> make_backend(const std::string& kind) {
    if (kind == "stub") {
        return std::make_unique<StubBackend>();
    }
    if (kind == "http") {
        return std::make_unique<HttpBackend>(HttpSettings::from_environment());
    }
    throw ConfigError("unknown backend '" + kind + "' (expected stub or http)");
}

}  // namespace ael::reflection
