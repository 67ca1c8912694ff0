#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "ael/canonical.hpp"

namespace ael::reflection {

// One completion exchange. The payload is the structured input; render()
// turns it into the labelled-section text a remote model receives.
struct CompletionRequest {
    std::string task;  // reflect | distill | cold_start | llm_fcc | evolve_policy | evolve_planner
    Json payload = Json::object();
    double temperature = 0.3;

    std::string render() const;
};

struct CompletionResponse {
    std::string text;
};

// Reply schema: a fenced block opened by ```response with one `key: value`
// per line. Keys may repeat. Throws ParseError when the block is missing.
std::multimap<std::string, std::string> parse_response(const std::string& text);

// First value for key, or fallback.
std::string response_value(const std::multimap<std::string, std::string>& fields, const std::string& key,
                           const std::string& fallback = "");

class CompletionBackend {
public:
    virtual ~CompletionBackend() = default;

    // Counts the call and keeps the verbatim exchange for the audit log.
    CompletionResponse complete(const CompletionRequest& request);

    virtual std::string name() const = 0;

    std::size_t calls() const { return calls_; }
    const std::vector<std::pair<std::string, std::string>>& transcript() const { return transcript_; }

protected:
    virtual CompletionResponse do_complete(const CompletionRequest& request) = 0;

private:
    std::size_t calls_ = 0;
    std::vector<std::pair<std::string, std::string>> transcript_;
};

// Deterministic rule tables standing in for the model. Total: every task
// gets a well-formed reply.
class StubBackend final : public CompletionBackend {
public:
    std::string name() const override { return "stub"; }

protected:
    CompletionResponse do_complete(const CompletionRequest& request) override;
};

struct HttpSettings {
    std::string url;  // scheme://host[:port]/path
    std::string api_key;
    std::string model;
    int timeout_seconds = 60;
    int retries = 2;

    // AEL_BACKEND_URL, AEL_BACKEND_KEY, AEL_BACKEND_MODEL
    static HttpSettings from_environment();
};

// Chat-completions style JSON exchange; the rendered request is the single
// user message. Failures surface as BackendError after the retries run out.
class HttpBackend final : public CompletionBackend {
public:
    explicit HttpBackend(HttpSettings settings);
    std::string name() const override { return "http"; }

protected:
    CompletionResponse do_complete(const CompletionRequest& request) override;

private:
    HttpSettings settings_;
};

std::unique_ptr<CompletionBackend> make_backend(const std::string& kind);

// ---- stub rule tables, exposed for tests ---------------------------------------

struct VolTerciles {
    double low = 0.0;   // vol <= low -> bottom tercile
    double high = 0.0;  // vol > high -> top tercile
};

// flat when |t| < 1; positive mean: bull unless vol is in the top tercile
// (mixed); negative mean: bear unless vol is in the bottom tercile (mixed).
std::string stub_regime(double window_mean, double window_sd, std::size_t n, double realized_vol,
                        const VolTerciles& terciles);

}  // namespace ael::reflection
