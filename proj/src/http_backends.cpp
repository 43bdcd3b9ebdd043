#include "feddtpt/http_backends.hpp"

#include <chrono>
#include <cstdlib>
#include <sstream>
#include <thread>
#include <utility>

#include <httplib.h>
#include <json.hpp>

#include "feddtpt/errors.hpp"

namespace feddtpt {

namespace {

using nlohmann::json;

// One POST with the shared retry policy: transport failures and 5xx responses
// retry with exponential backoff; 4xx rejects immediately; anything else is
// returned to the caller for protocol-level parsing.
httplib::Response post_with_retries(const HttpOptions& options, const std::string& body) {
    auto [base, path] = split_url(options.endpoint_url);
    httplib::Headers headers;
    std::string key = resolve_api_key(options.api_key);
    if (!key.empty()) headers.emplace("Authorization", "Bearer " + key);

    int attempts = options.max_retries < 1 ? 1 : options.max_retries;
    std::string last_failure = "no attempt made";
    for (int attempt = 1; attempt <= attempts; ++attempt) {
        if (attempt > 1) {
            auto delay = std::chrono::milliseconds(
                static_cast<long long>(options.backoff_base_ms) << (attempt - 2));
            std::this_thread::sleep_for(delay);
        }
        // A fresh client per attempt keeps this callable from concurrent
        // workers without shared mutable state.
        httplib::Client client(base);
        auto timeout = std::chrono::milliseconds(options.timeout_ms);
        client.set_connection_timeout(timeout);
        client.set_read_timeout(timeout);
        client.set_write_timeout(timeout);

        auto result = client.Post(path, headers, body, "application/json");
        if (!result) {
            last_failure = "transport error: " + httplib::to_string(result.error());
            continue;
        }
        if (result->status >= 500) {
            last_failure = "server error: HTTP " + std::to_string(result->status);
            continue;
        }
        if (result->status >= 400) {
            throw BackendRejectedError(result->status,
                                       "endpoint rejected request with HTTP " +
                                           std::to_string(result->status) + ": " + result->body);
        }
        return *result;
    }
    throw BackendUnavailableError("endpoint " + options.endpoint_url + " unavailable after " +
                                  std::to_string(attempts) + " attempts (" + last_failure + ")");
}

json parse_body(const httplib::Response& response) {
    json parsed = json::parse(response.body, nullptr, false);
    if (parsed.is_discarded())
        throw ProtocolError("response body is not valid JSON: " + response.body);
    return parsed;
}

class HttpPredictionBackend final : public PredictionBackend {
  public:
    explicit HttpPredictionBackend(HttpOptions options) : options_(std::move(options)) {}

    std::string predict(const std::string& rendered_text) const override {
        json body = {
            {"model", options_.model_name},
            {"messages", json::array({json{{"role", "user"}, {"content", rendered_text}}})},
            {"temperature", 0},
            {"max_tokens", 16},
        };
        auto response = post_with_retries(options_, body.dump());
        json parsed = parse_body(response);
        if (!parsed.contains("choices") || !parsed["choices"].is_array() ||
            parsed["choices"].empty())
            throw ProtocolError("response has no choices: " + response.body);
        const json& first = parsed["choices"][0];
        if (!first.contains("message") || !first["message"].contains("content") ||
            !first["message"]["content"].is_string())
            throw ProtocolError("choice has no message content: " + response.body);
        return first["message"]["content"].get<std::string>();
    }

    std::string name() const override { return "http:" + options_.endpoint_url; }

  private:
    HttpOptions options_;
};

class HttpMlmBackend final : public MlmBackend {
  public:
    explicit HttpMlmBackend(HttpOptions options) : options_(std::move(options)) {}

    std::vector<Token> propose(const Prompt& prompt, int mask_position,
                               const FeedbackInfo& feedback, int num_candidates) const override {
        if (mask_position < 0 || mask_position >= prompt.size())
            throw PositionError("mask position " + std::to_string(mask_position) +
                                " out of range for prompt of size " +
                                std::to_string(prompt.size()));
        if (num_candidates < 1) throw ConfigError("num_candidates must be >= 1");

        std::string masked;
        for (int i = 0; i < prompt.size(); ++i) {
            if (i > 0) masked += ' ';
            masked += i == mask_position ? kMaskMarker
                                         : prompt.tokens()[static_cast<size_t>(i)].text();
        }
        json body = {
            {"model", options_.model_name},
            {"text", masked},
            {"context", feedback_summary(feedback)},
            {"num_candidates", num_candidates},
        };
        auto response = post_with_retries(options_, body.dump());
        json parsed = parse_body(response);
        if (!parsed.is_array())
            throw ProtocolError("fill-mask response is not an array: " + response.body);

        std::vector<std::pair<std::string, double>> scored;
        for (const json& entry : parsed) {
            if (!entry.is_object() || !entry.contains("token") || !entry["token"].is_string())
                throw ProtocolError("candidate entry missing token field: " + entry.dump());
            if (!entry.contains("score") || !entry["score"].is_number())
                throw ProtocolError("candidate entry missing score field: " + entry.dump());
            scored.emplace_back(entry["token"].get<std::string>(), entry["score"].get<double>());
        }
        std::stable_sort(scored.begin(), scored.end(),
                         [](const auto& a, const auto& b) { return a.second > b.second; });
        if (scored.size() > static_cast<size_t>(num_candidates))
            scored.resize(static_cast<size_t>(num_candidates));

        const std::string& current =
            prompt.tokens()[static_cast<size_t>(mask_position)].text();
        std::vector<Token> candidates;
        for (const auto& [token, score] : scored)
            if (token != current) candidates.emplace_back(token);
        if (candidates.empty())
            throw NoCandidatesError("no candidates besides the current token at position " +
                                    std::to_string(mask_position));
        return candidates;
    }

  private:
    HttpOptions options_;
};

}  // namespace

std::string resolve_api_key(const std::string& configured) {
    const char* env = std::getenv("FEDDTPT_API_KEY");
    if (env != nullptr && *env != '\0') return env;
    return configured;
}

std::pair<std::string, std::string> split_url(const std::string& url) {
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos)
        throw ConfigError("endpoint URL has no scheme: " + url);
    auto path_start = url.find('/', scheme_end + 3);
    if (scheme_end + 3 == (path_start == std::string::npos ? url.size() : path_start))
        throw ConfigError("endpoint URL has no host: " + url);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

std::string feedback_summary(const FeedbackInfo& feedback) {
    std::ostringstream out;
    size_t total = feedback.modifications.size();
    size_t start = total > 5 ? total - 5 : 0;
    for (size_t i = start; i < total; ++i) {
        const Modification& mod = feedback.modifications[i];
        out << "iteration " << mod.iteration << ": replaced '" << mod.old_token.text()
            << "' at position " << mod.position << " with '" << mod.new_token.text() << "'";
        size_t idx = static_cast<size_t>(mod.iteration) - 1;
        if (mod.iteration >= 1 && idx < feedback.accuracies.size()) {
            char buf[32];
            std::snprintf(buf, sizeof buf, "%.4f", feedback.accuracies[idx]);
            out << ", accuracy " << buf;
        }
        out << "\n";
    }
    char best[32];
    std::snprintf(best, sizeof best, "%.4f", feedback.best_accuracy);
    out << "best accuracy so far: " << best << "\n";
    return out.str();
}

std::unique_ptr<PredictionBackend> http_prediction_backend(HttpOptions options) {
    split_url(options.endpoint_url);  // validate eagerly
    return std::make_unique<HttpPredictionBackend>(std::move(options));
}

std::unique_ptr<MlmBackend> http_mlm_backend(HttpOptions options) {
    split_url(options.endpoint_url);
    return std::make_unique<HttpMlmBackend>(std::move(options));
}

}  // namespace feddtpt
