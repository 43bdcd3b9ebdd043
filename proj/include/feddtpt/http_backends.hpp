#pragma once

#include <memory>
#include <string>

#include "feddtpt/backends.hpp"

namespace feddtpt {

/// Connection settings shared by the HTTP-backed prediction and MLM clients.
///
/// `endpoint_url` is the full request URL (scheme://host[:port]/path). The
/// effective API key is resolved at call time: the FEDDTPT_API_KEY environment
/// variable, when set and non-empty, overrides `api_key`. `max_retries` is the
/// total number of attempts; the delay before the i-th retry is
/// `backoff_base_ms * 2^(i-1)` milliseconds. Tests shrink `backoff_base_ms`
/// to keep retry scenarios fast.
struct HttpOptions {
    std::string endpoint_url;
    std::string api_key;
    std::string model_name;
    int timeout_ms = 30000;
    int max_retries = 3;
    int backoff_base_ms = 1000;
};

/// The literal marker substituted at the masked position in MLM requests.
inline constexpr const char* kMaskMarker = "[MASK]";

/// Returns the API key to send: FEDDTPT_API_KEY when set and non-empty,
/// otherwise the configured value (possibly empty, meaning unauthenticated).
std::string resolve_api_key(const std::string& configured);

/// Splits a URL into (scheme://host[:port], /path). Throws ConfigError when
/// the URL has no scheme or host.
std::pair<std::string, std::string> split_url(const std::string& url);

/// Renders the feedback context sent to the MLM service: one line per
/// modification for the most recent five, each with its accuracy.
std::string feedback_summary(const FeedbackInfo& feedback);

/// Chat-completion-style prediction client. Each predict() call POSTs
/// {model, messages:[{role:"user", content}], temperature:0, max_tokens:16}
/// and returns the first choice's message content. Transport failures and
/// 5xx responses are retried with exponential backoff up to max_retries
/// attempts (BackendUnavailableError once exhausted); 4xx responses raise
/// BackendRejectedError immediately; unparseable success bodies raise
/// ProtocolError.
std::unique_ptr<PredictionBackend> http_prediction_backend(HttpOptions options);

/// Fill-mask-style proposal client. Each propose() call POSTs
/// {model, text, context, num_candidates} where `text` is the prompt with the
/// masked position replaced by kMaskMarker and `context` is
/// feedback_summary(). The response is a JSON array of {token, score}
/// objects; candidates are ordered by descending score, truncated to
/// num_candidates, and the current token is removed. An empty list after
/// filtering raises NoCandidatesError. Retry taxonomy matches the prediction
/// client.
std::unique_ptr<MlmBackend> http_mlm_backend(HttpOptions options);

}  // namespace feddtpt
