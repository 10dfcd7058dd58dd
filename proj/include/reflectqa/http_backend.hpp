#pragma once

#include "reflectqa/llm_backend.hpp"

#include <chrono>
#include <memory>
#include <string>

namespace reflectqa {

struct HttpBackendConfig {
    /// Base URL such as "https://api.example.com/v1"; requests go to
    /// "{base_url}/chat/completions".
    std::string base_url;
    std::string api_key;
    std::chrono::seconds timeout{120};
    /// Requests per second across all threads; 0 disables pacing.
    double requests_per_second = 0.0;
};

/// Client for OpenAI-compatible chat-completion endpoints.
class HttpBackend : public Backend {
public:
    explicit HttpBackend(HttpBackendConfig config);

    CompletionResult complete(const CompletionRequest& request) override;

private:
    HttpBackendConfig config_;
    std::string origin_;       // scheme://host[:port]
    std::string path_prefix_;  // e.g. "/v1"
    RateLimiter limiter_;
};

/// Parses a chat-completions response body. Throws BadResponse when the
/// body is not the expected shape and EmptyCompletion when the content is
/// empty. Missing usage falls back to estimated token counts.
CompletionResult parse_chat_response(const CompletionRequest& request, const std::string& body);

}  // namespace reflectqa
