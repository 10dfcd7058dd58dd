#include "reflectqa/http_backend.hpp"

#include <httplib.h>

#include <cstdlib>

namespace reflectqa {

using nlohmann::json;

namespace {

std::optional<double> parse_retry_after(const httplib::Response& response) {
    if (!response.has_header("Retry-After")) return std::nullopt;
    const std::string value = response.get_header_value("Retry-After");
    char* end = nullptr;
    const double seconds = std::strtod(value.c_str(), &end);
    if (end == value.c_str() || seconds < 0.0) return std::nullopt;
    return seconds;
}

std::string truncate(const std::string& text, std::size_t limit = 300) {
    return text.size() <= limit ? text : text.substr(0, limit) + "...";
}

}  // namespace

HttpBackend::HttpBackend(HttpBackendConfig config)
    : config_(std::move(config)), limiter_(config_.requests_per_second) {
    std::string url = config_.base_url;
    while (!url.empty() && url.back() == '/') url.pop_back();
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
        throw std::invalid_argument("endpoint must start with http:// or https://: " + config_.base_url);
    }
    const std::string scheme = url.substr(0, scheme_end);
    if (scheme != "http" && scheme != "https") {
        throw std::invalid_argument("unsupported endpoint scheme: " + scheme);
    }
    const auto path_start = url.find('/', scheme_end + 3);
    origin_ = url.substr(0, path_start);
    path_prefix_ = path_start == std::string::npos ? "" : url.substr(path_start);
    if (origin_.size() == scheme_end + 3) {
        throw std::invalid_argument("endpoint has no host: " + config_.base_url);
    }
}

CompletionResult parse_chat_response(const CompletionRequest& request, const std::string& body) {
    const json j = json::parse(body, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
        throw BackendError(ErrorKind::BadResponse, "response is not a JSON object: " + truncate(body));
    }
    const auto choices = j.find("choices");
    if (choices == j.end() || !choices->is_array() || choices->empty()) {
        throw BackendError(ErrorKind::BadResponse, "response has no choices: " + truncate(body));
    }
    const json& message = (*choices)[0].value("message", json::object());
    const auto content = message.find("content");
    if (content == message.end() || content->is_null()) {
        throw BackendError(ErrorKind::EmptyCompletion, "first choice has no content");
    }
    if (!content->is_string()) {
        throw BackendError(ErrorKind::BadResponse, "message content is not a string");
    }
    CompletionResult result;
    result.text = content->get<std::string>();
    if (result.text.empty()) {
        throw BackendError(ErrorKind::EmptyCompletion, "first choice content is empty");
    }
    const auto usage = j.find("usage");
    if (usage != j.end() && usage->is_object() && usage->contains("prompt_tokens") &&
        usage->contains("completion_tokens")) {
        result.prompt_tokens = (*usage)["prompt_tokens"].get<std::uint64_t>();
        result.completion_tokens = (*usage)["completion_tokens"].get<std::uint64_t>();
    } else {
        for (const auto& m : request.messages) result.prompt_tokens += estimate_tokens(m.content);
        result.completion_tokens = estimate_tokens(result.text);
        result.tokens_estimated = true;
    }
    return result;
}

CompletionResult HttpBackend::complete(const CompletionRequest& request) {
    validate(request);
    limiter_.acquire();

    httplib::Client client(origin_);
    client.set_connection_timeout(config_.timeout);
    client.set_read_timeout(config_.timeout);
    client.set_write_timeout(config_.timeout);
    if (!config_.api_key.empty()) {
        client.set_bearer_token_auth(config_.api_key);
    }

    const auto start = std::chrono::steady_clock::now();
    const auto response = client.Post(path_prefix_ + "/chat/completions", to_json(request).dump(), "application/json");
    const auto latency = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start);

    if (!response) {
        throw BackendError(ErrorKind::Network, "request to " + origin_ + " failed: " + httplib::to_string(response.error()));
    }
    const int status = response->status;
    if (status == 429) {
        throw BackendError(ErrorKind::RateLimited, "HTTP 429: " + truncate(response->body), status,
                           parse_retry_after(*response));
    }
    if (status >= 500 || status == 408) {
        throw BackendError(ErrorKind::Network, "HTTP " + std::to_string(status) + ": " + truncate(response->body),
                           status);
    }
    if (status < 200 || status >= 300) {
        throw BackendError(ErrorKind::BadResponse, "HTTP " + std::to_string(status) + ": " + truncate(response->body),
                           status);
    }
    CompletionResult result = parse_chat_response(request, response->body);
    result.latency_ms = static_cast<std::uint64_t>(latency.count());
    return result;
}

}  // namespace reflectqa
