#pragma once

#include <json.hpp>

#include <array>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace reflectqa {

enum class Role { System, User, Assistant };

std::string_view to_string(Role role);
std::optional<Role> parse_role(std::string_view text);

struct ChatMessage {
    Role role = Role::User;
    std::string content;

    friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

inline constexpr double kDefaultTemperature = 0.1;
inline constexpr int kDefaultMaxTokens = 1024;

struct CompletionRequest {
    std::string model;
    std::vector<ChatMessage> messages;  // first message is the system prompt
    double temperature = kDefaultTemperature;
    int max_tokens = kDefaultMaxTokens;
    std::optional<std::int64_t> seed;

    friend bool operator==(const CompletionRequest&, const CompletionRequest&) = default;
};

struct CompletionResult {
    std::string text;
    std::uint64_t prompt_tokens = 0;
    std::uint64_t completion_tokens = 0;
    std::uint64_t latency_ms = 0;
    /// Token counts were estimated as ceil(chars / 4), not reported.
    bool tokens_estimated = false;

    friend bool operator==(const CompletionResult&, const CompletionResult&) = default;
};

enum class ErrorKind {
    Network,          // transport failure or 5xx; retryable
    RateLimited,      // HTTP 429; retryable
    BadResponse,      // other non-success status or unparsable body
    EmptyCompletion,  // response carried no text
    Unscripted,       // scripted backend has no entry for the request
    CacheMiss,        // cache-only backend has no entry for the request
    InvalidRequest,   // request violates its invariants
    RetriesExhausted,
};

std::string_view to_string(ErrorKind kind);

class BackendError : public std::runtime_error {
public:
    BackendError(ErrorKind kind, const std::string& message, std::optional<int> status = std::nullopt,
                 std::optional<double> retry_after_s = std::nullopt)
        : std::runtime_error(std::string(to_string(kind)) + ": " + message),
          kind_(kind),
          status_(status),
          retry_after_s_(retry_after_s) {}

    [[nodiscard]] ErrorKind kind() const { return kind_; }
    [[nodiscard]] bool retryable() const { return kind_ == ErrorKind::Network || kind_ == ErrorKind::RateLimited; }
    [[nodiscard]] std::optional<int> status() const { return status_; }
    [[nodiscard]] std::optional<double> retry_after_s() const { return retry_after_s_; }

private:
    ErrorKind kind_;
    std::optional<int> status_;
    std::optional<double> retry_after_s_;
};

class RetriesExhausted : public BackendError {
public:
    RetriesExhausted(int attempts, const BackendError& last)
        : BackendError(ErrorKind::RetriesExhausted,
                       "gave up after " + std::to_string(attempts) + " attempts; last error: " + last.what()),
          attempts_(attempts),
          last_kind_(last.kind()) {}

    [[nodiscard]] int attempts() const { return attempts_; }
    [[nodiscard]] ErrorKind last_kind() const { return last_kind_; }

private:
    int attempts_;
    ErrorKind last_kind_;
};

/// Throws BackendError(InvalidRequest) unless the request is well formed.
void validate(const CompletionRequest& request);

/// SHA-256 over the canonical JSON of (model, roles, contents, temperature,
/// max_tokens, seed).
std::string fingerprint(const CompletionRequest& request);

/// ceil(code points / 4).
std::uint64_t estimate_tokens(std::string_view text);

nlohmann::json to_json(const CompletionRequest& request);
CompletionRequest request_from_json(const nlohmann::json& json);
nlohmann::json to_json(const CompletionResult& result);
CompletionResult result_from_json(const nlohmann::json& json);

class Backend {
public:
    virtual ~Backend() = default;
    virtual CompletionResult complete(const CompletionRequest& request) = 0;
};

/// Deterministic stand-in for a model endpoint.
///
/// Either a table keyed by request fingerprint or by a substring of the
/// last user message (longest matching key wins), or a responder function.
/// A table entry may name an error to raise instead of text.
class ScriptedBackend : public Backend {
public:
    struct Entry {
        std::string text;
        std::optional<ErrorKind> error;
    };
    using Responder = std::function<std::string(const CompletionRequest&)>;

    explicit ScriptedBackend(std::map<std::string, Entry> script);
    explicit ScriptedBackend(Responder responder);

    /// Loads {"key": "text" | {"text": "..."} | {"error": "network"}}.
    static std::unique_ptr<ScriptedBackend> from_file(const std::filesystem::path& path);

    CompletionResult complete(const CompletionRequest& request) override;

    [[nodiscard]] std::size_t calls() const { return calls_.load(); }

private:
    const Entry* lookup(const CompletionRequest& request) const;

    std::map<std::string, Entry> script_;
    Responder responder_;
    std::atomic<std::size_t> calls_{0};
};

/// Persists results as `{dir}/{fingerprint}.json` and serves repeats from
/// disk. Entries become visible only after a complete write (temp file +
/// rename). In read-only mode a miss raises CacheMiss.
class CachingBackend : public Backend {
public:
    enum class Mode { ReadWrite, ReadOnly };

    CachingBackend(Backend* inner, std::filesystem::path dir, Mode mode = Mode::ReadWrite);

    CompletionResult complete(const CompletionRequest& request) override;

    [[nodiscard]] std::size_t hits() const { return hits_.load(); }
    [[nodiscard]] std::size_t misses() const { return misses_.load(); }
    [[nodiscard]] std::filesystem::path entry_path(const CompletionRequest& request) const;

private:
    std::optional<CompletionResult> read_entry(const std::filesystem::path& path) const;
    void write_entry(const std::filesystem::path& path, const CompletionRequest& request,
                     const CompletionResult& result) const;

    Backend* inner_;
    std::filesystem::path dir_;
    Mode mode_;
    std::array<std::mutex, 64> key_locks_;
    std::atomic<std::size_t> hits_{0};
    std::atomic<std::size_t> misses_{0};
};

struct RetryPolicy {
    int max_attempts = 3;
    std::chrono::milliseconds base_delay{1000};
    double multiplier = 2.0;
};

using Sleeper = std::function<void(std::chrono::milliseconds)>;

/// Calls the backend until success, a non-retryable error (rethrown as is)
/// or max_attempts retryable failures (RetriesExhausted). Delays use
/// exponential backoff with full jitter; a Retry-After hint is honoured as
/// a lower bound.
CompletionResult with_retry(Backend& backend, const CompletionRequest& request, const RetryPolicy& policy,
                            const Sleeper& sleep = {});

class RetryingBackend : public Backend {
public:
    RetryingBackend(Backend* inner, RetryPolicy policy, Sleeper sleep = {})
        : inner_(inner), policy_(policy), sleep_(std::move(sleep)) {}

    CompletionResult complete(const CompletionRequest& request) override {
        return with_retry(*inner_, request, policy_, sleep_);
    }

private:
    Backend* inner_;
    RetryPolicy policy_;
    Sleeper sleep_;
};

/// Process-wide request pacing; at most `requests_per_second` grants per
/// second across all threads. Zero or negative disables pacing.
class RateLimiter {
public:
    explicit RateLimiter(double requests_per_second);
    void acquire();

private:
    std::mutex mutex_;
    std::chrono::steady_clock::duration interval_{};
    std::chrono::steady_clock::time_point next_{};
};

}  // namespace reflectqa
