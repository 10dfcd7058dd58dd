#include "reflectqa/llm_backend.hpp"

#include "reflectqa/hashing.hpp"

#include <algorithm>
#include <cmath>
#include <ctime>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <thread>

namespace reflectqa {

using nlohmann::json;

namespace {

std::string utc_timestamp() {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buffer[32];
    std::strftime(buffer, sizeof buffer, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buffer;
}

std::uint64_t elapsed_ms(std::chrono::steady_clock::time_point start) {
    return static_cast<std::uint64_t>(
        std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start).count());
}

std::optional<ErrorKind> parse_error_kind(std::string_view text) {
    if (text == "network") return ErrorKind::Network;
    if (text == "rate_limit" || text == "rate_limited") return ErrorKind::RateLimited;
    if (text == "bad_response") return ErrorKind::BadResponse;
    if (text == "empty") return ErrorKind::EmptyCompletion;
    return std::nullopt;
}

bool is_fingerprint(std::string_view key) {
    return key.size() == 64 &&
           std::all_of(key.begin(), key.end(), [](char c) { return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f'); });
}

}  // namespace

std::string_view to_string(Role role) {
    switch (role) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
    }
    return "user";
}

std::optional<Role> parse_role(std::string_view text) {
    for (auto r : {Role::System, Role::User, Role::Assistant}) {
        if (to_string(r) == text) return r;
    }
    return std::nullopt;
}

std::string_view to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::Network: return "NetworkError";
    case ErrorKind::RateLimited: return "RateLimited";
    case ErrorKind::BadResponse: return "BadResponse";
    case ErrorKind::EmptyCompletion: return "EmptyCompletion";
    case ErrorKind::Unscripted: return "UnscriptedRequest";
    case ErrorKind::CacheMiss: return "CacheMiss";
    case ErrorKind::InvalidRequest: return "InvalidRequest";
    case ErrorKind::RetriesExhausted: return "RetriesExhausted";
    }
    return "BackendError";
}

void validate(const CompletionRequest& request) {
    if (request.messages.empty()) {
        throw BackendError(ErrorKind::InvalidRequest, "no messages");
    }
    if (request.messages.front().role != Role::System) {
        throw BackendError(ErrorKind::InvalidRequest, "first message must be the system prompt");
    }
    for (const auto& m : request.messages) {
        if (m.content.empty()) {
            throw BackendError(ErrorKind::InvalidRequest, "empty message content");
        }
    }
    if (!(request.temperature >= 0.0 && request.temperature <= 2.0)) {
        throw BackendError(ErrorKind::InvalidRequest, "temperature outside [0, 2]");
    }
    if (request.max_tokens <= 0) {
        throw BackendError(ErrorKind::InvalidRequest, "max_tokens must be positive");
    }
}

std::string fingerprint(const CompletionRequest& request) {
    json messages = json::array();
    for (const auto& m : request.messages) {
        messages.push_back(json::array({to_string(m.role), m.content}));
    }
    const json canonical{
        {"model", request.model},
        {"messages", messages},
        {"temperature", request.temperature},
        {"max_tokens", request.max_tokens},
        {"seed", request.seed ? json(*request.seed) : json()},
    };
    return sha256_hex(canonical.dump(-1, ' ', false, json::error_handler_t::replace));
}

std::uint64_t estimate_tokens(std::string_view text) {
    std::uint64_t code_points = 0;
    for (char c : text) {
        if ((static_cast<unsigned char>(c) & 0xC0) != 0x80) ++code_points;
    }
    return (code_points + 3) / 4;
}

json to_json(const CompletionRequest& request) {
    json messages = json::array();
    for (const auto& m : request.messages) {
        messages.push_back({{"role", to_string(m.role)}, {"content", m.content}});
    }
    json out{{"model", request.model},
             {"messages", messages},
             {"temperature", request.temperature},
             {"max_tokens", request.max_tokens}};
    if (request.seed) out["seed"] = *request.seed;
    return out;
}

CompletionRequest request_from_json(const json& j) {
    CompletionRequest request;
    request.model = j.at("model").get<std::string>();
    for (const auto& m : j.at("messages")) {
        const auto role = parse_role(m.at("role").get<std::string>());
        if (!role) throw std::invalid_argument("unknown role " + m.at("role").dump());
        request.messages.push_back({*role, m.at("content").get<std::string>()});
    }
    request.temperature = j.at("temperature").get<double>();
    request.max_tokens = j.at("max_tokens").get<int>();
    if (j.contains("seed") && !j["seed"].is_null()) request.seed = j["seed"].get<std::int64_t>();
    return request;
}

json to_json(const CompletionResult& result) {
    return json{{"text", result.text},
                {"prompt_tokens", result.prompt_tokens},
                {"completion_tokens", result.completion_tokens},
                {"latency_ms", result.latency_ms},
                {"tokens_estimated", result.tokens_estimated}};
}

CompletionResult result_from_json(const json& j) {
    CompletionResult result;
    result.text = j.at("text").get<std::string>();
    result.prompt_tokens = j.at("prompt_tokens").get<std::uint64_t>();
    result.completion_tokens = j.at("completion_tokens").get<std::uint64_t>();
    result.latency_ms = j.value("latency_ms", std::uint64_t{0});
    result.tokens_estimated = j.value("tokens_estimated", false);
    return result;
}

// ScriptedBackend

ScriptedBackend::ScriptedBackend(std::map<std::string, Entry> script) : script_(std::move(script)) {}

ScriptedBackend::ScriptedBackend(Responder responder) : responder_(std::move(responder)) {}

std::unique_ptr<ScriptedBackend> ScriptedBackend::from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open script " + path.string());
    }
    const json j = json::parse(in, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
        throw std::runtime_error("script " + path.string() + " is not a JSON object");
    }
    std::map<std::string, Entry> script;
    for (const auto& [key, value] : j.items()) {
        Entry entry;
        if (value.is_string()) {
            entry.text = value.get<std::string>();
        } else if (value.is_object() && value.contains("error")) {
            entry.error = parse_error_kind(value["error"].get<std::string>());
            if (!entry.error) {
                throw std::runtime_error("script entry '" + key + "' names an unknown error " + value["error"].dump());
            }
        } else if (value.is_object() && value.contains("text")) {
            entry.text = value["text"].get<std::string>();
        } else {
            throw std::runtime_error("script entry '" + key + "' must be a string or an object");
        }
        script.emplace(key, std::move(entry));
    }
    return std::make_unique<ScriptedBackend>(std::move(script));
}

const ScriptedBackend::Entry* ScriptedBackend::lookup(const CompletionRequest& request) const {
    if (const auto it = script_.find(fingerprint(request)); it != script_.end()) {
        return &it->second;
    }
    std::string_view last_user;
    for (auto it = request.messages.rbegin(); it != request.messages.rend(); ++it) {
        if (it->role == Role::User) {
            last_user = it->content;
            break;
        }
    }
    const Entry* best = nullptr;
    std::size_t best_length = 0;
    for (const auto& [key, entry] : script_) {
        if (is_fingerprint(key) || key.empty()) continue;
        if (last_user.find(key) != std::string_view::npos && key.size() > best_length) {
            best = &entry;
            best_length = key.size();
        }
    }
    return best;
}

CompletionResult ScriptedBackend::complete(const CompletionRequest& request) {
    ++calls_;
    validate(request);
    const auto start = std::chrono::steady_clock::now();
    std::string text;
    if (responder_) {
        text = responder_(request);
    } else {
        const Entry* entry = lookup(request);
        if (entry == nullptr) {
            throw BackendError(ErrorKind::Unscripted, "no script entry for request " + fingerprint(request));
        }
        if (entry->error) {
            throw BackendError(*entry->error, "scripted failure");
        }
        text = entry->text;
    }
    if (text.empty()) {
        throw BackendError(ErrorKind::EmptyCompletion, "scripted response is empty");
    }
    CompletionResult result;
    result.text = std::move(text);
    std::uint64_t prompt = 0;
    for (const auto& m : request.messages) prompt += estimate_tokens(m.content);
    result.prompt_tokens = prompt;
    result.completion_tokens = estimate_tokens(result.text);
    result.tokens_estimated = true;
    result.latency_ms = elapsed_ms(start);
    return result;
}

// CachingBackend

CachingBackend::CachingBackend(Backend* inner, std::filesystem::path dir, Mode mode)
    : inner_(inner), dir_(std::move(dir)), mode_(mode) {
    std::filesystem::create_directories(dir_);
}

std::filesystem::path CachingBackend::entry_path(const CompletionRequest& request) const {
    return dir_ / (fingerprint(request) + ".json");
}

std::optional<CompletionResult> CachingBackend::read_entry(const std::filesystem::path& path) const {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        return std::nullopt;
    }
    const json j = json::parse(in, nullptr, false);
    if (j.is_discarded() || !j.contains("result")) {
        return std::nullopt;
    }
    try {
        return result_from_json(j["result"]);
    } catch (const json::exception&) {
        return std::nullopt;
    }
}

void CachingBackend::write_entry(const std::filesystem::path& path, const CompletionRequest& request,
                                 const CompletionResult& result) const {
    const json entry{{"request", to_json(request)}, {"result", to_json(result)}, {"timestamp", utc_timestamp()}};
    std::ostringstream tid;
    tid << std::this_thread::get_id();
    const auto temp = path.string() + ".tmp." + tid.str();
    {
        std::ofstream out(temp, std::ios::binary | std::ios::trunc);
        out << entry.dump(2, ' ', false, json::error_handler_t::replace) << '\n';
        out.flush();
        if (!out) {
            std::error_code ec;
            std::filesystem::remove(temp, ec);
            throw std::runtime_error("cannot write cache entry " + temp);
        }
    }
    std::filesystem::rename(temp, path);
}

CompletionResult CachingBackend::complete(const CompletionRequest& request) {
    const std::string key = fingerprint(request);
    const auto path = dir_ / (key + ".json");
    std::lock_guard lock(key_locks_[std::hash<std::string>{}(key) % key_locks_.size()]);
    if (auto cached = read_entry(path)) {
        ++hits_;
        return *cached;
    }
    ++misses_;
    if (mode_ == Mode::ReadOnly || inner_ == nullptr) {
        throw BackendError(ErrorKind::CacheMiss, "no cached response for " + key);
    }
    CompletionResult result = inner_->complete(request);
    write_entry(path, request, result);
    return result;
}

// Retry

CompletionResult with_retry(Backend& backend, const CompletionRequest& request, const RetryPolicy& policy,
                            const Sleeper& sleep) {
    if (policy.max_attempts < 1) {
        throw std::invalid_argument("max_attempts must be at least 1");
    }
    thread_local std::mt19937_64 rng{std::random_device{}()};
    for (int attempt = 1;; ++attempt) {
        try {
            return backend.complete(request);
        } catch (const BackendError& e) {
            if (!e.retryable()) {
                throw;
            }
            if (attempt >= policy.max_attempts) {
                throw RetriesExhausted(attempt, e);
            }
            const double cap = static_cast<double>(policy.base_delay.count()) * std::pow(policy.multiplier, attempt - 1);
            std::uniform_real_distribution<double> jitter(0.0, cap);
            double delay = jitter(rng);
            if (e.retry_after_s()) {
                delay = std::max(delay, *e.retry_after_s() * 1000.0);
            }
            const auto wait = std::chrono::milliseconds(static_cast<long long>(delay));
            if (sleep) {
                sleep(wait);
            } else {
                std::this_thread::sleep_for(wait);
            }
        }
    }
}

// RateLimiter

RateLimiter::RateLimiter(double requests_per_second) {
    if (requests_per_second > 0.0) {
        interval_ = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
            std::chrono::duration<double>(1.0 / requests_per_second));
    }
}

void RateLimiter::acquire() {
    if (interval_ == std::chrono::steady_clock::duration::zero()) {
        return;
    }
    std::chrono::steady_clock::time_point slot;
    {
        std::lock_guard lock(mutex_);
        const auto now = std::chrono::steady_clock::now();
        slot = std::max(now, next_);
        next_ = slot + interval_;
    }
    std::this_thread::sleep_until(slot);
}

}  // namespace reflectqa
