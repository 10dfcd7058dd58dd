#include "reflectqa/llm_backend.hpp"

#include "support/fixtures.hpp"

#include <gtest/gtest.h>

#include <thread>

using namespace reflectqa;
using reflectqa::testing::TempDir;

namespace {

CompletionRequest make_request(std::string user = "What is 6 times 7?") {
    CompletionRequest request;
    request.model = "test-model";
    request.messages = {{Role::System, "You are helpful."}, {Role::User, std::move(user)}};
    return request;
}

// Fails with the queued errors first, then answers "ok".
class FlakyBackend : public Backend {
public:
    explicit FlakyBackend(std::vector<ErrorKind> failures) : failures_(std::move(failures)) {}

    CompletionResult complete(const CompletionRequest&) override {
        const std::size_t call = calls++;
        if (call < failures_.size()) throw BackendError(failures_[call], "injected");
        return CompletionResult{"ok", 1, 1, 0, false};
    }

    std::size_t calls = 0;

private:
    std::vector<ErrorKind> failures_;
};

const Sleeper kNoSleep = [](std::chrono::milliseconds) {};

}  // namespace

TEST(Fingerprint, DeterministicAndSensitive) {
    const auto a = make_request();
    EXPECT_EQ(fingerprint(a), fingerprint(make_request()));
    EXPECT_EQ(fingerprint(a).size(), 64u);

    auto warmer = a;
    warmer.temperature = 0.2;
    EXPECT_NE(fingerprint(a), fingerprint(warmer));

    EXPECT_NE(fingerprint(a), fingerprint(make_request("What is 6 times 7? ")));

    auto seeded = a;
    seeded.seed = 7;
    EXPECT_NE(fingerprint(a), fingerprint(seeded));

    auto longer = a;
    longer.max_tokens = 2048;
    EXPECT_NE(fingerprint(a), fingerprint(longer));
}

TEST(Fingerprint, RoleIsPartOfTheHash) {
    auto a = make_request();
    auto b = a;
    b.messages[1].role = Role::Assistant;
    EXPECT_NE(fingerprint(a), fingerprint(b));
}

TEST(Validate, RejectsMalformedRequests) {
    EXPECT_NO_THROW(validate(make_request()));
    CompletionRequest empty;
    EXPECT_THROW(validate(empty), BackendError);
    auto no_system = make_request();
    no_system.messages.erase(no_system.messages.begin());
    EXPECT_THROW(validate(no_system), BackendError);
    auto blank = make_request("");
    EXPECT_THROW(validate(blank), BackendError);
    auto hot = make_request();
    hot.temperature = 2.5;
    EXPECT_THROW(validate(hot), BackendError);
}

TEST(EstimateTokens, CeilingOfCodePointsOverFour) {
    EXPECT_EQ(estimate_tokens(""), 0u);
    EXPECT_EQ(estimate_tokens("abcd"), 1u);
    EXPECT_EQ(estimate_tokens("abcde"), 2u);
    EXPECT_EQ(estimate_tokens("\xE2\x82\xAC\xE2\x82\xAC\xE2\x82\xAC\xE2\x82\xAC"), 1u);  // four euro signs
}

TEST(ScriptedBackend, FingerprintEntry) {
    const auto request = make_request();
    ScriptedBackend backend(std::map<std::string, ScriptedBackend::Entry>{{fingerprint(request), {"42", {}}}});
    EXPECT_EQ(backend.complete(request).text, "42");
    EXPECT_EQ(backend.complete(request), backend.complete(request));
}

TEST(ScriptedBackend, UnscriptedRequest) {
    ScriptedBackend backend(std::map<std::string, ScriptedBackend::Entry>{{"unrelated", {"x", {}}}});
    try {
        backend.complete(make_request());
        FAIL() << "expected UnscriptedRequest";
    } catch (const BackendError& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Unscripted);
        EXPECT_FALSE(e.retryable());
    }
}

TEST(ScriptedBackend, LongestSubstringKeyWins) {
    ScriptedBackend backend(std::map<std::string, ScriptedBackend::Entry>{{"6 times", {"short", {}}},
                                                                          {"6 times 7", {"long", {}}}});
    EXPECT_EQ(backend.complete(make_request()).text, "long");
}

TEST(ScriptedBackend, FromFileWithErrors) {
    TempDir dir;
    reflectqa::testing::write_text(dir / "script.json",
                                   R"({"times 7": {"text": "Final Answer: 42"}, "boom": {"error": "network"},
                                       "plain": "hello"})");
    auto backend = ScriptedBackend::from_file(dir / "script.json");
    EXPECT_EQ(backend->complete(make_request()).text, "Final Answer: 42");
    EXPECT_EQ(backend->complete(make_request("plain")).text, "hello");
    try {
        backend->complete(make_request("boom"));
        FAIL();
    } catch (const BackendError& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Network);
    }
    EXPECT_EQ(backend->calls(), 3u);

    reflectqa::testing::write_text(dir / "bad.json", R"({"k": {"error": "nonsense"}})");
    EXPECT_THROW(ScriptedBackend::from_file(dir / "bad.json"), std::runtime_error);
}

TEST(CachingBackend, SecondCallServedFromCache) {
    TempDir dir;
    const auto request = make_request();
    ScriptedBackend inner(std::map<std::string, ScriptedBackend::Entry>{{fingerprint(request), {"42", {}}}});
    CachingBackend cache(&inner, dir.path());
    const auto first = cache.complete(request);
    const auto second = cache.complete(request);
    EXPECT_EQ(inner.calls(), 1u);
    EXPECT_EQ(first, second);
    EXPECT_EQ(cache.hits(), 1u);
    EXPECT_TRUE(std::filesystem::exists(cache.entry_path(request)));

    // A fresh cache object over the same directory still hits.
    CachingBackend reopened(&inner, dir.path());
    EXPECT_EQ(reopened.complete(request).text, "42");
    EXPECT_EQ(inner.calls(), 1u);
}

TEST(CachingBackend, ReadOnlyMissAndCorruptEntry) {
    TempDir dir;
    const auto request = make_request();
    CachingBackend read_only(nullptr, dir.path(), CachingBackend::Mode::ReadOnly);
    try {
        read_only.complete(request);
        FAIL();
    } catch (const BackendError& e) {
        EXPECT_EQ(e.kind(), ErrorKind::CacheMiss);
    }
    reflectqa::testing::write_text(read_only.entry_path(request), "{\"result\": ");
    EXPECT_THROW(read_only.complete(request), BackendError);

    ScriptedBackend inner(std::map<std::string, ScriptedBackend::Entry>{{"6 times", {"fresh", {}}}});
    CachingBackend cache(&inner, dir.path());
    EXPECT_EQ(cache.complete(request).text, "fresh");
    EXPECT_EQ(read_only.complete(request).text, "fresh");
}

TEST(CachingBackend, ConcurrentRequestsForOneKeyCallOnce) {
    TempDir dir;
    ScriptedBackend inner([](const CompletionRequest&) {
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
        return std::string("same");
    });
    CachingBackend cache(&inner, dir.path());
    std::vector<std::thread> threads;
    for (int i = 0; i < 8; ++i) {
        threads.emplace_back([&] { EXPECT_EQ(cache.complete(make_request()).text, "same"); });
    }
    for (auto& t : threads) t.join();
    EXPECT_EQ(inner.calls(), 1u);
    std::size_t files = 0;
    for ([[maybe_unused]] const auto& entry : std::filesystem::directory_iterator(dir.path())) ++files;
    EXPECT_EQ(files, 1u);
}

TEST(WithRetry, FailTwiceThenSucceed) {
    FlakyBackend backend({ErrorKind::Network, ErrorKind::RateLimited});
    EXPECT_EQ(with_retry(backend, make_request(), RetryPolicy{3, std::chrono::milliseconds(1), 2.0}, kNoSleep).text,
              "ok");
    EXPECT_EQ(backend.calls, 3u);
}

TEST(WithRetry, NonRetryableFailsImmediately) {
    FlakyBackend backend({ErrorKind::BadResponse});
    try {
        with_retry(backend, make_request(), RetryPolicy{}, kNoSleep);
        FAIL();
    } catch (const RetriesExhausted&) {
        FAIL() << "BadResponse must not be retried";
    } catch (const BackendError& e) {
        EXPECT_EQ(e.kind(), ErrorKind::BadResponse);
    }
    EXPECT_EQ(backend.calls, 1u);
}

TEST(WithRetry, ExhaustsAfterMaxAttempts) {
    FlakyBackend backend(std::vector<ErrorKind>(10, ErrorKind::Network));
    std::vector<std::chrono::milliseconds> waits;
    try {
        with_retry(backend, make_request(), RetryPolicy{3, std::chrono::milliseconds(100), 2.0},
                   [&](std::chrono::milliseconds d) { waits.push_back(d); });
        FAIL();
    } catch (const RetriesExhausted& e) {
        EXPECT_EQ(e.attempts(), 3);
        EXPECT_EQ(e.last_kind(), ErrorKind::Network);
    }
    EXPECT_EQ(backend.calls, 3u);
    ASSERT_EQ(waits.size(), 2u);
    EXPECT_LE(waits[0].count(), 100);
    EXPECT_LE(waits[1].count(), 200);
}

TEST(WithRetry, RetryAfterIsALowerBound) {
    class Limited : public Backend {
    public:
        CompletionResult complete(const CompletionRequest&) override {
            if (calls++ == 0) throw BackendError(ErrorKind::RateLimited, "slow down", 429, 2.0);
            return {"ok", 0, 0, 0, false};
        }
        int calls = 0;
    } backend;
    std::vector<std::chrono::milliseconds> waits;
    with_retry(backend, make_request(), RetryPolicy{3, std::chrono::milliseconds(1), 2.0},
               [&](std::chrono::milliseconds d) { waits.push_back(d); });
    ASSERT_EQ(waits.size(), 1u);
    EXPECT_GE(waits[0].count(), 2000);
}

TEST(RateLimiter, SpacesGrants) {
    RateLimiter limiter(100.0);
    const auto start = std::chrono::steady_clock::now();
    for (int i = 0; i < 6; ++i) limiter.acquire();
    EXPECT_GE(std::chrono::steady_clock::now() - start, std::chrono::milliseconds(45));
}

TEST(RequestJson, RoundTrip) {
    auto request = make_request();
    request.seed = 11;
    EXPECT_EQ(request_from_json(to_json(request)), request);
    const CompletionResult result{"text", 10, 4, 123, true};
    EXPECT_EQ(result_from_json(to_json(result)), result);
}
