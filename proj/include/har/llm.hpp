#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "har/prompt.hpp"

namespace har {

struct AuthError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct RateLimited : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct BackendUnavailable : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct PromptTooLarge : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct MockMiss : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CompletionRequest {
    std::string model_id;
    PromptText prompt;
    double temperature = 0.0;
    double top_p = 0.5;
    int max_tokens = 512;
};

struct CompletionResult {
    std::string text;
    bool from_cache = false;
    std::chrono::milliseconds latency{0};
    std::string backend_id;
};

class Backend {
  public:
    virtual ~Backend() = default;
    virtual std::string id() const = 0;
    virtual std::string complete_text(const CompletionRequest& request) = 0;
};

/// Hex SHA-256 of arbitrary bytes.
std::string sha256_hex(std::string_view data);

/// Cache key: digest of the canonical serialization of
/// (backend_id, model_id, temperature, top_p, max_tokens, prompt bytes).
std::string cache_key(const std::string& backend_id, const CompletionRequest& request);

/// Runs one completion with timing and a client-side prompt size check.
CompletionResult complete(Backend& backend, const CompletionRequest& request,
                          std::size_t prompt_char_budget = 12000);

/// Content-addressed cache in front of a backend. Hits skip the backend;
/// misses call it and persist the entry atomically (temp file + rename).
/// Corrupt entries are treated as misses. HAR_NO_CACHE=1 bypasses entirely.
CompletionResult cached_complete(const std::filesystem::path& cache_dir, Backend& backend,
                                 const CompletionRequest& request,
                                 std::size_t prompt_char_budget = 12000);

/// Deterministic scripted backend for tests and replay runs. Rules are
/// checked in order; first match wins. Matchers are prompt substrings or
/// exact prompt digests.
class ScriptedMockBackend : public Backend {
  public:
    struct Rule {
        enum class Kind { Substring, Digest };
        Kind kind;
        std::string matcher;
        std::string response;
    };

    ScriptedMockBackend() = default;
    ScriptedMockBackend(ScriptedMockBackend&& other) noexcept
        : rules_(std::move(other.rules_)),
          default_response_(std::move(other.default_response_)),
          calls_(other.calls_.load()) {}

    /// Loads rules from a replay file: newline-delimited JSON records with
    /// either {"substring": ..., "response": ...}, {"digest": ..., "response": ...}
    /// or {"default": true, "response": ...}.
    static ScriptedMockBackend from_replay_file(const std::filesystem::path& path);

    void add_substring_rule(std::string matcher, std::string response);
    void add_digest_rule(std::string digest, std::string response);
    void set_default(std::string response);

    std::string id() const override { return "mock"; }
    std::string complete_text(const CompletionRequest& request) override;

    /// Number of completions served; used to prove cache hits skip the backend.
    long calls() const { return calls_.load(); }

  private:
    std::vector<Rule> rules_;
    std::optional<std::string> default_response_;
    std::atomic<long> calls_{0};
};

/// HTTP client for a completions-compatible endpoint. Transient failures
/// (timeout, 429, 5xx) retry up to 3 times with exponential backoff and
/// full jitter.
class HttpBackend : public Backend {
  public:
    HttpBackend(std::string base_url, std::string completions_path = "/v1/completions",
                std::string api_key = {});

    std::string id() const override;
    std::string complete_text(const CompletionRequest& request) override;

    void set_max_attempts(int n) { max_attempts_ = n; }
    void set_base_delay(std::chrono::milliseconds d) { base_delay_ = d; }

  private:
    std::string base_url_;
    std::string path_;
    std::string api_key_;
    int max_attempts_ = 3;
    std::chrono::milliseconds base_delay_{1000};
};

}  // namespace har
