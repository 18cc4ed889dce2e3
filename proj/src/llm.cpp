#include "har/llm.hpp"

#include <cstdio>
#include <unistd.h>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <thread>

#include <openssl/evp.h>

#include <nlohmann/json.hpp>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

namespace har {

std::string sha256_hex(std::string_view data) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr);
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xf]);
    }
    return out;
}

namespace {

std::string canonical_request(const std::string& backend_id, const CompletionRequest& r) {
    // field order and formatting are part of the cache contract
    std::ostringstream ss;
    ss << "backend=" << backend_id << "\n"
       << "model=" << r.model_id << "\n"
       << "temperature=" << r.temperature << "\n"
       << "top_p=" << r.top_p << "\n"
       << "max_tokens=" << r.max_tokens << "\n"
       << "prompt_bytes=" << r.prompt.text.size() << "\n"
       << r.prompt.text;
    return ss.str();
}

}  // namespace

std::string cache_key(const std::string& backend_id, const CompletionRequest& request) {
    return sha256_hex(canonical_request(backend_id, request));
}

CompletionResult complete(Backend& backend, const CompletionRequest& request,
                          std::size_t prompt_char_budget) {
    if (request.prompt.text.size() > prompt_char_budget) {
        throw PromptTooLarge("prompt is " + std::to_string(request.prompt.text.size()) +
                             " chars, budget " + std::to_string(prompt_char_budget));
    }
    auto start = std::chrono::steady_clock::now();
    auto text = backend.complete_text(request);
    auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
        std::chrono::steady_clock::now() - start);
    return {std::move(text), false, elapsed, backend.id()};
}

CompletionResult cached_complete(const std::filesystem::path& cache_dir, Backend& backend,
                                 const CompletionRequest& request,
                                 std::size_t prompt_char_budget) {
    const char* no_cache = std::getenv("HAR_NO_CACHE");
    if (no_cache != nullptr && std::string_view(no_cache) == "1") {
        return complete(backend, request, prompt_char_budget);
    }

    std::filesystem::create_directories(cache_dir);
    auto key = cache_key(backend.id(), request);
    auto entry_path = cache_dir / (key + ".entry");
    auto canonical = canonical_request(backend.id(), request);

    if (std::filesystem::exists(entry_path)) {
        std::ifstream in(entry_path, std::ios::binary);
        std::stringstream buf;
        buf << in.rdbuf();
        try {
            auto entry = nlohmann::json::parse(buf.str());
            if (entry.contains("request") && entry.contains("response") &&
                entry["request"].get<std::string>() == canonical) {
                CompletionResult result;
                result.text = entry["response"].get<std::string>();
                result.from_cache = true;
                result.backend_id = backend.id();
                return result;
            }
            std::cerr << "warning: cache entry " << key << " does not match request, recomputing\n";
        } catch (const nlohmann::json::exception&) {
            std::cerr << "warning: corrupt cache entry " << key << ", recomputing\n";
        }
    }

    auto result = complete(backend, request, prompt_char_budget);

    nlohmann::ordered_json entry;
    entry["request"] = canonical;
    entry["response"] = result.text;
    auto tmp = cache_dir / (key + ".tmp" + std::to_string(::getpid()));
    {
        std::ofstream out(tmp, std::ios::binary);
        out << entry.dump();
    }
    std::filesystem::rename(tmp, entry_path);
    return result;
}

// ---------------------------------------------------------------------------
// ScriptedMockBackend

ScriptedMockBackend ScriptedMockBackend::from_replay_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open replay file: " + path.string());
    ScriptedMockBackend mock;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        nlohmann::json rec;
        try {
            rec = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
        if (!rec.contains("response")) {
            throw ParseError(path.string() + ":" + std::to_string(lineno) +
                             ": replay record needs a response field");
        }
        auto response = rec["response"].get<std::string>();
        if (rec.contains("substring")) {
            mock.add_substring_rule(rec["substring"].get<std::string>(), response);
        } else if (rec.contains("digest")) {
            mock.add_digest_rule(rec["digest"].get<std::string>(), response);
        } else if (rec.value("default", false)) {
            mock.set_default(response);
        } else {
            throw ParseError(path.string() + ":" + std::to_string(lineno) +
                             ": record needs substring, digest, or default");
        }
    }
    return mock;
}

void ScriptedMockBackend::add_substring_rule(std::string matcher, std::string response) {
    rules_.push_back({Rule::Kind::Substring, std::move(matcher), std::move(response)});
}

void ScriptedMockBackend::add_digest_rule(std::string digest, std::string response) {
    rules_.push_back({Rule::Kind::Digest, std::move(digest), std::move(response)});
}

void ScriptedMockBackend::set_default(std::string response) {
    default_response_ = std::move(response);
}

std::string ScriptedMockBackend::complete_text(const CompletionRequest& request) {
    calls_.fetch_add(1);
    for (const auto& rule : rules_) {
        bool hit = rule.kind == Rule::Kind::Substring
                       ? request.prompt.text.find(rule.matcher) != std::string::npos
                       : sha256_hex(request.prompt.text) == rule.matcher;
        if (hit) return rule.response;
    }
    if (default_response_) return *default_response_;
    throw MockMiss("no replay rule matches prompt: " +
                   request.prompt.text.substr(0, std::min<std::size_t>(80, request.prompt.text.size())));
}

// ---------------------------------------------------------------------------
// HttpBackend

HttpBackend::HttpBackend(std::string base_url, std::string completions_path, std::string api_key)
    : base_url_(std::move(base_url)), path_(std::move(completions_path)),
      api_key_(std::move(api_key)) {
    if (api_key_.empty()) {
        if (const char* env = std::getenv("HAR_API_KEY")) api_key_ = env;
    }
}

std::string HttpBackend::id() const {
    return "http:" + base_url_;
}

std::string HttpBackend::complete_text(const CompletionRequest& request) {
    nlohmann::json body;
    body["model"] = request.model_id;
    body["prompt"] = request.prompt.text;
    body["temperature"] = request.temperature;
    body["top_p"] = request.top_p;
    body["max_tokens"] = request.max_tokens;
    auto payload = body.dump();

    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

    std::mt19937_64 rng(std::random_device{}());
    std::string last_error;
    for (int attempt = 0; attempt < max_attempts_; ++attempt) {
        if (attempt > 0) {
            // exponential backoff with full jitter
            auto cap = base_delay_.count() * (1LL << (attempt - 1));
            std::uniform_int_distribution<long long> jitter(0, cap);
            std::this_thread::sleep_for(std::chrono::milliseconds(jitter(rng)));
        }
        httplib::Client client(base_url_);
        client.set_read_timeout(120, 0);
        auto res = client.Post(path_, headers, payload, "application/json");
        if (!res) {
            last_error = "transport error: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status == 401 || res->status == 403) {
            throw AuthError("backend rejected credentials (HTTP " +
                            std::to_string(res->status) + ")");
        }
        if (res->status == 429 || res->status >= 500) {
            last_error = "HTTP " + std::to_string(res->status);
            continue;
        }
        if (res->status != 200) {
            throw BackendUnavailable("HTTP " + std::to_string(res->status) + ": " + res->body);
        }
        try {
            auto parsed = nlohmann::json::parse(res->body);
            const auto& choices = parsed.at("choices");
            if (choices.empty()) throw BackendUnavailable("response has no choices");
            const auto& first = choices.at(0);
            if (first.contains("text")) return first["text"].get<std::string>();
            if (first.contains("message")) return first["message"].value("content", "");
            throw BackendUnavailable("cannot locate completion text in response");
        } catch (const nlohmann::json::exception& e) {
            throw BackendUnavailable(std::string("unparseable response body: ") + e.what());
        }
    }
    if (last_error.find("HTTP 429") != std::string::npos) {
        throw RateLimited("rate limited after " + std::to_string(max_attempts_) +
                          " attempts (" + last_error + ")");
    }
    throw BackendUnavailable("backend unavailable after " + std::to_string(max_attempts_) +
                             " attempts (" + last_error + ")");
}

}  // namespace har
