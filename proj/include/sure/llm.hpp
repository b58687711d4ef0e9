#pragma once

/** \file llm.hpp
 *  \brief Chat-completion backends: live HTTP, deterministic replay, scripted
 *         stand-ins, and a content-addressed response cache.
 *
 * Every request is identified by a CacheKey, the SHA-256 of a canonical JSON
 * serialization of (model, temperature, max_tokens, messages). Replay
 * transcripts and the on-disk cache are both keyed by that digest, so a run
 * recorded against a live model can be replayed bit-for-bit later.
 */

#include <array>
#include <atomic>
#include <chrono>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace sure {

enum class Role { system, user, assistant };

std::string_view role_name(Role role);
Role parse_role(std::string_view name);

struct ChatMessage {
    Role role{Role::user};
    std::string content;

    bool operator==(const ChatMessage&) const = default;
};

struct ChatRequest {
    std::string model;
    std::vector<ChatMessage> messages;
    double temperature{0.0};
    std::optional<int> max_tokens;

    /// Single user-message request, the shape every pipeline stage uses.
    static ChatRequest user_prompt(std::string model, std::string prompt, double temperature = 0.0,
                                   std::optional<int> max_tokens = std::nullopt);

    /// Throws ConfigError when there are no messages or temperature < 0.
    void validate() const;

    bool operator==(const ChatRequest&) const = default;
};

/// Canonical serialization hashed into the cache key.
std::string canonical_serialization(const ChatRequest& request);

struct CacheKey {
    std::string digest;

    static CacheKey of(const ChatRequest& request);
    bool operator==(const CacheKey&) const = default;
};

/// Human-readable echo of the request: message contents joined by blank lines.
std::string prompt_echo(const ChatRequest& request);

class ChatBackend {
public:
    virtual ~ChatBackend() = default;

    /// Returns the first choice's message content.
    virtual std::string complete(const ChatRequest& request) = 0;

    /// Name used in configs and traces.
    virtual const std::string& name() const = 0;
    /// Model identifier placed in requests sent through this backend.
    virtual const std::string& model() const = 0;
};

using BackendPtr = std::shared_ptr<ChatBackend>;

/// Backend answering through a user-supplied function. Used for tests,
/// mocks, and the constant-response fixtures.
class ScriptedBackend final : public ChatBackend {
public:
    using Responder = std::function<std::string(const ChatRequest&)>;

    ScriptedBackend(std::string name, std::string model, Responder responder);

    static std::shared_ptr<ScriptedBackend> constant(std::string response, std::string name = "constant");

    std::string complete(const ChatRequest& request) override;
    const std::string& name() const override { return name_; }
    const std::string& model() const override { return model_; }

    std::size_t calls() const noexcept { return calls_.load(); }

private:
    std::string name_;
    std::string model_;
    Responder responder_;
    std::atomic<std::size_t> calls_{0};
};

/// Recorded responses keyed by request digest. Read-only once loaded.
class Transcript {
public:
    struct Entry {
        std::string prompt_echo;
        std::string response;
    };

    /// Accepts three line shapes, freely mixed:
    ///   {"digest", "prompt_echo"?, "response"}
    ///   {"request": {model, messages, temperature, max_tokens?}, "response"}
    ///   run-trace records carrying a "calls" array of {digest, prompt, response}
    static Transcript load(const std::filesystem::path& path);
    static Transcript load(std::istream& in);

    /// Conflicting responses for one digest are rejected.
    void add(const std::string& digest, std::string prompt_echo, std::string response);
    void add(const ChatRequest& request, std::string response);

    const Entry* find(const std::string& digest) const;
    std::size_t size() const noexcept { return entries_.size(); }

    /// Writes {digest, prompt_echo, response} lines sorted by digest.
    void save(std::ostream& out) const;
    void save(const std::filesystem::path& path) const;

private:
    std::map<std::string, Entry> entries_;
};

class ReplayBackend final : public ChatBackend {
public:
    ReplayBackend(std::string name, std::string model, std::shared_ptr<const Transcript> transcript);

    /// Throws TranscriptMiss for unknown requests.
    std::string complete(const ChatRequest& request) override;
    const std::string& name() const override { return name_; }
    const std::string& model() const override { return model_; }

private:
    std::string name_;
    std::string model_;
    std::shared_ptr<const Transcript> transcript_;
};

/// One file per digest under a directory. Writes are atomic
/// (temporary file then rename); stored bytes are returned unchanged.
class ResponseCache {
public:
    explicit ResponseCache(std::filesystem::path dir);

    std::optional<std::string> get(const CacheKey& key) const;
    void put(const CacheKey& key, std::string_view response) const;

    const std::filesystem::path& dir() const noexcept { return dir_; }

private:
    std::filesystem::path path_for(const CacheKey& key) const;

    std::filesystem::path dir_;
};

/// Serves hits from the cache and forwards misses to the wrapped backend.
/// The wrapped backend may be null, in which case a miss is an error.
class CachedBackend final : public ChatBackend {
public:
    CachedBackend(BackendPtr inner, std::shared_ptr<const ResponseCache> cache);
    CachedBackend(std::string name, std::string model, std::shared_ptr<const ResponseCache> cache);

    std::string complete(const ChatRequest& request) override;
    const std::string& name() const override { return name_; }
    const std::string& model() const override { return model_; }

    std::size_t hits() const noexcept { return hits_.load(); }
    std::size_t misses() const noexcept { return misses_.load(); }

private:
    BackendPtr inner_;
    std::shared_ptr<const ResponseCache> cache_;
    std::string name_;
    std::string model_;
    std::atomic<std::size_t> hits_{0};
    std::atomic<std::size_t> misses_{0};
};

struct HttpBackendConfig {
    std::string name{"live"};
    std::string model;
    /// Full URL of the chat-completions endpoint.
    std::string endpoint{"https://api.openai.com/v1/chat/completions"};
    std::string api_key;
    int max_attempts{3};
    std::chrono::milliseconds initial_backoff{1000};
    std::chrono::seconds timeout{120};
    std::size_t parallelism{8};
};

/// Speaks the chat-completions wire format over HTTP(S) with bearer auth.
/// Connection failures, 429 and 5xx are retried with exponential backoff.
class HttpBackend final : public ChatBackend {
public:
    explicit HttpBackend(HttpBackendConfig config);
    ~HttpBackend() override;

    std::string complete(const ChatRequest& request) override;
    const std::string& name() const override { return config_.name; }
    const std::string& model() const override { return config_.model; }

    /// Request body as sent on the wire.
    static std::string request_body(const ChatRequest& request);
    /// Extracts choices[0].message.content; throws TransportError otherwise.
    static std::string parse_response_body(std::string_view body);

private:
    struct Impl;
    HttpBackendConfig config_;
    std::unique_ptr<Impl> impl_;
};

/// Reads the bearer token from SURE_API_KEY, then OPENAI_API_KEY.
std::optional<std::string> api_key_from_env();

// ---------------------------------------------------------------------------
// Per-stage backend assignment

enum class Stage { candidates, summarize, validity, ranking, baseline };

inline constexpr std::array<Stage, 5> kAllStages = {Stage::candidates, Stage::summarize, Stage::validity,
                                                    Stage::ranking, Stage::baseline};

std::string_view stage_name(Stage stage);
/// Throws ConfigError listing the valid stage names.
Stage parse_stage(std::string_view name);

struct StageConfig {
    std::string default_backend;
    /// stage name -> backend name
    std::map<std::string, std::string> assignments;
};

class StageBackends {
public:
    StageBackends() = default;
    /// Every stage uses the same backend.
    explicit StageBackends(BackendPtr all);

    ChatBackend& at(Stage stage) const;
    const BackendPtr& handle(Stage stage) const { return backends_[static_cast<std::size_t>(stage)]; }
    void set(Stage stage, BackendPtr backend) { backends_[static_cast<std::size_t>(stage)] = std::move(backend); }

private:
    std::array<BackendPtr, kAllStages.size()> backends_{};
};

/// Resolves every stage to a backend from `available`; unassigned stages get
/// the default. Unknown stage or backend names raise ConfigError.
StageBackends resolve_stage_backends(const StageConfig& config, const std::map<std::string, BackendPtr>& available);

// ---------------------------------------------------------------------------
// Embeddings

class EmbeddingBackend {
public:
    virtual ~EmbeddingBackend() = default;
    virtual std::vector<double> embed(const std::string& text) = 0;
    virtual const std::string& name() const = 0;
};

/// Vectors recorded per text, keyed by sha256(text). Lines: {"text" or "digest", "embedding": [...]}.
class ReplayEmbeddingBackend final : public EmbeddingBackend {
public:
    explicit ReplayEmbeddingBackend(std::string name = "replay-embeddings");

    static ReplayEmbeddingBackend load(const std::filesystem::path& path);

    void add(const std::string& text, std::vector<double> vector);
    std::vector<double> embed(const std::string& text) override;
    const std::string& name() const override { return name_; }

private:
    std::string name_;
    std::unordered_map<std::string, std::vector<double>> vectors_;
    std::size_t dimension_{0};
};

/// POSTs {model, input} to an embeddings endpoint and reads data[0].embedding.
class HttpEmbeddingBackend final : public EmbeddingBackend {
public:
    explicit HttpEmbeddingBackend(HttpBackendConfig config);
    ~HttpEmbeddingBackend() override;

    std::vector<double> embed(const std::string& text) override;
    const std::string& name() const override { return config_.name; }

    static std::vector<double> parse_response_body(std::string_view body);

private:
    struct Impl;
    HttpBackendConfig config_;
    std::unique_ptr<Impl> impl_;
};

}  // namespace sure
