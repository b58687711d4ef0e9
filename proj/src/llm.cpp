#include "sure/llm.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "sure/digest.hpp"
#include "sure/errors.hpp"

namespace sure {

using json = nlohmann::json;

std::string_view role_name(Role role) {
    switch (role) {
        case Role::system: return "system";
        case Role::user: return "user";
        case Role::assistant: return "assistant";
    }
    return "user";
}

Role parse_role(std::string_view name) {
    if (name == "system") return Role::system;
    if (name == "user") return Role::user;
    if (name == "assistant") return Role::assistant;
    throw FormatError("unknown chat role " + std::string(name));
}

ChatRequest ChatRequest::user_prompt(std::string model, std::string prompt, double temperature,
                                     std::optional<int> max_tokens) {
    ChatRequest r;
    r.model = std::move(model);
    r.messages.push_back({Role::user, std::move(prompt)});
    r.temperature = temperature;
    r.max_tokens = max_tokens;
    return r;
}

void ChatRequest::validate() const {
    if (messages.empty()) throw ConfigError("chat request needs at least one message");
    if (!(temperature >= 0.0)) throw ConfigError("chat request temperature must be >= 0");
    if (max_tokens && *max_tokens <= 0) throw ConfigError("max_tokens must be positive");
}

namespace {

json messages_json(const ChatRequest& request) {
    json messages = json::array();
    for (const auto& m : request.messages) {
        messages.push_back({{"role", role_name(m.role)}, {"content", m.content}});
    }
    return messages;
}

ChatRequest request_from_json(const json& j) {
    ChatRequest r;
    r.model = j.at("model").get<std::string>();
    r.temperature = j.value("temperature", 0.0);
    if (j.contains("max_tokens") && !j.at("max_tokens").is_null()) {
        r.max_tokens = j.at("max_tokens").get<int>();
    }
    for (const auto& m : j.at("messages")) {
        r.messages.push_back({parse_role(m.at("role").get<std::string>()), m.at("content").get<std::string>()});
    }
    return r;
}

}  // namespace

std::string canonical_serialization(const ChatRequest& request) {
    json j = {{"model", request.model}, {"temperature", request.temperature}, {"messages", messages_json(request)}};
    if (request.max_tokens) j["max_tokens"] = *request.max_tokens;
    return j.dump();
}

CacheKey CacheKey::of(const ChatRequest& request) {
    return CacheKey{sha256_hex(canonical_serialization(request))};
}

std::string prompt_echo(const ChatRequest& request) {
    std::string out;
    for (std::size_t i = 0; i < request.messages.size(); ++i) {
        if (i) out += "\n\n";
        out += request.messages[i].content;
    }
    return out;
}

// --- ScriptedBackend --------------------------------------------------------

ScriptedBackend::ScriptedBackend(std::string name, std::string model, Responder responder)
    : name_(std::move(name)), model_(std::move(model)), responder_(std::move(responder)) {}

std::shared_ptr<ScriptedBackend> ScriptedBackend::constant(std::string response, std::string name) {
    return std::make_shared<ScriptedBackend>(
        std::move(name), "scripted", [response = std::move(response)](const ChatRequest&) { return response; });
}

std::string ScriptedBackend::complete(const ChatRequest& request) {
    request.validate();
    ++calls_;
    return responder_(request);
}

// --- Transcript ---------------------------------------------------------------

void Transcript::add(const std::string& digest, std::string prompt_echo, std::string response) {
    auto it = entries_.find(digest);
    if (it != entries_.end()) {
        if (it->second.response != response) {
            throw FormatError("conflicting transcript responses for digest " + digest);
        }
        return;
    }
    entries_.emplace(digest, Entry{std::move(prompt_echo), std::move(response)});
}

void Transcript::add(const ChatRequest& request, std::string response) {
    add(CacheKey::of(request).digest, prompt_echo(request), std::move(response));
}

const Transcript::Entry* Transcript::find(const std::string& digest) const {
    auto it = entries_.find(digest);
    return it == entries_.end() ? nullptr : &it->second;
}

Transcript Transcript::load(std::istream& in) {
    Transcript t;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            json j = json::parse(line);
            if (j.contains("calls")) {
                for (const auto& call : j.at("calls")) {
                    t.add(call.at("digest").get<std::string>(), call.value("prompt", std::string{}),
                          call.at("response").get<std::string>());
                }
            } else if (j.contains("request")) {
                t.add(request_from_json(j.at("request")), j.at("response").get<std::string>());
            } else {
                t.add(j.at("digest").get<std::string>(), j.value("prompt_echo", std::string{}),
                      j.at("response").get<std::string>());
            }
        } catch (const json::exception& e) {
            throw FormatError("malformed transcript record at line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return t;
}

Transcript Transcript::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open transcript " + path.string());
    return load(in);
}

void Transcript::save(std::ostream& out) const {
    for (const auto& [digest, entry] : entries_) {
        out << json{{"digest", digest}, {"prompt_echo", entry.prompt_echo}, {"response", entry.response}}.dump()
            << '\n';
    }
}

void Transcript::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write transcript " + path.string());
    save(out);
}

// --- ReplayBackend ------------------------------------------------------------

ReplayBackend::ReplayBackend(std::string name, std::string model, std::shared_ptr<const Transcript> transcript)
    : name_(std::move(name)), model_(std::move(model)), transcript_(std::move(transcript)) {
    if (!transcript_) throw ConfigError("replay backend " + name_ + " has no transcript loaded");
}

std::string ReplayBackend::complete(const ChatRequest& request) {
    request.validate();
    auto key = CacheKey::of(request);
    const auto* entry = transcript_->find(key.digest);
    if (!entry) throw TranscriptMiss(key.digest, prompt_echo(request));
    return entry->response;
}

// --- ResponseCache ------------------------------------------------------------

ResponseCache::ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec || !std::filesystem::is_directory(dir_)) {
        throw CacheError("cannot create cache directory " + dir_.string() + ": " + ec.message());
    }
}

std::filesystem::path ResponseCache::path_for(const CacheKey& key) const {
    return dir_ / (key.digest + ".response");
}

std::optional<std::string> ResponseCache::get(const CacheKey& key) const {
    const auto path = path_for(key);
    std::error_code ec;
    if (!std::filesystem::exists(path, ec)) {
        if (ec) throw CacheError("cannot stat cache entry " + path.string() + ": " + ec.message());
        return std::nullopt;
    }
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CacheError("cannot read cache entry " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    if (in.bad()) throw CacheError("cannot read cache entry " + path.string());
    return buf.str();
}

void ResponseCache::put(const CacheKey& key, std::string_view response) const {
    const auto final_path = path_for(key);
    thread_local std::mt19937_64 rng{std::random_device{}()};
    const auto tmp = dir_ / (key.digest + ".tmp." + std::to_string(rng()));
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw CacheError("cannot write cache entry " + tmp.string());
        out.write(response.data(), static_cast<std::streamsize>(response.size()));
        out.flush();
        if (!out) throw CacheError("cannot write cache entry " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, final_path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw CacheError("cannot commit cache entry " + final_path.string());
    }
}

// --- CachedBackend --------------------------------------------------------------

CachedBackend::CachedBackend(BackendPtr inner, std::shared_ptr<const ResponseCache> cache)
    : inner_(std::move(inner)), cache_(std::move(cache)) {
    if (!inner_) throw ConfigError("cached backend needs an inner backend or an explicit name/model");
    if (!cache_) throw ConfigError("cached backend needs a cache");
    name_ = inner_->name();
    model_ = inner_->model();
}

CachedBackend::CachedBackend(std::string name, std::string model, std::shared_ptr<const ResponseCache> cache)
    : cache_(std::move(cache)), name_(std::move(name)), model_(std::move(model)) {
    if (!cache_) throw ConfigError("cached backend needs a cache");
}

std::string CachedBackend::complete(const ChatRequest& request) {
    request.validate();
    const auto key = CacheKey::of(request);
    if (auto hit = cache_->get(key)) {
        ++hits_;
        return *std::move(hit);
    }
    ++misses_;
    if (!inner_) {
        throw TranscriptMiss(key.digest, prompt_echo(request));
    }
    std::string response = inner_->complete(request);
    cache_->put(key, response);
    return response;
}

std::optional<std::string> api_key_from_env() {
    for (const char* var : {"SURE_API_KEY", "OPENAI_API_KEY"}) {
        if (const char* v = std::getenv(var); v && *v) return std::string(v);
    }
    return std::nullopt;
}

// --- Stages -----------------------------------------------------------------------

std::string_view stage_name(Stage stage) {
    switch (stage) {
        case Stage::candidates: return "candidates";
        case Stage::summarize: return "summarize";
        case Stage::validity: return "validity";
        case Stage::ranking: return "ranking";
        case Stage::baseline: return "baseline";
    }
    return "candidates";
}

Stage parse_stage(std::string_view name) {
    for (Stage s : kAllStages) {
        if (stage_name(s) == name) return s;
    }
    std::string valid;
    for (Stage s : kAllStages) {
        if (!valid.empty()) valid += ", ";
        valid += stage_name(s);
    }
    throw ConfigError("unknown stage '" + std::string(name) + "'; valid stages: " + valid);
}

StageBackends::StageBackends(BackendPtr all) {
    if (!all) throw ConfigError("null backend");
    backends_.fill(all);
}

ChatBackend& StageBackends::at(Stage stage) const {
    const auto& b = backends_[static_cast<std::size_t>(stage)];
    if (!b) throw ConfigError("no backend assigned to stage " + std::string(stage_name(stage)));
    return *b;
}

StageBackends resolve_stage_backends(const StageConfig& config, const std::map<std::string, BackendPtr>& available) {
    auto lookup = [&](const std::string& name) -> BackendPtr {
        auto it = available.find(name);
        if (it == available.end() || !it->second) {
            std::string known;
            for (const auto& [n, _] : available) {
                if (!known.empty()) known += ", ";
                known += n;
            }
            throw ConfigError("unknown backend '" + name + "'; configured backends: " + known);
        }
        return it->second;
    };

    StageBackends out;
    std::array<bool, kAllStages.size()> assigned{};
    for (const auto& [stage_text, backend_name] : config.assignments) {
        Stage stage = parse_stage(stage_text);
        out.set(stage, lookup(backend_name));
        assigned[static_cast<std::size_t>(stage)] = true;
    }
    for (Stage s : kAllStages) {
        if (assigned[static_cast<std::size_t>(s)]) continue;
        if (config.default_backend.empty()) {
            throw ConfigError("stage " + std::string(stage_name(s)) + " has no backend and no default is set");
        }
        out.set(s, lookup(config.default_backend));
    }
    return out;
}

// --- Replay embeddings -----------------------------------------------------------

ReplayEmbeddingBackend::ReplayEmbeddingBackend(std::string name) : name_(std::move(name)) {}

void ReplayEmbeddingBackend::add(const std::string& text, std::vector<double> vector) {
    if (vector.empty()) throw FormatError("empty embedding vector");
    for (double v : vector) {
        if (!std::isfinite(v)) throw FormatError("non-finite embedding entry");
    }
    if (dimension_ == 0) dimension_ = vector.size();
    if (vector.size() != dimension_) {
        throw FormatError("embedding dimension " + std::to_string(vector.size()) + " differs from " +
                          std::to_string(dimension_));
    }
    vectors_[sha256_hex(text)] = std::move(vector);
}

ReplayEmbeddingBackend ReplayEmbeddingBackend::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open embedding transcript " + path.string());
    ReplayEmbeddingBackend backend;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            json j = json::parse(line);
            auto vec = j.at("embedding").get<std::vector<double>>();
            if (j.contains("text")) {
                backend.add(j.at("text").get<std::string>(), std::move(vec));
            } else {
                if (vec.empty()) throw FormatError("empty embedding vector");
                if (backend.dimension_ == 0) backend.dimension_ = vec.size();
                if (vec.size() != backend.dimension_) throw FormatError("embedding dimension mismatch");
                backend.vectors_[j.at("digest").get<std::string>()] = std::move(vec);
            }
        } catch (const json::exception& e) {
            throw FormatError("malformed embedding record at line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return backend;
}

std::vector<double> ReplayEmbeddingBackend::embed(const std::string& text) {
    const auto digest = sha256_hex(text);
    auto it = vectors_.find(digest);
    if (it == vectors_.end()) throw TranscriptMiss(digest, text);
    return it->second;
}

}  // namespace sure
