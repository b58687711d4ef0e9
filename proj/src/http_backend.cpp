#include <semaphore>
#include <thread>

#include <httplib.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "sure/errors.hpp"
#include "sure/llm.hpp"

namespace sure {

using json = nlohmann::json;

namespace {

struct Endpoint {
    std::string origin;  // scheme://host[:port]
    std::string path;
};

Endpoint split_url(const std::string& url) {
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
        throw ConfigError("endpoint must be an absolute http(s) URL: " + url);
    }
    const auto scheme = url.substr(0, scheme_end);
    if (scheme != "http" && scheme != "https") {
        throw ConfigError("unsupported endpoint scheme: " + scheme);
    }
    auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

bool is_transient(int status) { return status == 429 || status >= 500; }

/// POST with bounded retries. Returns the body of the first 2xx response.
std::string post_with_retries(const HttpBackendConfig& config, const Endpoint& endpoint, const std::string& body) {
    httplib::Headers headers = {{"Authorization", "Bearer " + config.api_key}};
    std::string last_error;
    auto backoff = config.initial_backoff;
    const int attempts = std::max(1, config.max_attempts);
    for (int attempt = 1; attempt <= attempts; ++attempt) {
        httplib::Client client(endpoint.origin);
        client.set_connection_timeout(config.timeout);
        client.set_read_timeout(config.timeout);
        client.set_write_timeout(config.timeout);
        auto res = client.Post(endpoint.path, headers, body, "application/json");
        if (res && res->status >= 200 && res->status < 300) {
            return res->body;
        }
        if (res) {
            last_error = "HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 512);
            if (!is_transient(res->status)) break;
        } else {
            last_error = "connection error: " + httplib::to_string(res.error());
        }
        if (attempt < attempts) {
            spdlog::warn("{}: attempt {}/{} failed ({}); retrying in {} ms", config.name, attempt, attempts,
                         last_error, backoff.count());
            std::this_thread::sleep_for(backoff);
            backoff *= 2;
        }
    }
    throw TransportError(config.name + " request to " + config.endpoint + " failed: " + last_error);
}

void check_config(const HttpBackendConfig& config) {
    if (config.model.empty()) throw ConfigError("live backend " + config.name + " needs a model name");
    if (config.api_key.empty()) {
        throw ConfigError("live backend " + config.name +
                          " has no API key; set SURE_API_KEY (or OPENAI_API_KEY)");
    }
    if (config.parallelism == 0) throw ConfigError("backend parallelism must be >= 1");
}

}  // namespace

struct HttpBackend::Impl {
    explicit Impl(const HttpBackendConfig& config)
        : endpoint(split_url(config.endpoint)),
          slots(static_cast<std::ptrdiff_t>(std::min<std::size_t>(config.parallelism, 1024))) {}

    Endpoint endpoint;
    std::counting_semaphore<1024> slots;
};

HttpBackend::HttpBackend(HttpBackendConfig config) : config_(std::move(config)) {
    check_config(config_);
    impl_ = std::make_unique<Impl>(config_);
}

HttpBackend::~HttpBackend() = default;

std::string HttpBackend::request_body(const ChatRequest& request) {
    json messages = json::array();
    for (const auto& m : request.messages) {
        messages.push_back({{"role", role_name(m.role)}, {"content", m.content}});
    }
    json body = {{"model", request.model}, {"messages", messages}, {"temperature", request.temperature}};
    if (request.max_tokens) body["max_tokens"] = *request.max_tokens;
    return body.dump();
}

std::string HttpBackend::parse_response_body(std::string_view body) {
    try {
        json j = json::parse(body);
        const auto& content = j.at("choices").at(0).at("message").at("content");
        if (content.is_null()) return {};
        return content.get<std::string>();
    } catch (const json::exception& e) {
        throw TransportError(std::string("malformed chat-completions response: ") + e.what());
    }
}

std::string HttpBackend::complete(const ChatRequest& request) {
    request.validate();
    impl_->slots.acquire();
    struct Release {
        std::counting_semaphore<1024>& s;
        ~Release() { s.release(); }
    } release{impl_->slots};
    return parse_response_body(post_with_retries(config_, impl_->endpoint, request_body(request)));
}

struct HttpEmbeddingBackend::Impl {
    explicit Impl(const HttpBackendConfig& config) : endpoint(split_url(config.endpoint)) {}
    Endpoint endpoint;
};

HttpEmbeddingBackend::HttpEmbeddingBackend(HttpBackendConfig config) : config_(std::move(config)) {
    check_config(config_);
    impl_ = std::make_unique<Impl>(config_);
}

HttpEmbeddingBackend::~HttpEmbeddingBackend() = default;

std::vector<double> HttpEmbeddingBackend::parse_response_body(std::string_view body) {
    try {
        json j = json::parse(body);
        auto vec = j.at("data").at(0).at("embedding").get<std::vector<double>>();
        if (vec.empty()) throw TransportError("embedding response has an empty vector");
        return vec;
    } catch (const json::exception& e) {
        throw TransportError(std::string("malformed embeddings response: ") + e.what());
    }
}

std::vector<double> HttpEmbeddingBackend::embed(const std::string& text) {
    json body = {{"model", config_.model}, {"input", text}};
    return parse_response_body(post_with_retries(config_, impl_->endpoint, body.dump()));
}

}  // namespace sure
