#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "sure/digest.hpp"
#include "sure/errors.hpp"
#include "sure/llm.hpp"
#include "support.hpp"

using namespace sure;
using json = nlohmann::json;
using testsupport::TempDir;

namespace {

/// Local chat-completions stand-in: the handler decides status and body per attempt.
class FakeServer {
public:
    using Handler = std::function<std::pair<int, std::string>(const httplib::Request&, int attempt)>;

    explicit FakeServer(Handler handler) : handler_(std::move(handler)) {
        server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
            std::lock_guard lock(mu_);
            requests_.push_back(req.body);
            auth_.push_back(req.get_header_value("Authorization"));
            auto [status, body] = handler_(req, static_cast<int>(requests_.size()));
            res.status = status;
            res.set_content(body, "application/json");
        });
        server_.Post("/v1/embeddings", [](const httplib::Request&, httplib::Response& res) {
            res.set_content(R"({"data":[{"embedding":[0.5,0.25]}]})", "application/json");
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~FakeServer() {
        server_.stop();
        thread_.join();
    }

    std::string url(const std::string& path = "/v1/chat/completions") const {
        return "http://127.0.0.1:" + std::to_string(port_) + path;
    }
    std::vector<std::string> requests() const {
        std::lock_guard lock(mu_);
        return requests_;
    }
    std::vector<std::string> auth() const {
        std::lock_guard lock(mu_);
        return auth_;
    }

private:
    Handler handler_;
    httplib::Server server_;
    int port_{0};
    std::thread thread_;
    mutable std::mutex mu_;
    std::vector<std::string> requests_;
    std::vector<std::string> auth_;
};

std::string ok_body(const std::string& content) {
    return json{{"choices", {{{"message", {{"role", "assistant"}, {"content", content}}}}}}}.dump();
}

HttpBackendConfig fast_config(const std::string& url) {
    HttpBackendConfig cfg;
    cfg.model = "test-model";
    cfg.endpoint = url;
    cfg.api_key = "secret";
    cfg.initial_backoff = std::chrono::milliseconds(5);
    cfg.timeout = std::chrono::seconds(5);
    return cfg;
}

}  // namespace

TEST_CASE("sha256 matches known vectors", "[llm]") {
    REQUIRE(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    REQUIRE(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("cache key covers model, temperature, cap and content", "[llm]") {
    const auto base = ChatRequest::user_prompt("m", "hello");
    REQUIRE(CacheKey::of(base) == CacheKey::of(ChatRequest::user_prompt("m", "hello")));
    REQUIRE_FALSE(CacheKey::of(base) == CacheKey::of(ChatRequest::user_prompt("m2", "hello")));
    REQUIRE_FALSE(CacheKey::of(base) == CacheKey::of(ChatRequest::user_prompt("m", "hello", 0.5)));
    REQUIRE_FALSE(CacheKey::of(base) == CacheKey::of(ChatRequest::user_prompt("m", "hello", 0.0, 64)));
    REQUIRE_FALSE(CacheKey::of(base) == CacheKey::of(ChatRequest::user_prompt("m", "hello!")));
    REQUIRE(CacheKey::of(base).digest.size() == 64);
    REQUIRE(CacheKey::of(base).digest == sha256_hex(canonical_serialization(base)));
}

TEST_CASE("request validation", "[llm]") {
    ChatRequest empty;
    REQUIRE_THROWS_AS(empty.validate(), ConfigError);
    REQUIRE_THROWS_AS(ChatRequest::user_prompt("m", "x", -1.0).validate(), ConfigError);
}

TEST_CASE("scripted constant backend", "[llm]") {
    auto b = ScriptedBackend::constant("Passage 1");
    for (int i = 0; i < 5; ++i) REQUIRE(b->complete(ChatRequest::user_prompt("m", std::to_string(i))) == "Passage 1");
    REQUIRE(b->calls() == 5);
}

TEST_CASE("replay hits and misses", "[llm]") {
    auto t = std::make_shared<Transcript>();
    const auto req = ChatRequest::user_prompt("replay", "Is it?");
    t->add(req, "True");
    ReplayBackend replay("replay", "replay", t);
    REQUIRE(replay.complete(req) == "True");
    const auto other = ChatRequest::user_prompt("replay", "Something else");
    try {
        replay.complete(other);
        FAIL("expected a transcript miss");
    } catch (const TranscriptMiss& miss) {
        REQUIRE(miss.digest() == CacheKey::of(other).digest);
        REQUIRE(miss.prompt_echo().find("Something else") != std::string::npos);
    }
    REQUIRE_THROWS_AS(t->add(req, "False"), FormatError);
}

TEST_CASE("transcript loads all three line shapes and round-trips", "[llm]") {
    const auto a = ChatRequest::user_prompt("replay", "first");
    const auto b = ChatRequest::user_prompt("replay", "second");
    const auto c = ChatRequest::user_prompt("replay", "third");
    std::ostringstream lines;
    lines << json{{"digest", CacheKey::of(a).digest}, {"response", "A"}}.dump() << "\n";
    lines << json{{"request", {{"model", "replay"}, {"temperature", 0.0}, {"messages", {{{"role", "user"}, {"content", "second"}}}}}},
                  {"response", "B"}}
                 .dump()
          << "\n\n";
    lines << json{{"id", "q"}, {"calls", {{{"digest", CacheKey::of(c).digest}, {"prompt", "third"}, {"response", "C"}}}}}
                 .dump()
          << "\n";
    std::istringstream in(lines.str());
    const auto t = Transcript::load(in);
    REQUIRE(t.size() == 3);
    REQUIRE(t.find(CacheKey::of(a).digest)->response == "A");
    REQUIRE(t.find(CacheKey::of(b).digest)->response == "B");
    REQUIRE(t.find(CacheKey::of(c).digest)->response == "C");

    std::ostringstream saved;
    t.save(saved);
    std::istringstream again(saved.str());
    const auto t2 = Transcript::load(again);
    std::ostringstream saved2;
    t2.save(saved2);
    REQUIRE(saved.str() == saved2.str());
}

TEST_CASE("response cache", "[llm]") {
    TempDir dir;
    auto cache = std::make_shared<ResponseCache>(dir / "cache");
    auto inner = std::make_shared<ScriptedBackend>("s", "m", [](const ChatRequest& r) {
        return "echo:" + r.messages.front().content + "\n  with trailing space ";
    });
    CachedBackend cached(inner, cache);
    const auto r1 = ChatRequest::user_prompt("m", "hi");

    SECTION("identical requests call the backend once and bytes are preserved") {
        const auto first = cached.complete(r1);
        const auto second = cached.complete(r1);
        REQUIRE(first == second);
        REQUIRE(first == "echo:hi\n  with trailing space ");
        REQUIRE(inner->calls() == 1);
        REQUIRE(cached.hits() == 1);
        REQUIRE(cached.misses() == 1);
    }
    SECTION("temperature difference means two calls") {
        cached.complete(r1);
        cached.complete(ChatRequest::user_prompt("m", "hi", 0.7));
        REQUIRE(inner->calls() == 2);
    }
    SECTION("populated cache serves without a backend") {
        cached.complete(r1);
        CachedBackend offline("s", "m", cache);
        REQUIRE(offline.complete(r1) == "echo:hi\n  with trailing space ");
        REQUIRE_THROWS_AS(offline.complete(ChatRequest::user_prompt("m", "new")), TranscriptMiss);
    }
    SECTION("no stray temporary files") {
        cached.complete(r1);
        std::size_t files = 0;
        for (const auto& e : std::filesystem::directory_iterator(dir / "cache")) {
            ++files;
            REQUIRE(e.path().extension() == ".response");
        }
        REQUIRE(files == 1);
    }
}

TEST_CASE("stage backend resolution", "[llm]") {
    auto a = ScriptedBackend::constant("A", "a");
    auto b = ScriptedBackend::constant("B", "b");
    const std::map<std::string, BackendPtr> available{{"a", a}, {"b", b}};

    StageConfig all{"a", {}};
    const auto uniform = resolve_stage_backends(all, available);
    for (Stage s : kAllStages) REQUIRE(&uniform.at(s) == a.get());

    StageConfig hybrid{"a", {{"validity", "b"}, {"ranking", "b"}}};
    const auto mixed = resolve_stage_backends(hybrid, available);
    REQUIRE(&mixed.at(Stage::candidates) == a.get());
    REQUIRE(&mixed.at(Stage::summarize) == a.get());
    REQUIRE(&mixed.at(Stage::validity) == b.get());
    REQUIRE(&mixed.at(Stage::ranking) == b.get());

    StageConfig typo{"a", {{"valdity", "b"}}};
    REQUIRE_THROWS_WITH(resolve_stage_backends(typo, available),
                        Catch::Matchers::ContainsSubstring("candidates") &&
                            Catch::Matchers::ContainsSubstring("validity"));
    StageConfig unknown{"zzz", {}};
    REQUIRE_THROWS_AS(resolve_stage_backends(unknown, available), ConfigError);
}

TEST_CASE("wire format and bearer auth", "[llm][http]") {
    FakeServer server([](const httplib::Request&, int) { return std::pair{200, ok_body("Paris")}; });
    HttpBackend backend(fast_config(server.url()));
    REQUIRE(backend.complete(ChatRequest::user_prompt("test-model", "Where?", 0.0, 16)) == "Paris");
    const auto body = json::parse(server.requests().at(0));
    REQUIRE(body.at("model") == "test-model");
    REQUIRE(body.at("temperature") == 0.0);
    REQUIRE(body.at("max_tokens") == 16);
    REQUIRE(body.at("messages").size() == 1);
    REQUIRE(body.at("messages")[0].at("role") == "user");
    REQUIRE(body.at("messages")[0].at("content") == "Where?");
    REQUIRE(server.auth().at(0) == "Bearer secret");
}

TEST_CASE("transient failures are retried, client errors are not", "[llm][http]") {
    SECTION("500 then 429 then success") {
        FakeServer server([](const httplib::Request&, int attempt) {
            if (attempt == 1) return std::pair{500, std::string("boom")};
            if (attempt == 2) return std::pair{429, std::string("slow down")};
            return std::pair{200, ok_body("ok")};
        });
        HttpBackend backend(fast_config(server.url()));
        REQUIRE(backend.complete(ChatRequest::user_prompt("test-model", "x")) == "ok");
        REQUIRE(server.requests().size() == 3);
    }
    SECTION("persistent 503 gives a transport error after three attempts") {
        FakeServer server([](const httplib::Request&, int) { return std::pair{503, std::string("down")}; });
        HttpBackend backend(fast_config(server.url()));
        REQUIRE_THROWS_AS(backend.complete(ChatRequest::user_prompt("test-model", "x")), TransportError);
        REQUIRE(server.requests().size() == 3);
    }
    SECTION("401 fails immediately") {
        FakeServer server([](const httplib::Request&, int) { return std::pair{401, std::string("bad key")}; });
        HttpBackend backend(fast_config(server.url()));
        REQUIRE_THROWS_WITH(backend.complete(ChatRequest::user_prompt("test-model", "x")),
                            Catch::Matchers::ContainsSubstring("401"));
        REQUIRE(server.requests().size() == 1);
    }
    SECTION("unreachable host") {
        auto cfg = fast_config("http://127.0.0.1:1/v1/chat/completions");
        cfg.timeout = std::chrono::seconds(1);
        HttpBackend backend(cfg);
        REQUIRE_THROWS_AS(backend.complete(ChatRequest::user_prompt("test-model", "x")), TransportError);
    }
}

TEST_CASE("live configuration errors", "[llm][http]") {
    auto cfg = fast_config("http://127.0.0.1:1/v1/chat/completions");
    cfg.api_key.clear();
    REQUIRE_THROWS_WITH(HttpBackend(cfg), Catch::Matchers::ContainsSubstring("SURE_API_KEY"));
    cfg = fast_config("ftp://example.com/x");
    REQUIRE_THROWS_AS(HttpBackend(cfg), ConfigError);
    cfg = fast_config("http://127.0.0.1:1/x");
    cfg.model.clear();
    REQUIRE_THROWS_AS(HttpBackend(cfg), ConfigError);
    REQUIRE_THROWS_AS(HttpBackend::parse_response_body("{\"choices\":[]}"), TransportError);
}

TEST_CASE("api key environment lookup", "[llm]") {
    ::setenv("SURE_API_KEY", "one", 1);
    ::setenv("OPENAI_API_KEY", "two", 1);
    REQUIRE(api_key_from_env() == "one");
    ::unsetenv("SURE_API_KEY");
    REQUIRE(api_key_from_env() == "two");
    ::unsetenv("OPENAI_API_KEY");
    REQUIRE_FALSE(api_key_from_env().has_value());
}

TEST_CASE("embedding backends", "[llm]") {
    ReplayEmbeddingBackend replay;
    replay.add("hello", {1.0, 0.0});
    REQUIRE(replay.embed("hello") == std::vector<double>{1.0, 0.0});
    REQUIRE_THROWS_AS(replay.embed("unknown"), TranscriptMiss);
    REQUIRE_THROWS(replay.add("x", {1.0, 2.0, 3.0}));

    FakeServer server([](const httplib::Request&, int) { return std::pair{200, ok_body("")}; });
    auto cfg = fast_config(server.url("/v1/embeddings"));
    HttpEmbeddingBackend live(cfg);
    REQUIRE(live.embed("anything") == std::vector<double>{0.5, 0.25});
}
