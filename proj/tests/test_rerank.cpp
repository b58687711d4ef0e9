#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "sure/errors.hpp"
#include "sure/rerank.hpp"
#include "support.hpp"

using namespace sure;

TEST_CASE("tfidf fitting", "[rerank]") {
    const std::vector<std::string> one{"alpha beta beta"};
    const auto single = TfidfModel::fit(one);
    REQUIRE(single.df("alpha") == 1);
    REQUIRE(single.df("beta") == 1);
    REQUIRE(single.idf("alpha") == Catch::Approx(std::log(2.0)));

    const std::vector<std::string> docs{"common rare", "common", "common other"};
    const auto m = TfidfModel::fit(docs);
    REQUIRE(m.idf("common") < m.idf("rare"));
    REQUIRE(m.idf("common") == Catch::Approx(std::log(1.0 + 3.0 / 3.0)));
    REQUIRE(m.idf("unseen") == 0.0);
    const auto v = m.vectorize("rare rare common");
    REQUIRE(v.at("rare") == Catch::Approx(2.0 * std::log(1.0 + 3.0)));
    REQUIRE(TfidfModel::fit(docs).vectorize("rare") == m.vectorize("rare"));
    REQUIRE_THROWS_AS(TfidfModel::fit(std::vector<std::string>{}), ConfigError);
}

TEST_CASE("cosine", "[rerank]") {
    const SparseVector x{{"a", 1.0}, {"b", 2.0}};
    REQUIRE(cosine(x, x) == Catch::Approx(1.0).epsilon(1e-12));
    REQUIRE(cosine(SparseVector{{"a", 1.0}}, SparseVector{{"b", 1.0}}) == 0.0);
    // Hand computation: dot 3, norms sqrt(5) and 5.
    const SparseVector y{{"a", 3.0}, {"c", 4.0}};
    REQUIRE(std::abs(cosine(x, y) - 3.0 / (5.0 * std::sqrt(5.0))) <= 1e-12);
    REQUIRE(cosine(SparseVector{}, x) == 0.0);

    const std::vector<double> d1{1, 0}, d2{1, 1}, d3{1, 2, 3};
    REQUIRE(cosine(std::span<const double>(d1), std::span<const double>(d2)) == Catch::Approx(1.0 / std::sqrt(2.0)));
    REQUIRE_THROWS_AS(cosine(std::span<const double>(d1), std::span<const double>(d3)), ConfigError);
}

TEST_CASE("overlap matrix", "[rerank]") {
    const std::vector<std::string> c{"Marie Curie", "Albert Einstein"};
    const std::vector<std::string> s{"Marie Curie won two Nobel prizes.", "Albert Einstein explained relativity."};
    const auto m = overlap_matrix(c, s);
    REQUIRE(m.size() == 2);
    REQUIRE(m[0][0] > m[0][1]);
    REQUIRE(m[1][1] > m[1][0]);

    const auto same = overlap_matrix(c, c);
    REQUIRE(same[0][0] == Catch::Approx(1.0));
    REQUIRE(same[1][1] == Catch::Approx(1.0));

    const std::vector<std::string> left{"aaa", "bbb"}, right{"ccc", "ddd"};
    for (const auto& row : overlap_matrix(left, right)) {
        for (double v : row) REQUIRE(v == 0.0);
    }
    const std::vector<std::string> blank{"", "x"};
    REQUIRE(overlap_matrix(blank, blank)[0][0] == 0.0);
}

TEST_CASE("overlap entries stay in [0, 1]", "[rerank][property]") {
    std::mt19937_64 rng(29);
    const std::vector<std::string> words{"a1", "b2", "c3", "d4", "e5"};
    for (int i = 0; i < 300; ++i) {
        std::vector<std::string> c(3), s(3);
        for (auto* v : {&c, &s}) {
            for (auto& t : *v) {
                for (int w = 0; w < 4; ++w) t += words[rng() % words.size()] + " ";
            }
        }
        for (const auto& row : overlap_matrix(c, s)) {
            for (double v : row) {
                REQUIRE(v >= 0.0);
                REQUIRE(v <= 1.0);
            }
        }
    }
}

TEST_CASE("passage reranking", "[rerank]") {
    const std::vector<Passage> ps{{"p1", "Bears", "Bears hibernate in winter."},
                                  {"p2", "Sharks", "Sharks swim in the ocean."},
                                  {"p3", "Volcano", "Lava flows from an erupting volcano near the town."}};
    const auto r = rerank_passages("Lava flows from an erupting volcano near the town.", ps, SimilarityMode::tfidf);
    REQUIRE(r.front().passage.id == "p3");
    const std::vector<Passage> one{ps[1]};
    REQUIRE(rerank_passages("anything", one, SimilarityMode::tfidf).front().passage.id == "p2");

    ReplayEmbeddingBackend embed;
    embed.add("key", {1.0, 0.0});
    embed.add("Bears Bears hibernate in winter.", {0.0, 1.0});
    embed.add("Sharks Sharks swim in the ocean.", {0.6, 0.8});
    embed.add("Volcano Lava flows from an erupting volcano near the town.", {0.8, 0.6});
    const auto e = rerank_passages("key", ps, SimilarityMode::embedding, &embed);
    REQUIRE(e[0].passage.id == "p3");
    REQUIRE(e[1].passage.id == "p2");
    REQUIRE(e[2].passage.id == "p1");
    REQUIRE(e[0].score == Catch::Approx(0.8));

    ReplayEmbeddingBackend missing;
    missing.add("key", {1.0, 0.0});
    REQUIRE_THROWS_AS(rerank_passages("key", ps, SimilarityMode::embedding, &missing), TranscriptMiss);
    REQUIRE_THROWS_AS(rerank_passages("key", ps, SimilarityMode::embedding, nullptr), ConfigError);
}

TEST_CASE("single-passage pipeline keyed on the winning summary", "[rerank]") {
    const auto corpus = testsupport::small_corpus();
    const auto index = InvertedIndex::build(corpus);
    PipelineOptions options;
    options.n = 3;

    PredictionTrace sure_trace;
    sure_trace.id = "x";
    sure_trace.question = "Where is the Louvre?";
    sure_trace.retrieved_ids = {"d2", "d1", "d3"};
    sure_trace.retrieved_scores = {3.0, 2.0, 1.0};
    sure_trace.candidates = {"Paris", "London"};
    sure_trace.summaries = {"The Eiffel Tower is a wrought-iron lattice tower in Paris", "London"};
    sure_trace.chosen_index = 0;

    std::string seen_prompt;
    auto b = std::make_shared<ScriptedBackend>("s", "m", [&](const ChatRequest& r) {
        seen_prompt = r.messages.front().content;
        return "Paris";
    });
    const Top1Options top1{RerankKey::sure_summary, SimilarityMode::tfidf, nullptr};
    const auto t = top1_pipeline({"x", sure_trace.question}, index, corpus, &sure_trace, StageBackends(b), options, top1);
    REQUIRE(t.method == "rerank-summary-tfidf");
    REQUIRE(t.retrieved_ids == sure_trace.retrieved_ids);
    REQUIRE(t.reranked.front().id == "d1");
    REQUIRE(seen_prompt.find("Passage #1 Title: Eiffel Tower") != std::string::npos);
    REQUIRE(seen_prompt.find("Passage #2") == std::string::npos);
    REQUIRE(t.final_answer == "Paris");

    sure_trace.chosen_index.reset();
    const auto fallback =
        top1_pipeline({"x", sure_trace.question}, index, corpus, &sure_trace, StageBackends(b), options, top1);
    REQUIRE(!fallback.notes.empty());

    const Top1Options by_question{RerankKey::question, SimilarityMode::tfidf, nullptr};
    const auto q = top1_pipeline({"y", "Louvre museum"}, index, corpus, nullptr, StageBackends(b), options, by_question);
    REQUIRE(q.reranked.front().id == "d2");
}

TEST_CASE("key and mode names", "[rerank]") {
    REQUIRE(parse_rerank_key("summary") == RerankKey::sure_summary);
    REQUIRE(parse_rerank_key("generic") == RerankKey::generic_summary);
    REQUIRE(parse_rerank_key("question") == RerankKey::question);
    REQUIRE_THROWS_AS(parse_rerank_key("other"), ConfigError);
    REQUIRE(parse_similarity_mode("embedding") == SimilarityMode::embedding);
    REQUIRE_THROWS_AS(parse_similarity_mode("bm25"), ConfigError);
    const auto table = format_matrix({{1.0, 0.0}, {0.0, 1.0}}, "candidate", "summary");
    REQUIRE(table.find("candidate #2") != std::string::npos);
    REQUIRE(table.find("1.0000") != std::string::npos);
}
