#include <catch2/catch_amalgamated.hpp>

#include <set>
#include <sstream>

#include "sure/errors.hpp"
#include "sure/eval.hpp"
#include "support.hpp"

using namespace sure;
using Catch::Matchers::ContainsSubstring;

namespace {

std::vector<QAExample> numbered(std::size_t n) {
    std::vector<QAExample> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back({"q" + std::to_string(i), "question", {"a"}});
    return out;
}

PredictionTrace answer(const std::string& id, const std::string& text) {
    PredictionTrace t;
    t.id = id;
    t.method = "test";
    t.final_answer = text;
    return t;
}

}  // namespace

TEST_CASE("dataset loading", "[eval]") {
    std::istringstream in(R"({"id":"x","question":"Q1","answers":["A"]}
{"question":"Q2","answers":["B","C"]}
{"id":7,"question":"Q3","answers":["D"]}
)");
    const auto d = load_dataset(in);
    REQUIRE(d.size() == 3);
    REQUIRE(d[1].id == "q1");
    REQUIRE(d[1].gold_answers == std::vector<std::string>{"B", "C"});
    REQUIRE(d[2].id == "7");

    std::stringstream round;
    write_dataset(d, round);
    REQUIRE(load_dataset(round) == d);

    std::istringstream empty_answers("{\"question\":\"Q\",\"answers\":[]}\n{\"question\":\"Q\",\"answers\":[]}\n");
    REQUIRE_THROWS_WITH(load_dataset(empty_answers), ContainsSubstring("line 1"));
    std::istringstream dup("{\"id\":\"a\",\"question\":\"Q\",\"answers\":[\"x\"]}\n"
                           "{\"id\":\"a\",\"question\":\"Q\",\"answers\":[\"x\"]}\n");
    REQUIRE_THROWS_WITH(load_dataset(dup), ContainsSubstring("duplicate"));
}

TEST_CASE("subsampling", "[eval]") {
    const auto all = numbered(1000);
    REQUIRE(subsample(all, 1000, 5) == all);
    const auto a = subsample(all, 500, 1);
    REQUIRE(a.size() == 500);
    REQUIRE(a == subsample(all, 500, 1));
    REQUIRE_FALSE(a == subsample(all, 500, 2));
    REQUIRE_THROWS_AS(subsample(all, 1001, 1), ConfigError);
    std::set<std::string> ids;
    std::size_t last = 0;
    for (const auto& ex : a) {
        ids.insert(ex.id);
        const auto pos = static_cast<std::size_t>(std::stoul(ex.id.substr(1)));
        REQUIRE((ids.size() == 1 || pos > last));
        last = pos;
    }
    REQUIRE(ids.size() == 500);
}

TEST_CASE("subsampling is roughly uniform", "[eval][property]") {
    const auto all = numbered(10);
    std::vector<int> hits(10, 0);
    for (std::uint64_t seed = 0; seed < 4000; ++seed) {
        for (const auto& ex : subsample(all, 3, seed)) ++hits[std::stoul(ex.id.substr(1))];
    }
    // Expected 1200 per item; a tolerance of 150 is more than 4 standard deviations.
    for (int h : hits) REQUIRE(std::abs(h - 1200) < 150);
}

TEST_CASE("answer normalization", "[eval]") {
    REQUIRE(normalize_answer("The Eiffel Tower!") == "eiffel tower");
    REQUIRE(normalize_answer("paris") == "paris");
    REQUIRE(normalize_answer("A  cat,  the hat") == "cat hat");
    REQUIRE(normalize_answer("") == "");
}

TEST_CASE("exact match and F1", "[eval]") {
    const std::vector<std::string> paris{"Paris"};
    REQUIRE(exact_match("Paris", paris) == 1);
    REQUIRE(exact_match("The Eiffel Tower", std::vector<std::string>{"Eiffel Tower"}) == 1);
    REQUIRE(exact_match("London", paris) == 0);
    REQUIRE(f1_score("Barack Obama", std::vector<std::string>{"Obama"}) == Catch::Approx(2.0 / 3.0));
    REQUIRE(f1_score("same words", std::vector<std::string>{"same words"}) == 1.0);
    REQUIRE(f1_score("one two", std::vector<std::string>{"three four"}) == 0.0);
    REQUIRE(f1_score("the", std::vector<std::string>{"a"}) == 1.0);
    REQUIRE(f1_score("", paris) == 0.0);
}

TEST_CASE("metrics agree with the reference table and regex oracle", "[eval]") {
    for (const auto& c : testsupport::squad_reference_table()) {
        INFO(c.prediction);
        REQUIRE(exact_match(c.prediction, c.golds) == c.em);
        REQUIRE(std::abs(f1_score(c.prediction, c.golds) - c.f1) <= 1e-9);
    }
}

TEST_CASE("metrics agree with the regex oracle on random strings", "[eval][property]") {
    std::mt19937_64 rng(31);
    const std::vector<std::string> pieces{"the", "a", "an", "The", "cat", "Cat's", "dog,", "an-apple", "  ", "x.y",
                                          "theatre", "A", "1,000", "!", "rock", "n", "roll", "\t"};
    for (int i = 0; i < 2000; ++i) {
        auto sample = [&] {
            std::string s;
            const int n = static_cast<int>(rng() % 6);
            for (int j = 0; j < n; ++j) s += pieces[rng() % pieces.size()] + (rng() % 3 ? " " : "");
            return s;
        };
        const std::string p = sample();
        const std::vector<std::string> golds{sample(), sample()};
        INFO(p);
        REQUIRE(normalize_answer(p) == testsupport::reference_normalize(p));
        REQUIRE(exact_match(p, golds) == testsupport::reference_em(p, golds));
        REQUIRE(std::abs(f1_score(p, golds) - testsupport::reference_f1(p, golds)) <= 1e-12);
    }
}

TEST_CASE("bootstrap intervals", "[eval]") {
    REQUIRE(bootstrap_ci(std::vector<double>(10, 1.0)).lo == 1.0);
    REQUIRE(bootstrap_ci(std::vector<double>(10, 1.0)).hi == 1.0);
    REQUIRE(bootstrap_ci(std::vector<double>(10, 0.0)).hi == 0.0);
    REQUIRE_THROWS_AS(bootstrap_ci(std::vector<double>{}), ConfigError);
    REQUIRE_THROWS_AS(bootstrap_ci(std::vector<double>{1.0}, 10, 1.5), ConfigError);

    std::vector<double> v;
    for (int i = 0; i < 100; ++i) v.push_back(i % 4 == 0 ? 1.0 : 0.0);
    const auto narrow = bootstrap_ci(v, 1000, 0.5, 3);
    const auto wide = bootstrap_ci(v, 1000, 0.99, 3);
    REQUIRE(wide.lo <= narrow.lo);
    REQUIRE(wide.hi >= narrow.hi);
    REQUIRE(narrow.lo <= 0.25);
    REQUIRE(narrow.hi >= 0.25);
}

TEST_CASE("run evaluation", "[eval]") {
    const std::vector<QAExample> data{{"a", "Q", {"Paris"}},
                                      {"b", "Q", {"Barack Hussein Obama"}},
                                      {"c", "Q", {"Rome"}},
                                      {"d", "Q", {"Oslo"}}};
    SECTION("all correct") {
        std::vector<PredictionTrace> t{answer("a", "Paris"), answer("c", "rome.")};
        const auto r = evaluate_run(t, data);
        REQUIRE(r.em == 1.0);
        REQUIRE(r.f1 == 1.0);
    }
    SECTION("hand-built four items") {
        auto failed = answer("d", "Oslo");
        failed.error = "transport";
        std::vector<PredictionTrace> t{answer("a", "Paris"), answer("b", "Obama"), answer("c", "Milan"), failed};
        const auto r = evaluate_run(t, data);
        REQUIRE(r.em == 0.25);
        REQUIRE(r.f1 == Catch::Approx((1.0 + 0.5 + 0.0 + 0.0) / 4.0));
        REQUIRE(r.failed == 1);
        REQUIRE(r.em_ci.has_value());
        REQUIRE(r.method == "test");
        REQUIRE(format_report_table(std::vector<MetricsReport>{r}).find("25.0") != std::string::npos);
        REQUIRE(report_record(r).find("\"em\":0.25") != std::string::npos);
    }
    SECTION("unknown or repeated ids") {
        std::vector<PredictionTrace> unknown{answer("zzz", "x")};
        REQUIRE_THROWS_AS(evaluate_run(unknown, data), FormatError);
        std::vector<PredictionTrace> twice{answer("a", "x"), answer("a", "y")};
        REQUIRE_THROWS_AS(evaluate_run(twice, data), FormatError);
    }
}
