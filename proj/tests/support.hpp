#pragma once

// Shared fixtures and reference implementations for the test binaries.
// The references are written straight from the formulas, without reusing any
// library internals, so they can serve as oracles.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include "sure/corpus.hpp"
#include "sure/llm.hpp"
#include "sure/pipeline.hpp"

namespace testsupport {

class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
        path_ = std::filesystem::temp_directory_path() /
                ("sure-test-" + std::to_string(stamp) + "-" + std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& p, const std::string& content) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << content;
}

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

// --- BM25 reference ---------------------------------------------------------

inline std::vector<std::string> ascii_words(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : text + " ") {
        auto c = static_cast<unsigned char>(ch);
        if (std::isalnum(c)) {
            cur.push_back(static_cast<char>(std::tolower(c)));
        } else if (!cur.empty()) {
            out.push_back(cur);
            cur.clear();
        }
    }
    return out;
}

/// Brute-force Okapi BM25 over title + text, recounting everything per call.
inline double reference_bm25(const std::vector<sure::Passage>& docs, const std::string& query, std::size_t target,
                             double k1 = 1.2, double b = 0.75) {
    std::vector<std::vector<std::string>> toks;
    double total = 0;
    for (const auto& d : docs) {
        toks.push_back(ascii_words(d.title + " " + d.text));
        total += static_cast<double>(toks.back().size());
    }
    const double n = static_cast<double>(docs.size());
    const double avg = total / n;
    double score = 0;
    for (const auto& q : ascii_words(query)) {
        double df = 0;
        for (const auto& t : toks) df += std::count(t.begin(), t.end(), q) > 0 ? 1 : 0;
        const double idf = std::log((n - df + 0.5) / (df + 0.5) + 1.0);
        const double tf = static_cast<double>(std::count(toks[target].begin(), toks[target].end(), q));
        const double len = static_cast<double>(toks[target].size());
        score += idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * len / avg));
    }
    return score;
}

// --- SQuAD reference (regex port of the official normalizer) ------------------

inline std::string reference_normalize(const std::string& s) {
    std::string lower;
    for (char ch : s) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    const std::string punct = "!\"#$%&'()*+,-./:;<=>?@[\\]^_`{|}~";
    std::string nopunct;
    for (char ch : lower) {
        if (punct.find(ch) == std::string::npos) nopunct.push_back(ch);
    }
    static const std::regex articles(R"(\b(a|an|the)\b)");
    const std::string spaced = std::regex_replace(nopunct, articles, " ");
    std::istringstream in(spaced);
    std::string word, out;
    while (in >> word) out += (out.empty() ? "" : " ") + word;
    return out;
}

inline double reference_f1(const std::string& pred, const std::vector<std::string>& golds) {
    double best = 0;
    for (const auto& g : golds) {
        std::istringstream pin(reference_normalize(pred)), gin(reference_normalize(g));
        std::vector<std::string> p, q;
        for (std::string w; pin >> w;) p.push_back(w);
        for (std::string w; gin >> w;) q.push_back(w);
        double f = 0;
        if (p.empty() || q.empty()) {
            f = p.empty() && q.empty() ? 1 : 0;
        } else {
            std::map<std::string, int> pc, qc;
            for (auto& w : p) ++pc[w];
            for (auto& w : q) ++qc[w];
            int common = 0;
            for (auto& [w, c] : pc) common += std::min(c, qc[w]);
            if (common > 0) {
                double pr = double(common) / p.size(), rc = double(common) / q.size();
                f = 2 * pr * rc / (pr + rc);
            }
        }
        best = std::max(best, f);
    }
    return best;
}

inline int reference_em(const std::string& pred, const std::vector<std::string>& golds) {
    for (const auto& g : golds) {
        if (reference_normalize(pred) == reference_normalize(g)) return 1;
    }
    return 0;
}

/// Reference values produced by the official SQuAD evaluation script logic in Python.
struct SquadCase {
    std::string prediction;
    std::vector<std::string> golds;
    int em;
    double f1;
};

inline const std::vector<SquadCase>& squad_reference_table() {
    static const std::vector<SquadCase> cases = {
        {"The Eiffel Tower", {"Eiffel Tower"}, 1, 1},
        {"eiffel tower.", {"The Eiffel Tower"}, 1, 1},
        {"Paris, France", {"Paris"}, 0, 0.66666666666666663},
        {"in 1889", {"1889"}, 0, 0.66666666666666663},
        {"Barack Obama", {"Obama", "Barack Hussein Obama"}, 0, 0.80000000000000004},
        {"an apple a day", {"apple day"}, 1, 1},
        {"theatre", {"the atre"}, 0, 0},
        {"George Washington Carver", {"George Washington"}, 0, 0.80000000000000004},
        {"", {"something"}, 0, 0},
        {"the", {""}, 1, 1},
        {"A", {"an"}, 1, 1},
        {"Rock 'n' Roll", {"rock n roll"}, 1, 1},
        {"U.S.A.", {"USA"}, 1, 1},
        {"New  York   City", {"new york city"}, 1, 1},
        {"cats cats dogs", {"cats dogs dogs"}, 0, 0.66666666666666663},
        {"Mount Everest in Nepal", {"Everest", "Mount Everest"}, 0, 0.66666666666666663},
        {"1,000", {"1000"}, 1, 1},
        {"Dr. Martin Luther King Jr.", {"Martin Luther King"}, 0, 0.74999999999999989},
        {"blue", {"red", "green"}, 0, 0},
        {"the the the", {"a an"}, 1, 1},
        {"Thomas the Tank Engine", {"Thomas Tank Engine"}, 1, 1},
        {"over-the-counter", {"overthecounter"}, 1, 1},
        {"Anne of Green Gables", {"anne green gables"}, 0, 0.8571428571428571},
        {"the Beatles and The Rolling Stones", {"The Beatles"}, 0, 0.40000000000000002},
        {"42", {"forty-two", "42"}, 1, 1},
    };
    return cases;
}

// --- pipeline fixtures ---------------------------------------------------------

inline sure::Corpus small_corpus() {
    sure::Corpus c;
    c.add({"d1", "Eiffel Tower", "The Eiffel Tower is a wrought-iron lattice tower in Paris, completed in 1889."});
    c.add({"d2", "Louvre", "The Louvre in Paris is the most visited museum in the world."});
    c.add({"d3", "Big Ben", "Big Ben is the nickname for the Great Bell of the clock at Westminster in London."});
    c.add({"d4", "Tower Bridge", "Tower Bridge is a bridge in London built between 1886 and 1894."});
    c.add({"d5", "Colosseum", "The Colosseum is an oval amphitheatre in the centre of Rome."});
    return c;
}

/// Scripted SuRe responder: routes each prompt by its recognisable framing.
struct SureScript {
    std::string candidates{"(a) Paris, (b) London"};
    std::map<std::string, std::string> summary_for;   // candidate -> summary
    std::map<std::string, std::string> validity_for;  // summary -> "True"/"False"
    std::string ranking{"Passage 1"};
    std::string baseline{"Paris"};

    std::string operator()(const sure::ChatRequest& r) const {
        const auto& p = r.messages.front().content;
        if (p.find("provide two correct candidates") != std::string::npos ||
            p.find("correct candidates for the answer") != std::string::npos) {
            return candidates;
        }
        if (p.find("Does the passage correctly support the prediction?") != std::string::npos) {
            for (const auto& [s, v] : validity_for) {
                if (p.find(s) != std::string::npos) return v;
            }
            return "False";
        }
        if (p.find("Target Question:") != std::string::npos) return ranking;
        if (p.find("support the given prediction") != std::string::npos) {
            for (const auto& [cand, s] : summary_for) {
                const auto at = p.find("Prediction: (");
                if (at != std::string::npos && p.compare(at + 16, cand.size() + 1, cand + "\n") == 0) return s;
            }
            return "No summary.";
        }
        return baseline;
    }
};

}  // namespace testsupport
