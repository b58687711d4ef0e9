#pragma once

/** \file bm25.hpp
 *  \brief Okapi BM25 inverted index over a Corpus.
 *
 * Scoring, for query tokens q_1..q_m (duplicates count once per occurrence):
 *
 *   score(d) = sum_j idf(q_j) * tf*(k1+1) / (tf + k1*(1 - b + b*len(d)/avg_len))
 *   idf(t)   = ln((doc_count - df(t) + 0.5) / (df(t) + 0.5) + 1)
 *
 * The +1 inside the log keeps every idf, and hence every score, non-negative.
 *
 * Thread-safety: the index is immutable after build; concurrent queries are safe.
 */

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sure/corpus.hpp"

namespace sure {

struct Bm25Params {
    double k1{1.2};
    double b{0.75};
};

struct Posting {
    std::uint32_t position;
    std::uint32_t tf;

    bool operator==(const Posting&) const = default;
};

class InvertedIndex {
public:
    /// Throws ConfigError on an empty corpus or out-of-range parameters.
    static InvertedIndex build(const Corpus& corpus, Bm25Params params = {});

    /// Score of one passage. Terms absent from the passage contribute 0.
    double score(std::span<const std::string> query_tokens, std::size_t position) const;

    double idf(std::string_view term) const;
    std::size_t df(std::string_view term) const;

    const std::vector<Posting>* postings(std::string_view term) const;
    const std::map<std::string, std::vector<Posting>, std::less<>>& all_postings() const noexcept {
        return postings_;
    }
    std::span<const std::uint32_t> doc_lengths() const noexcept { return doc_len_; }
    std::span<const std::string> doc_ids() const noexcept { return doc_ids_; }
    double avg_doc_len() const noexcept { return avg_doc_len_; }
    std::size_t doc_count() const noexcept { return doc_len_.size(); }
    const Bm25Params& params() const noexcept { return params_; }

    /// Versioned line-oriented dump; load(save(x)) reproduces x exactly.
    void save(std::ostream& out) const;
    void save(const std::filesystem::path& path) const;
    static InvertedIndex load(std::istream& in);
    static InvertedIndex load(const std::filesystem::path& path);

    /// True when the index was built over exactly this corpus's id sequence.
    bool matches(const Corpus& corpus) const;

private:
    InvertedIndex() = default;
    void finalize();

    Bm25Params params_;
    std::map<std::string, std::vector<Posting>, std::less<>> postings_;
    std::vector<std::uint32_t> doc_len_;
    std::vector<std::string> doc_ids_;
    double avg_doc_len_{0.0};
};

struct ScoredPassage {
    Passage passage;
    double score;
};

struct RetrievedSet {
    std::string question;
    std::vector<ScoredPassage> entries;
    std::size_t n{0};

    std::vector<Passage> passages() const;
};

struct RetrieveOptions {
    /// Fill up to N with zero-score passages (ascending id) when too few match.
    bool pad_with_zero{false};
};

/// Top-N passages by BM25 of tokenize(question); score descending, ties by ascending id.
RetrievedSet retrieve(const InvertedIndex& index, const Corpus& corpus, std::string_view question,
                      std::size_t n, RetrieveOptions options = {});

}  // namespace sure
