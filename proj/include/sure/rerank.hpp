#pragma once

/** \file rerank.hpp
 *  \brief TF-IDF and embedding similarity: candidate/summary overlap analysis
 *         and single-passage reranking keyed on a summary or the question.
 *
 * TF-IDF weights are raw term counts times idf(t) = ln(1 + doc_count / df(t)),
 * with terms from tokenize().
 */

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sure/bm25.hpp"
#include "sure/corpus.hpp"
#include "sure/llm.hpp"
#include "sure/pipeline.hpp"

namespace sure {

using SparseVector = std::map<std::string, double, std::less<>>;

class TfidfModel {
public:
    /// Throws ConfigError on an empty document list.
    static TfidfModel fit(std::span<const std::string> documents);

    std::size_t doc_count() const noexcept { return doc_count_; }
    std::size_t df(std::string_view term) const;
    /// 0 for terms never seen while fitting.
    double idf(std::string_view term) const;

    SparseVector vectorize(std::string_view text) const;

private:
    std::size_t doc_count_{0};
    std::map<std::string, std::size_t, std::less<>> df_;
};

/// Cosine of two sparse vectors; 0 (with a warning) if either is all zeros.
double cosine(const SparseVector& a, const SparseVector& b);
/// Dense cosine; throws ConfigError on a dimension mismatch.
double cosine(std::span<const double> a, std::span<const double> b);

/// K x K matrix, entry (i, j) = cosine(tfidf(candidate_i), tfidf(summary_j)),
/// idf fitted on candidates and summaries together. Entries are clamped to [0, 1].
std::vector<std::vector<double>> overlap_matrix(std::span<const std::string> candidates,
                                                std::span<const std::string> summaries);

enum class SimilarityMode { tfidf, embedding };

SimilarityMode parse_similarity_mode(std::string_view name);

struct RankedPassage {
    Passage passage;
    double score{0.0};
};

/// Passages sorted by descending cosine(key, title + " " + text), ties by ascending id.
/// TF-IDF mode fits idf over the key and the passages. Embedding mode needs a backend
/// and surfaces its failures.
std::vector<RankedPassage> rerank_passages(std::string_view key_text, std::span<const Passage> passages,
                                           SimilarityMode mode, EmbeddingBackend* embedder = nullptr);

/// What the single-passage reranker keys on.
enum class RerankKey {
    /// The winning conditional summary of a SuRe trace.
    sure_summary,
    /// A freshly generated generic summary of the retrieved passages.
    generic_summary,
    /// The question itself.
    question,
};

RerankKey parse_rerank_key(std::string_view name);
std::string_view rerank_key_name(RerankKey key);

struct Top1Options {
    RerankKey key{RerankKey::sure_summary};
    SimilarityMode mode{SimilarityMode::tfidf};
    EmbeddingBackend* embedder{nullptr};
};

/// Reranks the N retrieved passages by the chosen key, keeps the top one, and
/// answers with the base prompt over that single passage. When `sure_trace`
/// is given its retrieved ids are reused; otherwise passages are retrieved.
PredictionTrace top1_pipeline(const QuestionInput& q, const InvertedIndex& index, const Corpus& corpus,
                              const PredictionTrace* sure_trace, const StageBackends& backends,
                              const PipelineOptions& options, const Top1Options& top1);

/// Plain-text rendering of a matrix with row/column labels.
std::string format_matrix(const std::vector<std::vector<double>>& matrix, std::string_view row_label,
                          std::string_view col_label);

}  // namespace sure
