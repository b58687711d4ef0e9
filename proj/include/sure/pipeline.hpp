#pragma once

/** \file pipeline.hpp
 *  \brief Summarized-retrieval QA: candidate generation, candidate-conditioned
 *         summarization, verification, and answer selection, plus the
 *         prompting baselines that share its plumbing.
 *
 * Flow for one question:
 *
 *   retrieve N passages
 *   -> one call producing K labeled candidates
 *   -> K summaries, each conditioned on one candidate
 *   -> K validity checks (question, candidate, summary) -> v_k in {0,1}
 *   -> every unordered summary pair asked twice, once per presentation order
 *   -> argmax_k v_k + rank_k, ties to the earliest candidate
 *
 * Pair scoring: each ranking query awards 1 to the chosen summary and 0 to the
 * other, or 0.5/0.5 when the response names neither. The pair score of k
 * against i is the mean of k's awards over the two orders, so
 * pair(k,i) + pair(i,k) = 1 and a backend that always answers by position
 * leaves every summary at exactly 0.5 per opponent.
 */

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sure/bm25.hpp"
#include "sure/errors.hpp"
#include "sure/llm.hpp"
#include "sure/prompts.hpp"

namespace sure {

struct PipelineOptions {
    std::size_t n{10};
    std::size_t k{2};
    double temperature{0.0};
    /// Optional per-stage completion cap; no cap when absent.
    std::map<Stage, int> max_tokens;
    PromptKit prompts;
    /// When non-empty, candidate generation (and the base baseline) use the few-shot templates.
    std::vector<FewShotExample> shots;
};

struct CallRecord {
    std::string stage;
    std::string backend;
    std::string model;
    std::string digest;
    std::string prompt;
    std::string response;

    bool operator==(const CallRecord&) const = default;
};

/// Issues completions for pipeline stages and records every exchange.
class CallLog {
public:
    std::string complete(ChatBackend& backend, Stage stage, std::string prompt, const PipelineOptions& options);

    const std::vector<CallRecord>& records() const noexcept { return records_; }
    std::vector<CallRecord> take() { return std::move(records_); }

private:
    std::vector<CallRecord> records_;
};

struct CandidateSet {
    std::string question;
    std::vector<std::string> candidates;
    std::string raw_response;
};

struct ConditionalSummary {
    std::size_t candidate_index{0};
    std::string text;
};

struct PairVote {
    /// Candidate index shown as "Passage 1".
    std::size_t first{0};
    /// Candidate index shown as "Passage 2".
    std::size_t second{0};
    PassageChoice choice{PassageChoice::neither};

    bool operator==(const PairVote&) const = default;
};

struct PairwiseRanking {
    std::vector<double> rank;
    std::vector<PairVote> votes;

    /// Mean award of k over both presentation orders against i.
    double pair_score(std::size_t k, std::size_t i) const;
};

struct VerificationScores {
    std::vector<int> validity;
    PairwiseRanking ranking;
};

struct Selection {
    std::size_t index{0};
    std::string answer;
};

struct RerankEntry {
    std::string id;
    double score{0.0};

    bool operator==(const RerankEntry&) const = default;
};

struct PredictionTrace {
    std::string id;
    std::string method;
    std::string question;
    std::vector<std::string> retrieved_ids;
    std::vector<double> retrieved_scores;
    std::vector<std::string> candidates;
    std::string candidate_response;
    std::vector<std::string> summaries;
    std::vector<int> validity;
    std::vector<double> rank;
    std::vector<PairVote> pair_votes;
    std::optional<std::size_t> chosen_index;
    std::string final_answer;
    std::vector<CallRecord> calls;
    std::map<std::string, std::string> stage_backends;
    std::vector<std::string> notes;
    std::optional<std::string> error;
    /// Reranking runs only: the key text and the reranked order.
    std::string rerank_key;
    std::vector<RerankEntry> reranked;

    bool operator==(const PredictionTrace&) const = default;
};

/// Stage failure carrying everything recorded up to the failure point.
class PipelineError : public Error {
public:
    PipelineError(const std::string& what, PredictionTrace partial)
        : Error(what), partial_(std::move(partial)) {}
    const PredictionTrace& partial() const noexcept { return partial_; }

private:
    PredictionTrace partial_;
};

/// Backend calls run_sure issues without collapse: 1 + K + K + 2*C(K,2).
std::size_t expected_sure_calls(std::size_t k);

// --- stages ------------------------------------------------------------------

CandidateSet generate_candidates(std::string_view question, std::span<const Passage> passages, std::size_t k,
                                 ChatBackend& backend, const PipelineOptions& options, CallLog& log);

/// Strips a trailing "[DONE]" marker and surrounding whitespace.
std::string clean_summary(std::string_view response);

ConditionalSummary summarize_conditional(std::string_view question, std::span<const Passage> passages,
                                         std::span<const std::string> candidates, std::size_t k,
                                         ChatBackend& backend, const PipelineOptions& options, CallLog& log);

/// 1 iff the response parses as true; false and unparseable both give 0.
int check_validity(std::string_view question, std::string_view candidate, std::string_view summary,
                   ChatBackend& backend, const PipelineOptions& options, CallLog& log);

PairwiseRanking rank_pairwise(std::string_view question, std::span<const std::string> summaries,
                              ChatBackend& backend, const PipelineOptions& options, CallLog& log);

/// Aggregates directed votes over K summaries into per-summary rank scores.
PairwiseRanking aggregate_pair_votes(std::size_t k, std::vector<PairVote> votes);

/// argmax_k validity[k] + rank[k]; ties resolve to the smallest index.
Selection select_answer(std::span<const std::string> candidates, std::span<const int> validity,
                        std::span<const double> rank);

// --- end-to-end methods --------------------------------------------------------

struct QuestionInput {
    std::string id;
    std::string question;
};

PredictionTrace run_sure(const QuestionInput& q, const InvertedIndex& index, const Corpus& corpus,
                         const StageBackends& backends, const PipelineOptions& options);

/// Same as run_sure but over an already retrieved passage list.
PredictionTrace run_sure_on(const QuestionInput& q, const RetrievedSet& retrieved, const StageBackends& backends,
                            const PipelineOptions& options);

PredictionTrace run_base(const QuestionInput& q, const InvertedIndex& index, const Corpus& corpus,
                         const StageBackends& backends, const PipelineOptions& options);

PredictionTrace run_no_retrieval(const QuestionInput& q, const StageBackends& backends,
                                 const PipelineOptions& options);

/// Generic (unconditioned) summary, then the base prompt over that summary as
/// a single passage titled "Summary".
PredictionTrace run_generic_sum(const QuestionInput& q, const InvertedIndex& index, const Corpus& corpus,
                                const StageBackends& backends, const PipelineOptions& options);

/// Candidates as for SuRe, then one multiple-choice prompt over them.
PredictionTrace run_mcq(const QuestionInput& q, const InvertedIndex& index, const Corpus& corpus,
                        const StageBackends& backends, const PipelineOptions& options);

/// Maps an MCQ response to an answer: a leading "(x)" label within range is
/// replaced by that candidate's text. Returns nullopt in `note` unless the
/// label was out of range.
std::string resolve_mcq_answer(std::string_view response, std::span<const std::string> candidates,
                               std::optional<std::string>* note = nullptr);

}  // namespace sure
