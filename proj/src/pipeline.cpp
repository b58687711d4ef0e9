#include "sure/pipeline.hpp"

#include <algorithm>
#include <cctype>

namespace sure {

namespace {

PredictionTrace start_trace(const QuestionInput& q, std::string method) {
    PredictionTrace t;
    t.id = q.id;
    t.method = std::move(method);
    t.question = q.question;
    return t;
}

void record_retrieval(PredictionTrace& trace, const RetrievedSet& retrieved) {
    for (const auto& e : retrieved.entries) {
        trace.retrieved_ids.push_back(e.passage.id);
        trace.retrieved_scores.push_back(e.score);
    }
}

void record_backends(PredictionTrace& trace, const StageBackends& backends, std::initializer_list<Stage> stages) {
    for (Stage s : stages) {
        trace.stage_backends[std::string(stage_name(s))] = backends.at(s).name();
    }
}

void validate_options(const PipelineOptions& options, bool needs_k) {
    if (options.n == 0) throw ConfigError("N must be >= 1");
    if (needs_k && options.k < 2) throw ConfigError("K must be >= 2 for candidate generation");
    if (!(options.temperature >= 0.0)) throw ConfigError("temperature must be >= 0");
}

/// Runs `body`, converting any library error into a PipelineError carrying the trace so far.
template <typename Body>
PredictionTrace guarded(PredictionTrace& trace, CallLog& log, Body&& body) {
    try {
        body();
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        trace.calls = log.take();
        trace.error = e.what();
        throw PipelineError(e.what(), trace);
    }
    trace.calls = log.take();
    return trace;
}

}  // namespace

std::string CallLog::complete(ChatBackend& backend, Stage stage, std::string prompt, const PipelineOptions& options) {
    std::optional<int> cap;
    if (auto it = options.max_tokens.find(stage); it != options.max_tokens.end()) cap = it->second;
    auto request = ChatRequest::user_prompt(backend.model(), std::move(prompt), options.temperature, cap);
    std::string response = backend.complete(request);
    records_.push_back(CallRecord{std::string(stage_name(stage)), backend.name(), backend.model(),
                                  CacheKey::of(request).digest, std::move(request.messages.front().content),
                                  response});
    return response;
}

std::size_t expected_sure_calls(std::size_t k) { return 1 + k + k + k * (k - 1); }

double PairwiseRanking::pair_score(std::size_t k, std::size_t i) const {
    double award = 0.0;
    int seen = 0;
    for (const auto& v : votes) {
        if (v.first == k && v.second == i) {
            award += v.choice == PassageChoice::first ? 1.0 : v.choice == PassageChoice::second ? 0.0 : 0.5;
            ++seen;
        } else if (v.first == i && v.second == k) {
            award += v.choice == PassageChoice::second ? 1.0 : v.choice == PassageChoice::first ? 0.0 : 0.5;
            ++seen;
        }
    }
    return seen == 0 ? 0.0 : award / seen;
}

CandidateSet generate_candidates(std::string_view question, std::span<const Passage> passages, std::size_t k,
                                 ChatBackend& backend, const PipelineOptions& options, CallLog& log) {
    std::string prompt = options.shots.empty()
                             ? options.prompts.candidates(question, passages, k)
                             : options.prompts.candidates_fewshot(question, passages, options.shots, k);
    std::string response = log.complete(backend, Stage::candidates, std::move(prompt), options);
    auto parsed = parse_candidates(response, k);
    return CandidateSet{std::string(question), std::move(parsed.candidates), std::move(response)};
}

std::string clean_summary(std::string_view response) {
    std::string text = trim(response);
    constexpr std::string_view kDone = "[DONE]";
    if (text.size() >= kDone.size() && std::string_view(text).substr(text.size() - kDone.size()) == kDone) {
        text = trim(std::string_view(text).substr(0, text.size() - kDone.size()));
    }
    return text;
}

ConditionalSummary summarize_conditional(std::string_view question, std::span<const Passage> passages,
                                         std::span<const std::string> candidates, std::size_t k,
                                         ChatBackend& backend, const PipelineOptions& options, CallLog& log) {
    if (k >= candidates.size()) {
        throw ConfigError("candidate index " + std::to_string(k) + " out of range for " +
                          std::to_string(candidates.size()) + " candidates");
    }
    auto prompt = options.prompts.summarization(question, passages, candidates, candidates[k]);
    auto response = log.complete(backend, Stage::summarize, std::move(prompt), options);
    return ConditionalSummary{k, clean_summary(response)};
}

int check_validity(std::string_view question, std::string_view candidate, std::string_view summary,
                   ChatBackend& backend, const PipelineOptions& options, CallLog& log) {
    auto response = log.complete(backend, Stage::validity, options.prompts.validity(question, candidate, summary),
                                 options);
    return parse_bool(response) == BoolAnswer::yes ? 1 : 0;
}

PairwiseRanking aggregate_pair_votes(std::size_t k, std::vector<PairVote> votes) {
    // Each directed vote hands out one unit of award; a pair's score is the
    // mean over the two presentation orders, hence the factor 0.5.
    std::vector<double> rank(k, 0.0);
    std::vector<std::vector<int>> asked(k, std::vector<int>(k, 0));
    for (const auto& v : votes) {
        if (v.first >= k || v.second >= k || v.first == v.second) {
            throw ConfigError("pair vote references an invalid summary index");
        }
        ++asked[std::min(v.first, v.second)][std::max(v.first, v.second)];
    }
    for (const auto& v : votes) {
        const double count = asked[std::min(v.first, v.second)][std::max(v.first, v.second)];
        double a = 0.5, b = 0.5;
        if (v.choice == PassageChoice::first) a = 1.0, b = 0.0;
        if (v.choice == PassageChoice::second) a = 0.0, b = 1.0;
        rank[v.first] += a / count;
        rank[v.second] += b / count;
    }
    return PairwiseRanking{std::move(rank), std::move(votes)};
}

PairwiseRanking rank_pairwise(std::string_view question, std::span<const std::string> summaries,
                              ChatBackend& backend, const PipelineOptions& options, CallLog& log) {
    const std::size_t k = summaries.size();
    if (k < 2) throw ConfigError("pair-wise ranking needs at least two summaries");
    std::vector<PairVote> votes;
    votes.reserve(k * (k - 1));
    for (std::size_t a = 0; a < k; ++a) {
        for (std::size_t b = a + 1; b < k; ++b) {
            for (auto [first, second] : {std::pair{a, b}, std::pair{b, a}}) {
                auto response = log.complete(
                    backend, Stage::ranking, options.prompts.ranking(question, summaries[first], summaries[second]),
                    options);
                votes.push_back(PairVote{first, second, parse_passage_choice(response)});
            }
        }
    }
    return aggregate_pair_votes(k, std::move(votes));
}

Selection select_answer(std::span<const std::string> candidates, std::span<const int> validity,
                        std::span<const double> rank) {
    if (candidates.empty()) throw ConfigError("cannot select from an empty candidate list");
    if (validity.size() != candidates.size() || rank.size() != candidates.size()) {
        throw ConfigError("score arrays are not aligned with the candidates");
    }
    std::size_t best = 0;
    double best_score = validity[0] + rank[0];
    for (std::size_t i = 1; i < candidates.size(); ++i) {
        const double score = validity[i] + rank[i];
        if (score > best_score) {
            best = i;
            best_score = score;
        }
    }
    return Selection{best, candidates[best]};
}

// --- end-to-end ----------------------------------------------------------------------

PredictionTrace run_sure_on(const QuestionInput& q, const RetrievedSet& retrieved, const StageBackends& backends,
                            const PipelineOptions& options) {
    validate_options(options, true);
    PredictionTrace trace = start_trace(q, "sure");
    record_retrieval(trace, retrieved);
    record_backends(trace, backends, {Stage::candidates, Stage::summarize, Stage::validity, Stage::ranking});
    const auto passages = retrieved.passages();
    CallLog log;
    return guarded(trace, log, [&] {
        auto set = generate_candidates(q.question, passages, options.k, backends.at(Stage::candidates), options, log);
        trace.candidates = set.candidates;
        trace.candidate_response = set.raw_response;
        if (set.candidates.size() == 1) {
            trace.notes.push_back("candidate set collapsed to a single answer; verification skipped");
            trace.chosen_index = 0;
            trace.final_answer = set.candidates.front();
            return;
        }
        for (std::size_t k = 0; k < set.candidates.size(); ++k) {
            trace.summaries.push_back(summarize_conditional(q.question, passages, set.candidates, k,
                                                            backends.at(Stage::summarize), options, log)
                                          .text);
        }
        for (std::size_t k = 0; k < set.candidates.size(); ++k) {
            trace.validity.push_back(check_validity(q.question, set.candidates[k], trace.summaries[k],
                                                    backends.at(Stage::validity), options, log));
        }
        auto ranking = rank_pairwise(q.question, trace.summaries, backends.at(Stage::ranking), options, log);
        trace.rank = ranking.rank;
        trace.pair_votes = ranking.votes;
        auto chosen = select_answer(trace.candidates, trace.validity, trace.rank);
        trace.chosen_index = chosen.index;
        trace.final_answer = chosen.answer;
    });
}

PredictionTrace run_sure(const QuestionInput& q, const InvertedIndex& index, const Corpus& corpus,
                         const StageBackends& backends, const PipelineOptions& options) {
    validate_options(options, true);
    return run_sure_on(q, retrieve(index, corpus, q.question, options.n), backends, options);
}

PredictionTrace run_base(const QuestionInput& q, const InvertedIndex& index, const Corpus& corpus,
                         const StageBackends& backends, const PipelineOptions& options) {
    validate_options(options, false);
    PredictionTrace trace = start_trace(q, "base");
    auto retrieved = retrieve(index, corpus, q.question, options.n);
    record_retrieval(trace, retrieved);
    record_backends(trace, backends, {Stage::baseline});
    const auto passages = retrieved.passages();
    CallLog log;
    return guarded(trace, log, [&] {
        auto prompt = options.shots.empty() ? options.prompts.base(q.question, passages)
                                            : options.prompts.base_fewshot(q.question, passages, options.shots);
        trace.final_answer = trim(log.complete(backends.at(Stage::baseline), Stage::baseline, std::move(prompt), options));
    });
}

PredictionTrace run_no_retrieval(const QuestionInput& q, const StageBackends& backends,
                                 const PipelineOptions& options) {
    PredictionTrace trace = start_trace(q, "no-retrieval");
    record_backends(trace, backends, {Stage::baseline});
    CallLog log;
    return guarded(trace, log, [&] {
        auto prompt = options.shots.empty() ? options.prompts.base(q.question, {})
                                            : options.prompts.base_fewshot(q.question, {}, options.shots);
        trace.final_answer = trim(log.complete(backends.at(Stage::baseline), Stage::baseline, std::move(prompt), options));
    });
}

PredictionTrace run_generic_sum(const QuestionInput& q, const InvertedIndex& index, const Corpus& corpus,
                                const StageBackends& backends, const PipelineOptions& options) {
    validate_options(options, false);
    PredictionTrace trace = start_trace(q, "generic-sum");
    auto retrieved = retrieve(index, corpus, q.question, options.n);
    record_retrieval(trace, retrieved);
    record_backends(trace, backends, {Stage::summarize, Stage::baseline});
    const auto passages = retrieved.passages();
    CallLog log;
    return guarded(trace, log, [&] {
        auto summary = clean_summary(log.complete(backends.at(Stage::summarize), Stage::summarize,
                                                  options.prompts.generic_summary(q.question, passages), options));
        trace.summaries.push_back(summary);
        const Passage pseudo{"summary", "Summary", summary};
        trace.final_answer = trim(log.complete(backends.at(Stage::baseline), Stage::baseline,
                                               options.prompts.base(q.question, std::span(&pseudo, 1)), options));
    });
}

std::string resolve_mcq_answer(std::string_view response, std::span<const std::string> candidates,
                               std::optional<std::string>* note) {
    std::string text = trim(response);
    if (text.size() >= 3 && text[0] == '(' && text[2] == ')' && std::isalpha(static_cast<unsigned char>(text[1]))) {
        const auto index = static_cast<std::size_t>(std::tolower(static_cast<unsigned char>(text[1])) - 'a');
        if (index < candidates.size()) return candidates[index];
        if (note) *note = "MCQ label (" + std::string(1, text[1]) + ") is outside the candidate range; kept raw text";
    }
    return text;
}

PredictionTrace run_mcq(const QuestionInput& q, const InvertedIndex& index, const Corpus& corpus,
                        const StageBackends& backends, const PipelineOptions& options) {
    validate_options(options, true);
    PredictionTrace trace = start_trace(q, "mcq");
    auto retrieved = retrieve(index, corpus, q.question, options.n);
    record_retrieval(trace, retrieved);
    record_backends(trace, backends, {Stage::candidates, Stage::baseline});
    const auto passages = retrieved.passages();
    CallLog log;
    return guarded(trace, log, [&] {
        auto set = generate_candidates(q.question, passages, options.k, backends.at(Stage::candidates), options, log);
        trace.candidates = set.candidates;
        trace.candidate_response = set.raw_response;
        auto response = log.complete(backends.at(Stage::baseline), Stage::baseline,
                                     options.prompts.mcq(q.question, passages, set.candidates), options);
        std::optional<std::string> note;
        trace.final_answer = resolve_mcq_answer(response, set.candidates, &note);
        if (note) trace.notes.push_back(*note);
        auto it = std::find(set.candidates.begin(), set.candidates.end(), trace.final_answer);
        if (it != set.candidates.end()) trace.chosen_index = static_cast<std::size_t>(it - set.candidates.begin());
    });
}

}  // namespace sure
