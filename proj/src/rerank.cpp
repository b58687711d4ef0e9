#include "sure/rerank.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

#include "sure/errors.hpp"

namespace sure {

TfidfModel TfidfModel::fit(std::span<const std::string> documents) {
    if (documents.empty()) throw ConfigError("cannot fit TF-IDF on an empty document list");
    TfidfModel model;
    model.doc_count_ = documents.size();
    for (const auto& doc : documents) {
        auto tokens = tokenize(doc);
        std::set<std::string> unique(tokens.begin(), tokens.end());
        for (const auto& t : unique) ++model.df_[t];
    }
    return model;
}

std::size_t TfidfModel::df(std::string_view term) const {
    auto it = df_.find(term);
    return it == df_.end() ? 0 : it->second;
}

double TfidfModel::idf(std::string_view term) const {
    const auto d = df(term);
    if (d == 0) return 0.0;
    return std::log(1.0 + static_cast<double>(doc_count_) / static_cast<double>(d));
}

SparseVector TfidfModel::vectorize(std::string_view text) const {
    SparseVector counts;
    for (auto& t : tokenize(text)) counts[t] += 1.0;
    SparseVector out;
    for (const auto& [term, tf] : counts) {
        const double w = tf * idf(term);
        if (w > 0.0) out.emplace(term, w);
    }
    return out;
}

double cosine(const SparseVector& a, const SparseVector& b) {
    double na = 0.0, nb = 0.0, dot = 0.0;
    for (const auto& [_, w] : a) na += w * w;
    for (const auto& [_, w] : b) nb += w * w;
    if (na == 0.0 || nb == 0.0) {
        spdlog::warn("cosine similarity of a zero vector; defined as 0");
        return 0.0;
    }
    // Merge walk over the two sorted term maps.
    auto ia = a.begin();
    auto ib = b.begin();
    while (ia != a.end() && ib != b.end()) {
        if (ia->first < ib->first) {
            ++ia;
        } else if (ib->first < ia->first) {
            ++ib;
        } else {
            dot += ia->second * ib->second;
            ++ia;
            ++ib;
        }
    }
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

double cosine(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw ConfigError("cosine of vectors with different dimensions (" + std::to_string(a.size()) + " vs " +
                          std::to_string(b.size()) + ")");
    }
    double na = 0.0, nb = 0.0, dot = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        na += a[i] * a[i];
        nb += b[i] * b[i];
        dot += a[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) {
        spdlog::warn("cosine similarity of a zero vector; defined as 0");
        return 0.0;
    }
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::vector<std::vector<double>> overlap_matrix(std::span<const std::string> candidates,
                                                std::span<const std::string> summaries) {
    if (candidates.size() != summaries.size()) {
        throw ConfigError("overlap matrix needs as many summaries as candidates");
    }
    if (candidates.empty()) throw ConfigError("overlap matrix needs at least one candidate");
    std::vector<std::string> docs(candidates.begin(), candidates.end());
    docs.insert(docs.end(), summaries.begin(), summaries.end());
    const auto model = TfidfModel::fit(docs);

    std::vector<SparseVector> cand_vecs, sum_vecs;
    for (const auto& c : candidates) cand_vecs.push_back(model.vectorize(c));
    for (const auto& s : summaries) sum_vecs.push_back(model.vectorize(s));

    const auto k = candidates.size();
    std::vector<std::vector<double>> m(k, std::vector<double>(k, 0.0));
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
            m[i][j] = std::clamp(cosine(cand_vecs[i], sum_vecs[j]), 0.0, 1.0);
        }
    }
    return m;
}

SimilarityMode parse_similarity_mode(std::string_view name) {
    if (name == "tfidf") return SimilarityMode::tfidf;
    if (name == "embedding") return SimilarityMode::embedding;
    throw ConfigError("unknown similarity mode '" + std::string(name) + "'; expected tfidf or embedding");
}

std::vector<RankedPassage> rerank_passages(std::string_view key_text, std::span<const Passage> passages,
                                           SimilarityMode mode, EmbeddingBackend* embedder) {
    if (passages.empty()) throw ConfigError("rerank needs at least one passage");
    std::vector<std::string> texts;
    texts.reserve(passages.size());
    for (const auto& p : passages) texts.push_back(p.title + " " + p.text);

    std::vector<RankedPassage> out;
    out.reserve(passages.size());
    if (mode == SimilarityMode::tfidf) {
        std::vector<std::string> docs{std::string(key_text)};
        docs.insert(docs.end(), texts.begin(), texts.end());
        const auto model = TfidfModel::fit(docs);
        const auto key_vec = model.vectorize(key_text);
        for (std::size_t i = 0; i < passages.size(); ++i) {
            out.push_back({passages[i], cosine(key_vec, model.vectorize(texts[i]))});
        }
    } else {
        if (!embedder) throw ConfigError("embedding rerank needs an embedding backend");
        const auto key_vec = embedder->embed(std::string(key_text));
        for (std::size_t i = 0; i < passages.size(); ++i) {
            out.push_back({passages[i], cosine(key_vec, embedder->embed(texts[i]))});
        }
    }
    std::stable_sort(out.begin(), out.end(), [](const RankedPassage& a, const RankedPassage& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.passage.id < b.passage.id;
    });
    return out;
}

RerankKey parse_rerank_key(std::string_view name) {
    if (name == "summary") return RerankKey::sure_summary;
    if (name == "generic") return RerankKey::generic_summary;
    if (name == "question") return RerankKey::question;
    throw ConfigError("unknown rerank key '" + std::string(name) + "'; expected summary, generic or question");
}

std::string_view rerank_key_name(RerankKey key) {
    switch (key) {
        case RerankKey::sure_summary: return "summary";
        case RerankKey::generic_summary: return "generic";
        case RerankKey::question: return "question";
    }
    return "summary";
}

PredictionTrace top1_pipeline(const QuestionInput& q, const InvertedIndex& index, const Corpus& corpus,
                              const PredictionTrace* sure_trace, const StageBackends& backends,
                              const PipelineOptions& options, const Top1Options& top1) {
    PredictionTrace trace;
    trace.id = q.id;
    trace.question = q.question;
    trace.method = "rerank-" + std::string(rerank_key_name(top1.key)) +
                   (top1.mode == SimilarityMode::tfidf ? "-tfidf" : "-embedding");

    std::vector<Passage> passages;
    if (sure_trace && !sure_trace->retrieved_ids.empty()) {
        for (std::size_t i = 0; i < sure_trace->retrieved_ids.size(); ++i) {
            const auto& id = sure_trace->retrieved_ids[i];
            const Passage* p = corpus.find(id);
            if (!p) throw ConfigError("trace " + q.id + " references passage " + id + " missing from the corpus");
            passages.push_back(*p);
            trace.retrieved_ids.push_back(id);
            if (i < sure_trace->retrieved_scores.size()) trace.retrieved_scores.push_back(sure_trace->retrieved_scores[i]);
        }
    } else {
        auto retrieved = retrieve(index, corpus, q.question, options.n);
        for (const auto& e : retrieved.entries) {
            passages.push_back(e.passage);
            trace.retrieved_ids.push_back(e.passage.id);
            trace.retrieved_scores.push_back(e.score);
        }
    }
    trace.stage_backends["baseline"] = backends.at(Stage::baseline).name();

    CallLog log;
    try {
        if (passages.empty()) throw Error("no passages retrieved for question " + q.id);
        std::string key;
        switch (top1.key) {
            case RerankKey::sure_summary:
                if (!sure_trace) throw ConfigError("summary-keyed rerank needs a SuRe trace");
                if (sure_trace->chosen_index && *sure_trace->chosen_index < sure_trace->summaries.size()) {
                    key = sure_trace->summaries[*sure_trace->chosen_index];
                } else {
                    trace.notes.push_back("SuRe trace has no winning summary; keyed on the question instead");
                    key = q.question;
                }
                break;
            case RerankKey::generic_summary:
                trace.stage_backends["summarize"] = backends.at(Stage::summarize).name();
                key = clean_summary(log.complete(backends.at(Stage::summarize), Stage::summarize,
                                                 options.prompts.generic_summary(q.question, passages), options));
                trace.summaries.push_back(key);
                break;
            case RerankKey::question:
                key = q.question;
                break;
        }
        trace.rerank_key = key;
        auto ranked = rerank_passages(key, passages, top1.mode, top1.embedder);
        for (const auto& r : ranked) trace.reranked.push_back({r.passage.id, r.score});
        const Passage& best = ranked.front().passage;
        trace.final_answer = trim(log.complete(backends.at(Stage::baseline), Stage::baseline,
                                               options.prompts.base(q.question, std::span(&best, 1)), options));
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

std::string format_matrix(const std::vector<std::vector<double>>& matrix, std::string_view row_label,
                          std::string_view col_label) {
    std::ostringstream out;
    out << std::fixed << std::setprecision(4);
    out << std::setw(14) << "";
    for (std::size_t j = 0; j < (matrix.empty() ? 0 : matrix.front().size()); ++j) {
        out << std::setw(12) << (std::string(col_label) + " #" + std::to_string(j + 1));
    }
    out << '\n';
    for (std::size_t i = 0; i < matrix.size(); ++i) {
        out << std::setw(14) << (std::string(row_label) + " #" + std::to_string(i + 1));
        for (double v : matrix[i]) out << std::setw(12) << v;
        out << '\n';
    }
    return out.str();
}

}  // namespace sure
