#pragma once

/** \file commands.hpp
 *  \brief Batch commands behind the `sure` CLI: index, run, eval, rerank, overlap.
 *
 * Backend names accepted wherever a backend is configured:
 *
 *   replay[:<model>]             responses from --transcript, keyed by request digest
 *   live:<model>[@<endpoint>]    chat-completions over HTTP(S); key from SURE_API_KEY
 *
 * Tests and embedding applications may inject additional named backends.
 */

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sure/bm25.hpp"
#include "sure/eval.hpp"
#include "sure/llm.hpp"
#include "sure/pipeline.hpp"
#include "sure/rerank.hpp"

namespace sure {

enum class Method { sure, base, no_retrieval, generic_sum, mcq };

Method parse_method(std::string_view name);
std::string_view method_name(Method method);

struct BackendSettings {
    std::optional<std::filesystem::path> transcript;
    std::optional<std::filesystem::path> cache_dir;
    /// Endpoint for live backends that do not name one.
    std::string endpoint{"https://api.openai.com/v1/chat/completions"};
    std::size_t parallelism{8};
    /// Injected backends, looked up by name before the built-in grammar.
    std::map<std::string, BackendPtr> injected;
};

/// Builds one backend from its name. Throws ConfigError for unknown kinds,
/// a replay backend without a transcript, or a live backend without a key.
BackendPtr make_named_backend(const std::string& name, const BackendSettings& settings);

/// Backends for every stage, each wrapped in a call counter and, when a cache
/// directory is set, the response cache.
class BackendPool {
public:
    BackendPool(const StageConfig& config, const BackendSettings& settings);

    const StageBackends& stages() const noexcept { return stages_; }
    /// Requests that reached an underlying backend (cache misses, or all calls without a cache).
    std::size_t backend_calls() const;
    std::size_t cache_hits() const;

private:
    struct Counted;
    StageBackends stages_;
    std::vector<std::shared_ptr<Counted>> counters_;
    std::vector<std::shared_ptr<CachedBackend>> cached_;
};

struct RunConfig {
    std::optional<std::filesystem::path> corpus;
    std::optional<std::filesystem::path> index;
    std::filesystem::path dataset;
    Method method{Method::sure};
    std::size_t n{10};
    std::size_t k{2};
    StageConfig stages;
    BackendSettings backends;
    std::uint64_t seed{0};
    std::optional<std::size_t> subsample;
    std::optional<std::filesystem::path> shots;
    std::optional<std::filesystem::path> templates;
    std::size_t parallel{1};
    double temperature{0.0};
    std::map<Stage, int> max_tokens;
    std::filesystem::path out;
};

struct RunSummary {
    std::size_t questions{0};
    std::size_t skipped{0};
    std::size_t written{0};
    std::size_t failed{0};
    std::size_t backend_calls{0};
    std::size_t cache_hits{0};
};

/// Builds the index and writes it; returns the number of indexed passages.
std::size_t cmd_index(const std::filesystem::path& corpus, const std::filesystem::path& out, Bm25Params params = {});

/// One trace line per dataset question, appended in dataset order. Ids already
/// present in `out` are skipped, so an interrupted run can be resumed.
RunSummary cmd_run(const RunConfig& config);

struct EvalConfig {
    std::vector<std::filesystem::path> traces;
    std::filesystem::path dataset;
    EvalOptions options;
    std::optional<std::filesystem::path> out;
};

/// Evaluates each trace file; writes one record per method to `out` if set and
/// returns the reports.
std::vector<MetricsReport> cmd_eval(const EvalConfig& config);

struct RerankConfig {
    std::filesystem::path trace;
    std::filesystem::path corpus;
    std::optional<std::filesystem::path> index;
    RerankKey key{RerankKey::sure_summary};
    SimilarityMode mode{SimilarityMode::tfidf};
    std::size_t n{10};
    StageConfig stages;
    BackendSettings backends;
    /// replay embeddings file, or live:<model>[@<endpoint>]
    std::optional<std::string> embedder;
    std::optional<std::filesystem::path> embeddings;
    std::optional<std::filesystem::path> templates;
    std::filesystem::path out;
};

RunSummary cmd_rerank(const RerankConfig& config);

struct OverlapResult {
    std::size_t records{0};
    /// Mean matrix per candidate count K.
    std::map<std::size_t, std::vector<std::vector<double>>> mean_by_k;
    std::map<std::size_t, std::size_t> count_by_k;
};

/// Candidate/summary TF-IDF overlap for every trace with K summaries. Writes one
/// record per question to `out` and, if given, a plain-text table of the means.
OverlapResult cmd_overlap(const std::filesystem::path& trace, const std::filesystem::path& out,
                          const std::optional<std::filesystem::path>& table = std::nullopt);

}  // namespace sure
