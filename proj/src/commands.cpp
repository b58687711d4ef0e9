#include "sure/commands.hpp"

#include <atomic>
#include <condition_variable>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include "sure/errors.hpp"
#include "sure/trace_io.hpp"

namespace sure {

using json = nlohmann::json;

Method parse_method(std::string_view name) {
    if (name == "sure") return Method::sure;
    if (name == "base") return Method::base;
    if (name == "no-retrieval") return Method::no_retrieval;
    if (name == "generic-sum") return Method::generic_sum;
    if (name == "mcq") return Method::mcq;
    throw ConfigError("unknown method '" + std::string(name) +
                      "'; expected one of sure, base, no-retrieval, generic-sum, mcq");
}

std::string_view method_name(Method method) {
    switch (method) {
        case Method::sure: return "sure";
        case Method::base: return "base";
        case Method::no_retrieval: return "no-retrieval";
        case Method::generic_sum: return "generic-sum";
        case Method::mcq: return "mcq";
    }
    return "sure";
}

// --- backends ------------------------------------------------------------------

BackendPtr make_named_backend(const std::string& name, const BackendSettings& settings) {
    if (auto it = settings.injected.find(name); it != settings.injected.end()) return it->second;

    const auto colon = name.find(':');
    const std::string kind = name.substr(0, colon);
    const std::string rest = colon == std::string::npos ? std::string{} : name.substr(colon + 1);

    if (kind == "replay") {
        if (!settings.transcript) {
            throw ConfigError("backend " + name + " needs a transcript (--transcript)");
        }
        auto transcript = std::make_shared<const Transcript>(Transcript::load(*settings.transcript));
        return std::make_shared<ReplayBackend>(name, rest.empty() ? "replay" : rest, std::move(transcript));
    }
    if (kind == "live") {
        if (rest.empty()) throw ConfigError("live backend needs a model: live:<model>[@<endpoint>]");
        HttpBackendConfig cfg;
        cfg.name = name;
        const auto at = rest.find('@');
        cfg.model = rest.substr(0, at);
        cfg.endpoint = at == std::string::npos ? settings.endpoint : rest.substr(at + 1);
        cfg.api_key = api_key_from_env().value_or("");
        cfg.parallelism = settings.parallelism;
        return std::make_shared<HttpBackend>(std::move(cfg));
    }
    std::string known;
    for (const auto& [n, _] : settings.injected) known += ", " + n;
    throw ConfigError("unknown backend '" + name + "'; expected replay[:<model>] or live:<model>[@<endpoint>]" +
                      known);
}

struct BackendPool::Counted final : ChatBackend {
    explicit Counted(BackendPtr inner) : inner(std::move(inner)) {}

    std::string complete(const ChatRequest& request) override {
        ++calls;
        return inner->complete(request);
    }
    const std::string& name() const override { return inner->name(); }
    const std::string& model() const override { return inner->model(); }

    BackendPtr inner;
    std::atomic<std::size_t> calls{0};
};

BackendPool::BackendPool(const StageConfig& config, const BackendSettings& settings) {
    std::set<std::string> names;
    if (!config.default_backend.empty()) names.insert(config.default_backend);
    for (const auto& [stage, backend] : config.assignments) {
        parse_stage(stage);
        names.insert(backend);
    }
    if (names.empty()) throw ConfigError("no backend configured (--backend)");

    std::shared_ptr<const ResponseCache> cache;
    if (settings.cache_dir) cache = std::make_shared<const ResponseCache>(*settings.cache_dir);

    std::map<std::string, BackendPtr> available;
    for (const auto& name : names) {
        auto counted = std::make_shared<Counted>(make_named_backend(name, settings));
        counters_.push_back(counted);
        if (cache) {
            auto cached = std::make_shared<CachedBackend>(counted, cache);
            cached_.push_back(cached);
            available[name] = cached;
        } else {
            available[name] = counted;
        }
    }
    stages_ = resolve_stage_backends(config, available);
}

std::size_t BackendPool::backend_calls() const {
    std::size_t total = 0;
    for (const auto& c : counters_) total += c->calls.load();
    return total;
}

std::size_t BackendPool::cache_hits() const {
    std::size_t total = 0;
    for (const auto& c : cached_) total += c->hits();
    return total;
}

// --- index -----------------------------------------------------------------------

std::size_t cmd_index(const std::filesystem::path& corpus_path, const std::filesystem::path& out, Bm25Params params) {
    const auto corpus = ingest_jsonl(corpus_path);
    const auto index = InvertedIndex::build(corpus, params);
    index.save(out);
    return index.doc_count();
}

namespace {

InvertedIndex open_index(const Corpus& corpus, const std::optional<std::filesystem::path>& index_path) {
    if (index_path) {
        auto index = InvertedIndex::load(*index_path);
        if (!index.matches(corpus)) {
            throw ConfigError("index " + index_path->string() + " was built over a different corpus");
        }
        return index;
    }
    return InvertedIndex::build(corpus);
}

/// Ids already in the run file; a torn final line is cut off so appends start clean.
std::set<std::string> prepare_resume(const std::filesystem::path& out) {
    std::set<std::string> ids;
    if (!std::filesystem::exists(out)) return ids;
    std::string content;
    {
        std::ifstream in(out, std::ios::binary);
        std::ostringstream buf;
        buf << in.rdbuf();
        content = buf.str();
    }
    if (!content.empty() && content.back() != '\n') {
        const auto last_newline = content.rfind('\n');
        const auto keep = last_newline == std::string::npos ? 0 : last_newline + 1;
        spdlog::warn("{}: dropping an incomplete trailing record", out.string());
        std::filesystem::resize_file(out, keep);
        content.resize(keep);
    }
    std::istringstream in(content);
    for (const auto& t : read_traces(in)) ids.insert(t.id);
    return ids;
}

/// Runs `work(i)` for i in [0, count) on up to `parallel` threads and hands
/// each result to `commit` in index order.
template <typename Work, typename Commit>
void ordered_parallel(std::size_t count, std::size_t parallel, Work&& work, Commit&& commit) {
    std::vector<std::optional<PredictionTrace>> slots(count);
    std::mutex mu;
    std::size_t next_commit = 0;
    std::atomic<std::size_t> next_task{0};
    std::exception_ptr fatal;

    auto worker = [&] {
        while (true) {
            const std::size_t i = next_task++;
            if (i >= count) return;
            PredictionTrace result;
            try {
                result = work(i);
            } catch (...) {
                std::lock_guard lock(mu);
                if (!fatal) fatal = std::current_exception();
                next_task = count;
                return;
            }
            std::lock_guard lock(mu);
            slots[i] = std::move(result);
            while (next_commit < count && slots[next_commit]) {
                commit(*slots[next_commit]);
                slots[next_commit].reset();
                ++next_commit;
            }
        }
    };

    const std::size_t threads = std::max<std::size_t>(1, std::min(parallel, count));
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (fatal) std::rethrow_exception(fatal);
}

}  // namespace

RunSummary cmd_run(const RunConfig& config) {
    if (config.n == 0) throw ConfigError("--n must be >= 1");
    if ((config.method == Method::sure || config.method == Method::mcq) && config.k < 2) {
        throw ConfigError("method " + std::string(method_name(config.method)) + " requires K >= 2");
    }
    if (config.parallel == 0) throw ConfigError("--parallel must be >= 1");
    if (config.out.empty()) throw ConfigError("--out is required");
    if (config.method != Method::no_retrieval && !config.corpus) {
        throw ConfigError("method " + std::string(method_name(config.method)) + " needs --corpus");
    }

    const TemplateSet templates =
        config.templates ? TemplateSet::from_directory(*config.templates) : TemplateSet::defaults();
    PipelineOptions options{config.n, config.k, config.temperature, config.max_tokens, PromptKit(templates), {}};
    if (config.shots) options.shots = load_shots(*config.shots);

    auto dataset = load_dataset(config.dataset);
    if (config.subsample) dataset = subsample(dataset, *config.subsample, config.seed);

    Corpus corpus;
    std::optional<InvertedIndex> index;
    if (config.corpus) {
        corpus = ingest_jsonl(*config.corpus);
        index = open_index(corpus, config.index);
    }

    BackendPool pool(config.stages, config.backends);

    const auto done = prepare_resume(config.out);
    std::vector<const QAExample*> todo;
    RunSummary summary;
    summary.questions = dataset.size();
    for (const auto& ex : dataset) {
        if (done.count(ex.id)) {
            ++summary.skipped;
        } else {
            todo.push_back(&ex);
        }
    }

    std::ofstream out(config.out, std::ios::binary | std::ios::app);
    if (!out) throw ConfigError("cannot open output file " + config.out.string());

    auto work = [&](std::size_t i) -> PredictionTrace {
        const QuestionInput q{todo[i]->id, todo[i]->question};
        try {
            switch (config.method) {
                case Method::sure: return run_sure(q, *index, corpus, pool.stages(), options);
                case Method::base: return run_base(q, *index, corpus, pool.stages(), options);
                case Method::no_retrieval: return run_no_retrieval(q, pool.stages(), options);
                case Method::generic_sum: return run_generic_sum(q, *index, corpus, pool.stages(), options);
                case Method::mcq: return run_mcq(q, *index, corpus, pool.stages(), options);
            }
        } catch (const PipelineError& e) {
            return e.partial();
        }
        throw ConfigError("unhandled method");
    };
    auto commit = [&](const PredictionTrace& trace) {
        if (trace.error) {
            ++summary.failed;
            spdlog::error("question {} failed: {}", trace.id, *trace.error);
        }
        out << serialize_trace(trace) << '\n';
        out.flush();
        if (!out) throw Error("failed writing " + config.out.string());
        ++summary.written;
    };
    ordered_parallel(todo.size(), config.parallel, work, commit);

    summary.backend_calls = pool.backend_calls();
    summary.cache_hits = pool.cache_hits();
    return summary;
}

// --- eval --------------------------------------------------------------------------

std::vector<MetricsReport> cmd_eval(const EvalConfig& config) {
    if (config.traces.empty()) throw ConfigError("eval needs at least one trace file");
    const auto dataset = load_dataset(config.dataset);
    std::vector<MetricsReport> reports;
    for (const auto& path : config.traces) {
        const auto traces = read_traces(path);
        auto report = evaluate_run(traces, dataset, config.options);
        if (report.method.empty()) report.method = path.stem().string();
        reports.push_back(std::move(report));
    }
    if (config.out) {
        std::ofstream out(*config.out, std::ios::binary | std::ios::trunc);
        if (!out) throw ConfigError("cannot write report " + config.out->string());
        for (const auto& r : reports) out << report_record(r) << '\n';
    }
    return reports;
}

// --- rerank ------------------------------------------------------------------------

RunSummary cmd_rerank(const RerankConfig& config) {
    if (config.out.empty()) throw ConfigError("--out is required");
    const TemplateSet templates =
        config.templates ? TemplateSet::from_directory(*config.templates) : TemplateSet::defaults();
    PipelineOptions options;
    options.n = config.n;
    options.prompts = PromptKit(templates);

    std::unique_ptr<EmbeddingBackend> embedder;
    if (config.mode == SimilarityMode::embedding) {
        if (config.embeddings) {
            embedder = std::make_unique<ReplayEmbeddingBackend>(ReplayEmbeddingBackend::load(*config.embeddings));
        } else if (config.embedder && config.embedder->rfind("live:", 0) == 0) {
            HttpBackendConfig cfg;
            cfg.name = *config.embedder;
            const auto rest = config.embedder->substr(5);
            const auto at = rest.find('@');
            cfg.model = rest.substr(0, at);
            cfg.endpoint = at == std::string::npos ? "https://api.openai.com/v1/embeddings" : rest.substr(at + 1);
            cfg.api_key = api_key_from_env().value_or("");
            embedder = std::make_unique<HttpEmbeddingBackend>(std::move(cfg));
        } else {
            throw ConfigError("embedding rerank needs --embeddings <file> or --embedder live:<model>[@<endpoint>]");
        }
    }

    const auto traces = read_traces(config.trace);
    const auto corpus = ingest_jsonl(config.corpus);
    const auto index = open_index(corpus, config.index);
    BackendPool pool(config.stages, config.backends);

    std::ofstream out(config.out, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot open output file " + config.out.string());
    RunSummary summary;
    summary.questions = traces.size();
    const Top1Options top1{config.key, config.mode, embedder.get()};
    for (const auto& t : traces) {
        PredictionTrace result;
        try {
            result = top1_pipeline({t.id, t.question}, index, corpus, &t, pool.stages(), options, top1);
        } catch (const PipelineError& e) {
            result = e.partial();
            ++summary.failed;
            spdlog::error("question {} failed: {}", t.id, *result.error);
        }
        out << serialize_trace(result) << '\n';
        ++summary.written;
    }
    summary.backend_calls = pool.backend_calls();
    summary.cache_hits = pool.cache_hits();
    return summary;
}

// --- overlap -----------------------------------------------------------------------

OverlapResult cmd_overlap(const std::filesystem::path& trace, const std::filesystem::path& out,
                          const std::optional<std::filesystem::path>& table) {
    const auto traces = read_traces(trace);
    std::ofstream records(out, std::ios::binary | std::ios::trunc);
    if (!records) throw ConfigError("cannot write " + out.string());

    OverlapResult result;
    for (const auto& t : traces) {
        if (t.error || t.candidates.size() < 2 || t.summaries.size() != t.candidates.size()) continue;
        auto m = overlap_matrix(t.candidates, t.summaries);
        const auto k = t.candidates.size();
        records << json{{"id", t.id}, {"k", k}, {"candidates", t.candidates}, {"matrix", m}}.dump() << '\n';
        auto& mean = result.mean_by_k[k];
        if (mean.empty()) mean.assign(k, std::vector<double>(k, 0.0));
        for (std::size_t i = 0; i < k; ++i) {
            for (std::size_t j = 0; j < k; ++j) mean[i][j] += m[i][j];
        }
        ++result.count_by_k[k];
        ++result.records;
    }
    for (auto& [k, mean] : result.mean_by_k) {
        const double count = static_cast<double>(result.count_by_k[k]);
        for (auto& row : mean) {
            for (auto& v : row) v /= count;
        }
    }
    if (table) {
        std::ofstream t(*table, std::ios::binary | std::ios::trunc);
        if (!t) throw ConfigError("cannot write " + table->string());
        for (const auto& [k, mean] : result.mean_by_k) {
            t << "K=" << k << " (" << result.count_by_k[k] << " questions), mean TF-IDF cosine\n";
            t << format_matrix(mean, "candidate", "summary") << '\n';
        }
    }
    return result;
}

}  // namespace sure
