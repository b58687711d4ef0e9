#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "sure/commands.hpp"
#include "sure/errors.hpp"

namespace {

struct BackendFlags {
    std::string backend;
    std::vector<std::string> stage_backends;
    std::string transcript;
    std::string cache_dir;
    std::string endpoint;
    std::size_t parallelism{8};
};

void add_backend_flags(CLI::App* cmd, BackendFlags& f) {
    cmd->add_option("--backend", f.backend, "default backend: replay[:model] or live:<model>[@<endpoint>]");
    cmd->add_option("--stage-backend", f.stage_backends, "per-stage override, stage=backend (repeatable)");
    cmd->add_option("--transcript", f.transcript, "JSONL transcript for replay backends");
    cmd->add_option("--cache-dir", f.cache_dir, "response cache directory");
    cmd->add_option("--endpoint", f.endpoint, "chat-completions URL for live backends");
    cmd->add_option("--max-inflight", f.parallelism, "concurrent requests per live backend");
}

void apply_backend_flags(const BackendFlags& f, sure::StageConfig& stages, sure::BackendSettings& settings) {
    stages.default_backend = f.backend;
    for (const auto& spec : f.stage_backends) {
        const auto eq = spec.find('=');
        if (eq == std::string::npos || eq == 0 || eq + 1 == spec.size()) {
            throw sure::ConfigError("--stage-backend expects stage=backend, got '" + spec + "'");
        }
        stages.assignments[spec.substr(0, eq)] = spec.substr(eq + 1);
    }
    if (!f.transcript.empty()) settings.transcript = f.transcript;
    if (!f.cache_dir.empty()) settings.cache_dir = f.cache_dir;
    if (!f.endpoint.empty()) settings.endpoint = f.endpoint;
    settings.parallelism = f.parallelism;
}

void print_summary(const sure::RunSummary& s) {
    std::cerr << "questions " << s.questions << ", skipped " << s.skipped << ", written " << s.written
              << ", failed " << s.failed << ", backend calls " << s.backend_calls << ", cache hits "
              << s.cache_hits << '\n';
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Summarized-retrieval question answering"};
    app.require_subcommand(1);

    // index
    std::string corpus_path, index_out;
    double k1 = 1.2, b = 0.75;
    auto* index_cmd = app.add_subcommand("index", "build a BM25 index over a JSONL corpus");
    index_cmd->add_option("--corpus", corpus_path)->required();
    index_cmd->add_option("--out", index_out)->required();
    index_cmd->add_option("--k1", k1);
    index_cmd->add_option("--b", b);

    // run
    sure::RunConfig run;
    std::string run_corpus, run_index, run_method = "sure", run_shots, run_templates, run_out, run_dataset;
    std::size_t run_subsample = 0;
    BackendFlags run_backends;
    auto* run_cmd = app.add_subcommand("run", "answer every dataset question and append traces");
    run_cmd->add_option("--corpus", run_corpus);
    run_cmd->add_option("--index", run_index, "prebuilt index; built in memory when omitted");
    run_cmd->add_option("--dataset", run_dataset)->required();
    run_cmd->add_option("--method", run_method, "sure, base, no-retrieval, generic-sum, mcq");
    run_cmd->add_option("--n", run.n, "passages retrieved per question");
    run_cmd->add_option("--k", run.k, "answer candidates");
    run_cmd->add_option("--seed", run.seed);
    run_cmd->add_option("--subsample", run_subsample, "evaluate a seeded subset of this size");
    run_cmd->add_option("--shots", run_shots, "JSONL few-shot examples");
    run_cmd->add_option("--templates", run_templates, "directory of <name>.txt prompt overrides");
    run_cmd->add_option("--parallel", run.parallel, "questions in flight");
    run_cmd->add_option("--temperature", run.temperature);
    run_cmd->add_option("--out", run_out)->required();
    add_backend_flags(run_cmd, run_backends);

    // eval
    sure::EvalConfig eval;
    std::vector<std::string> eval_traces;
    std::string eval_dataset, eval_out;
    bool no_ci = false;
    auto* eval_cmd = app.add_subcommand("eval", "EM/F1 with bootstrap intervals for one or more trace files");
    eval_cmd->add_option("--traces", eval_traces)->required();
    eval_cmd->add_option("--dataset", eval_dataset)->required();
    eval_cmd->add_option("--out", eval_out, "JSONL report");
    eval_cmd->add_option("--iterations", eval.options.iterations);
    eval_cmd->add_option("--level", eval.options.level);
    eval_cmd->add_option("--seed", eval.options.seed);
    eval_cmd->add_flag("--no-ci", no_ci);

    // rerank
    sure::RerankConfig rr;
    std::string rr_trace, rr_corpus, rr_index, rr_key = "summary", rr_mode = "tfidf", rr_embedder, rr_embeddings,
                                                rr_templates, rr_out;
    BackendFlags rr_backends;
    auto* rr_cmd = app.add_subcommand("rerank", "answer from the single passage most similar to a key");
    rr_cmd->add_option("--trace", rr_trace, "SuRe run file supplying retrieved ids and summaries")->required();
    rr_cmd->add_option("--corpus", rr_corpus)->required();
    rr_cmd->add_option("--index", rr_index);
    rr_cmd->add_option("--key", rr_key, "summary, generic, question");
    rr_cmd->add_option("--similarity", rr_mode, "tfidf or embedding");
    rr_cmd->add_option("--n", rr.n);
    rr_cmd->add_option("--embedder", rr_embedder, "live:<model>[@<endpoint>]");
    rr_cmd->add_option("--embeddings", rr_embeddings, "JSONL embedding replay file");
    rr_cmd->add_option("--templates", rr_templates);
    rr_cmd->add_option("--out", rr_out)->required();
    add_backend_flags(rr_cmd, rr_backends);

    // overlap
    std::string ov_trace, ov_out, ov_table;
    auto* ov_cmd = app.add_subcommand("overlap", "TF-IDF overlap between candidates and their summaries");
    ov_cmd->add_option("--trace", ov_trace)->required();
    ov_cmd->add_option("--out", ov_out)->required();
    ov_cmd->add_option("--table", ov_table);

    CLI11_PARSE(app, argc, argv);

    try {
        if (index_cmd->parsed()) {
            const auto n = sure::cmd_index(corpus_path, index_out, {k1, b});
            std::cerr << "indexed " << n << " passages\n";
            return 0;
        }
        if (run_cmd->parsed()) {
            run.method = sure::parse_method(run_method);
            if (!run_corpus.empty()) run.corpus = run_corpus;
            if (!run_index.empty()) run.index = run_index;
            run.dataset = run_dataset;
            if (run_subsample > 0) run.subsample = run_subsample;
            if (!run_shots.empty()) run.shots = run_shots;
            if (!run_templates.empty()) run.templates = run_templates;
            run.out = run_out;
            apply_backend_flags(run_backends, run.stages, run.backends);
            const auto summary = sure::cmd_run(run);
            print_summary(summary);
            return summary.failed == 0 ? 0 : 3;
        }
        if (eval_cmd->parsed()) {
            for (const auto& t : eval_traces) eval.traces.emplace_back(t);
            eval.dataset = eval_dataset;
            eval.options.with_ci = !no_ci;
            if (!eval_out.empty()) eval.out = eval_out;
            const auto reports = sure::cmd_eval(eval);
            std::cout << sure::format_report_table(reports);
            return 0;
        }
        if (rr_cmd->parsed()) {
            rr.trace = rr_trace;
            rr.corpus = rr_corpus;
            if (!rr_index.empty()) rr.index = rr_index;
            rr.key = sure::parse_rerank_key(rr_key);
            rr.mode = sure::parse_similarity_mode(rr_mode);
            if (!rr_embedder.empty()) rr.embedder = rr_embedder;
            if (!rr_embeddings.empty()) rr.embeddings = rr_embeddings;
            if (!rr_templates.empty()) rr.templates = rr_templates;
            rr.out = rr_out;
            apply_backend_flags(rr_backends, rr.stages, rr.backends);
            const auto summary = sure::cmd_rerank(rr);
            print_summary(summary);
            return summary.failed == 0 ? 0 : 3;
        }
        if (ov_cmd->parsed()) {
            std::optional<std::filesystem::path> table;
            if (!ov_table.empty()) table = ov_table;
            const auto result = sure::cmd_overlap(ov_trace, ov_out, table);
            std::cerr << "overlap records " << result.records << '\n';
            return 0;
        }
    } catch (const sure::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
