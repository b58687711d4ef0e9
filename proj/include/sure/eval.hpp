#pragma once

/** \file eval.hpp
 *  \brief QA datasets, SQuAD-style answer normalization, EM/F1, and
 *         percentile-bootstrap confidence intervals.
 */

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sure/pipeline.hpp"

namespace sure {

struct QAExample {
    std::string id;
    std::string question;
    std::vector<std::string> gold_answers;

    bool operator==(const QAExample&) const = default;
};

/// Line-delimited {id?, question, answers: [...]}. Missing ids become "q<index>"
/// (zero-based record index). Missing or empty answers raise FormatError naming the line.
std::vector<QAExample> load_dataset(std::istream& in);
std::vector<QAExample> load_dataset(const std::filesystem::path& path);
void write_dataset(std::span<const QAExample> examples, std::ostream& out);

/// Few-shot examples: line-delimited {question, answer} (or answers[0]).
std::vector<FewShotExample> load_shots(const std::filesystem::path& path);

/// Uniform sample of n without replacement; original relative order kept;
/// deterministic for a given seed.
std::vector<QAExample> subsample(std::span<const QAExample> examples, std::size_t n, std::uint64_t seed);

/// Lowercase, drop ASCII punctuation, drop the articles a/an/the, collapse whitespace.
std::string normalize_answer(std::string_view text);

int exact_match(std::string_view prediction, std::span<const std::string> gold_answers);

/// Max over golds of token-bag F1 on normalized text. Both bags empty gives 1,
/// exactly one empty gives 0.
double f1_score(std::string_view prediction, std::span<const std::string> gold_answers);

struct ConfidenceInterval {
    double lo{0.0};
    double hi{0.0};
};

/// Percentile interval of resampled means. Throws ConfigError on empty input.
ConfidenceInterval bootstrap_ci(std::span<const double> values, std::size_t iterations = 1000, double level = 0.95,
                                std::uint64_t seed = 0);

struct ItemScore {
    std::string id;
    std::string prediction;
    int em{0};
    double f1{0.0};
    bool failed{false};
};

struct MetricsReport {
    std::string method;
    std::vector<ItemScore> items;
    double em{0.0};
    double f1{0.0};
    std::optional<ConfidenceInterval> em_ci;
    std::optional<ConfidenceInterval> f1_ci;
    std::size_t failed{0};
};

struct EvalOptions {
    std::size_t iterations{1000};
    double level{0.95};
    std::uint64_t seed{0};
    bool with_ci{true};
};

/// Joins traces to examples by id. A trace id missing from the dataset is an
/// error; a failed trace scores as an empty prediction.
MetricsReport evaluate_run(std::span<const PredictionTrace> traces, std::span<const QAExample> dataset,
                           const EvalOptions& options = {});

/// One row per method: EM / F1 in percent with optional CIs.
std::string format_report_table(std::span<const MetricsReport> reports);
/// Machine-readable line per method.
std::string report_record(const MetricsReport& report);

}  // namespace sure
