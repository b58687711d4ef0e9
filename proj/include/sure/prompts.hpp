#pragma once

/** \file prompts.hpp
 *  \brief Prompt templates for every pipeline stage and the parsers that read
 *         structure back out of model responses.
 *
 * Templates are plain text with {{slot}} markers. The defaults are compiled
 * in; a directory of `<name>.txt` files can override any subset of them.
 * Substitution is single-pass, so slot values are inserted literally and are
 * never re-scanned for markers.
 *
 * Slots used by the defaults:
 *   question, passages, n, k_word, k_format, choices, prediction, summary,
 *   summary_a, summary_b, shots
 */

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sure/corpus.hpp"

namespace sure {

struct FewShotExample {
    std::string question;
    std::string answer;
};

/// Names of the shipped templates.
namespace templates {
inline constexpr std::string_view candidates = "candidates";
inline constexpr std::string_view candidates_fewshot = "candidates_fewshot";
inline constexpr std::string_view summarize = "summarize";
inline constexpr std::string_view validity = "validity";
inline constexpr std::string_view ranking = "ranking";
inline constexpr std::string_view base = "base";
inline constexpr std::string_view base_fewshot = "base_fewshot";
inline constexpr std::string_view generic_summary = "generic_summary";
inline constexpr std::string_view mcq = "mcq";
}  // namespace templates

/// Fills {{slot}} markers. Throws ConfigError for a marker with no value.
std::string fill_template(std::string_view body, const std::map<std::string, std::string, std::less<>>& slots);

class TemplateSet {
public:
    /// The compiled-in defaults.
    static const TemplateSet& defaults();

    /// Defaults overridden by every `<name>.txt` in `dir` whose name is a known template.
    static TemplateSet from_directory(const std::filesystem::path& dir);

    const std::string& body(std::string_view name) const;
    void set(std::string_view name, std::string body);
    std::vector<std::string> names() const;

private:
    std::map<std::string, std::string, std::less<>> bodies_;
};

/// Lowercase letter label for a zero-based candidate index: 0 -> "a".
char choice_letter(std::size_t index);

/// "Passage #i Title: ...\nPassage #i Text: ...\n\n" for each passage in order.
std::string render_passage_blocks(std::span<const Passage> passages);
/// "(a) c1 (b) c2 ..."
std::string render_choices(std::span<const std::string> choices);

class PromptKit {
public:
    PromptKit() : templates_(&TemplateSet::defaults()) {}
    explicit PromptKit(const TemplateSet& templates) : templates_(&templates) {}

    std::string candidates(std::string_view question, std::span<const Passage> passages, std::size_t k) const;
    /// Throws ConfigError when `shots` is empty.
    std::string candidates_fewshot(std::string_view question, std::span<const Passage> passages,
                                   std::span<const FewShotExample> shots, std::size_t k) const;
    /// Throws ConfigError when `prediction` is not one of `choices`.
    std::string summarization(std::string_view question, std::span<const Passage> passages,
                              std::span<const std::string> choices, std::string_view prediction) const;
    std::string validity(std::string_view question, std::string_view prediction, std::string_view summary) const;
    std::string ranking(std::string_view question, std::string_view summary_a, std::string_view summary_b) const;
    /// With no passages this is the closed-book prompt.
    std::string base(std::string_view question, std::span<const Passage> passages) const;
    std::string base_fewshot(std::string_view question, std::span<const Passage> passages,
                             std::span<const FewShotExample> shots) const;
    std::string generic_summary(std::string_view question, std::span<const Passage> passages) const;
    /// Throws ConfigError when `choices` is empty.
    std::string mcq(std::string_view question, std::span<const Passage> passages,
                    std::span<const std::string> choices) const;

private:
    const TemplateSet* templates_;
};

// ---------------------------------------------------------------------------
// Response parsers

struct ParsedCandidates {
    std::vector<std::string> candidates;
    std::string raw;
};

/// Extracts "(a) x, (b) y" style candidates (comma or newline separated),
/// trims whitespace and edge punctuation, drops case-insensitive duplicates
/// keeping the first, and truncates to k. Without labels the whole trimmed
/// response (minus a leading "Answer:") is the single candidate. Throws
/// ParseError on an empty response.
ParsedCandidates parse_candidates(std::string_view text, std::size_t k);

enum class BoolAnswer { yes, no, unparseable };
/// First standalone "true"/"false", case-insensitive.
BoolAnswer parse_bool(std::string_view text);

enum class PassageChoice { first, second, neither };
/// First standalone "Passage 1"/"Passage 2", case-insensitive.
PassageChoice parse_passage_choice(std::string_view text);

/// Trim ASCII whitespace from both ends.
std::string trim(std::string_view text);

}  // namespace sure
