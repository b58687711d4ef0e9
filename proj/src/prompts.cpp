#include "sure/prompts.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "sure/errors.hpp"

namespace sure {

namespace {

constexpr std::string_view kCandidates =
    "Below are {{n}} passages related to the question at the end. After reading the passages, provide "
    "{{k_word}} correct candidates for the answer to the question at the end. Each answer should be in the "
    "form: {{k_format}}, and should not exceed 3 words for each candidate.\n"
    "\n"
    "{{passages}}"
    "Question: {{question}}\n"
    "\n"
    "Answer:";

constexpr std::string_view kCandidatesFewshot =
    "Below are {{n}} passages related to the question at the end. We also provide the answers for various "
    "questions. After reading the passages and question-answer pairs, provide {{k_word}} correct candidates "
    "for the answer to the question at the end. Each answer should be in the form: {{k_format}}, and should "
    "not exceed 3 words for each candidate.\n"
    "\n"
    "{{passages}}"
    "{{shots}}"
    "Question: {{question}}\n"
    "Provide {{k_word}} correct candidates for the answer:";

constexpr std::string_view kSummarize =
    "{{passages}}"
    "Your job is to act as a professional writer. You will write a good-quality passage that can support the "
    "given prediction about the question only based on the information in the provided supporting passages.\n"
    "\n"
    "Now, let's start. After you write, please write [DONE] to indicate you are done. Do not write a prefix "
    "(e.g., \"Response:\") while writing a passage.\n"
    "\n"
    "Question: {{question}}\n"
    "Choices: {{choices}}\n"
    "Prediction: {{prediction}}\n"
    "Passage:";

constexpr std::string_view kValidity =
    "Question: {{question}}\n"
    "\n"
    "Prediction: {{prediction}}\n"
    "\n"
    "Passage: {{summary}}\n"
    "\n"
    "Does the passage correctly support the prediction? Choices: [True, False]. Answer:";

constexpr std::string_view kRanking =
    "Question: Given the following passages, determine which one provides a more informative answer to the "
    "subsequent question.\n"
    "\n"
    "Passage 1: {{summary_a}}\n"
    "\n"
    "Passage 2: {{summary_b}}\n"
    "\n"
    "Target Question: {{question}}\n"
    "\n"
    "Your Task:\n"
    "Identify which passage (Passage 1 or Passage 2) is more relevant and informative to answer the question "
    "at hand. Choices: [Passage 1, Passage 2].\n"
    "\n"
    "Answer:";

constexpr std::string_view kBase =
    "{{passages}}"
    "Task description: predict the answer to the following question. Do not exceed 3 words.\n"
    "\n"
    "Question: {{question}}\n"
    "\n"
    "Answer:";

constexpr std::string_view kBaseFewshot =
    "{{passages}}"
    "Task description: predict the answer to the following question. Do not exceed 3 words.\n"
    "\n"
    "{{shots}}"
    "Question: {{question}}\n"
    "Answer:";

constexpr std::string_view kGenericSummary =
    "{{passages}}"
    "Your job is to act as a professional writer. You will write a good-quality passage that can support the "
    "prediction about the question only based on the information in the provided supporting passages.\n"
    "\n"
    "Now, let's start. After you write, please write [DONE] to indicate you are done. Do not write a prefix "
    "(e.g., \"Response:\") while writing a passage.\n"
    "\n"
    "Question: {{question}}\n"
    "Passage:";

constexpr std::string_view kMcq =
    "{{passages}}"
    "Task description: predict the answer to the following question. Do not exceed 3 words.\n"
    "\n"
    "Question: {{question}}\n"
    "Choices: {{choices}}\n"
    "Answer:";

constexpr std::array<std::string_view, 10> kNumberWords = {"zero", "one", "two",   "three", "four",
                                                          "five", "six", "seven", "eight", "nine"};
constexpr std::array<std::string_view, 8> kPlaceholders = {"xx", "yy", "zz", "ww", "vv", "uu", "tt", "ss"};

std::string number_word(std::size_t k) {
    if (k < kNumberWords.size()) return std::string(kNumberWords[k]);
    return std::to_string(k);
}

/// "(a) xx, (b) yy" extended with further letters for larger K.
std::string format_example(std::size_t k) {
    std::string out;
    for (std::size_t i = 0; i < k; ++i) {
        if (i) out += ", ";
        out += '(';
        out += choice_letter(i);
        out += ") ";
        out += i < kPlaceholders.size() ? std::string(kPlaceholders[i]) : std::string(2, choice_letter(i));
    }
    return out;
}

std::string render_shots(std::span<const FewShotExample> shots) {
    std::string out;
    for (const auto& s : shots) {
        out += "Question: " + s.question + "\nAnswer: " + s.answer + "\n\n";
    }
    return out;
}

void check_k(std::size_t k) {
    if (k < 2 || k > 26) throw ConfigError("candidate count K must be in [2, 26], got " + std::to_string(k));
}

bool is_word_char(unsigned char c) { return c >= 0x80 || std::isalnum(c); }

char lower(char c) { return static_cast<char>(std::tolower(static_cast<unsigned char>(c))); }

bool iequals_at(std::string_view text, std::size_t pos, std::string_view needle) {
    if (pos + needle.size() > text.size()) return false;
    for (std::size_t i = 0; i < needle.size(); ++i) {
        if (lower(text[pos + i]) != lower(needle[i])) return false;
    }
    return true;
}

std::size_t ifind(std::string_view text, std::string_view needle, std::size_t from) {
    for (std::size_t pos = from; pos + needle.size() <= text.size(); ++pos) {
        if (iequals_at(text, pos, needle)) return pos;
    }
    return std::string_view::npos;
}

bool is_edge_junk(unsigned char c) {
    return std::isspace(c) || c == ',' || c == ';' || c == '.' || c == ':' || c == '!' || c == '?' || c == '"' ||
           c == '\'' || c == '`';
}

std::string strip_edges(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && is_edge_junk(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && is_edge_junk(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

std::string fold_case(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = lower(c);
    return out;
}

}  // namespace

std::string trim(std::string_view text) {
    std::size_t b = 0, e = text.size();
    while (b < e && std::isspace(static_cast<unsigned char>(text[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(text[e - 1]))) --e;
    return std::string(text.substr(b, e - b));
}

char choice_letter(std::size_t index) {
    if (index >= 26) throw ConfigError("choice index beyond (z)");
    return static_cast<char>('a' + index);
}

std::string fill_template(std::string_view body, const std::map<std::string, std::string, std::less<>>& slots) {
    std::string out;
    out.reserve(body.size());
    std::size_t pos = 0;
    while (pos < body.size()) {
        auto open = body.find("{{", pos);
        if (open == std::string_view::npos) {
            out.append(body.substr(pos));
            break;
        }
        auto close = body.find("}}", open + 2);
        if (close == std::string_view::npos) {
            out.append(body.substr(pos));
            break;
        }
        out.append(body.substr(pos, open - pos));
        auto name = body.substr(open + 2, close - open - 2);
        auto it = slots.find(name);
        if (it == slots.end()) {
            throw ConfigError("template slot {{" + std::string(name) + "}} has no value");
        }
        out.append(it->second);
        pos = close + 2;
    }
    return out;
}

const TemplateSet& TemplateSet::defaults() {
    static const TemplateSet set = [] {
        TemplateSet s;
        s.set(templates::candidates, std::string(kCandidates));
        s.set(templates::candidates_fewshot, std::string(kCandidatesFewshot));
        s.set(templates::summarize, std::string(kSummarize));
        s.set(templates::validity, std::string(kValidity));
        s.set(templates::ranking, std::string(kRanking));
        s.set(templates::base, std::string(kBase));
        s.set(templates::base_fewshot, std::string(kBaseFewshot));
        s.set(templates::generic_summary, std::string(kGenericSummary));
        s.set(templates::mcq, std::string(kMcq));
        return s;
    }();
    return set;
}

TemplateSet TemplateSet::from_directory(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) {
        throw ConfigError("template directory not found: " + dir.string());
    }
    TemplateSet set = defaults();
    for (const auto& name : set.names()) {
        auto path = dir / (name + ".txt");
        if (!std::filesystem::exists(path)) continue;
        std::ifstream in(path, std::ios::binary);
        if (!in) throw ConfigError("cannot read template " + path.string());
        std::ostringstream buf;
        buf << in.rdbuf();
        std::string body = buf.str();
        // Files conventionally end with a newline that is not part of the prompt.
        if (!body.empty() && body.back() == '\n') body.pop_back();
        set.set(name, std::move(body));
    }
    return set;
}

const std::string& TemplateSet::body(std::string_view name) const {
    auto it = bodies_.find(name);
    if (it == bodies_.end()) throw ConfigError("unknown template " + std::string(name));
    return it->second;
}

void TemplateSet::set(std::string_view name, std::string body) { bodies_[std::string(name)] = std::move(body); }

std::vector<std::string> TemplateSet::names() const {
    std::vector<std::string> out;
    for (const auto& [name, _] : bodies_) out.push_back(name);
    return out;
}

std::string render_passage_blocks(std::span<const Passage> passages) {
    std::string out;
    for (std::size_t i = 0; i < passages.size(); ++i) {
        const auto n = std::to_string(i + 1);
        out += "Passage #" + n + " Title: " + passages[i].title + "\n";
        out += "Passage #" + n + " Text: " + passages[i].text + "\n\n";
    }
    return out;
}

std::string render_choices(std::span<const std::string> choices) {
    std::string out;
    for (std::size_t i = 0; i < choices.size(); ++i) {
        if (i) out += ' ';
        out += '(';
        out += choice_letter(i);
        out += ") ";
        out += choices[i];
    }
    return out;
}

std::string PromptKit::candidates(std::string_view question, std::span<const Passage> passages, std::size_t k) const {
    check_k(k);
    return fill_template(templates_->body(templates::candidates),
                         {{"n", std::to_string(passages.size())},
                          {"k_word", number_word(k)},
                          {"k_format", format_example(k)},
                          {"passages", render_passage_blocks(passages)},
                          {"question", std::string(question)}});
}

std::string PromptKit::candidates_fewshot(std::string_view question, std::span<const Passage> passages,
                                          std::span<const FewShotExample> shots, std::size_t k) const {
    check_k(k);
    if (shots.empty()) throw ConfigError("few-shot prompt needs at least one example; use the zero-shot template");
    return fill_template(templates_->body(templates::candidates_fewshot),
                         {{"n", std::to_string(passages.size())},
                          {"k_word", number_word(k)},
                          {"k_format", format_example(k)},
                          {"passages", render_passage_blocks(passages)},
                          {"shots", render_shots(shots)},
                          {"question", std::string(question)}});
}

std::string PromptKit::summarization(std::string_view question, std::span<const Passage> passages,
                                     std::span<const std::string> choices, std::string_view prediction) const {
    auto it = std::find(choices.begin(), choices.end(), prediction);
    if (it == choices.end()) {
        throw ConfigError("prediction '" + std::string(prediction) + "' is not one of the choices");
    }
    const auto index = static_cast<std::size_t>(it - choices.begin());
    std::string labeled = "(";
    labeled += choice_letter(index);
    labeled += ") ";
    labeled += prediction;
    return fill_template(templates_->body(templates::summarize), {{"passages", render_passage_blocks(passages)},
                                                                  {"question", std::string(question)},
                                                                  {"choices", render_choices(choices)},
                                                                  {"prediction", labeled}});
}

std::string PromptKit::validity(std::string_view question, std::string_view prediction,
                                std::string_view summary) const {
    return fill_template(templates_->body(templates::validity), {{"question", std::string(question)},
                                                                 {"prediction", std::string(prediction)},
                                                                 {"summary", std::string(summary)}});
}

std::string PromptKit::ranking(std::string_view question, std::string_view summary_a,
                               std::string_view summary_b) const {
    return fill_template(templates_->body(templates::ranking), {{"question", std::string(question)},
                                                                {"summary_a", std::string(summary_a)},
                                                                {"summary_b", std::string(summary_b)}});
}

std::string PromptKit::base(std::string_view question, std::span<const Passage> passages) const {
    return fill_template(templates_->body(templates::base),
                         {{"passages", render_passage_blocks(passages)}, {"question", std::string(question)}});
}

std::string PromptKit::base_fewshot(std::string_view question, std::span<const Passage> passages,
                                    std::span<const FewShotExample> shots) const {
    if (shots.empty()) throw ConfigError("few-shot prompt needs at least one example; use the zero-shot template");
    return fill_template(templates_->body(templates::base_fewshot), {{"passages", render_passage_blocks(passages)},
                                                                     {"shots", render_shots(shots)},
                                                                     {"question", std::string(question)}});
}

std::string PromptKit::generic_summary(std::string_view question, std::span<const Passage> passages) const {
    return fill_template(templates_->body(templates::generic_summary),
                         {{"passages", render_passage_blocks(passages)}, {"question", std::string(question)}});
}

std::string PromptKit::mcq(std::string_view question, std::span<const Passage> passages,
                           std::span<const std::string> choices) const {
    if (choices.empty()) throw ConfigError("multiple-choice prompt needs at least one choice");
    return fill_template(templates_->body(templates::mcq), {{"passages", render_passage_blocks(passages)},
                                                            {"question", std::string(question)},
                                                            {"choices", render_choices(choices)}});
}

// --- parsers -------------------------------------------------------------------

ParsedCandidates parse_candidates(std::string_view text, std::size_t k) {
    ParsedCandidates out;
    out.raw = std::string(text);
    const std::string trimmed = trim(text);
    if (trimmed.empty()) throw ParseError("empty candidate response");
    if (k == 0) throw ConfigError("candidate count K must be >= 1");

    // Labels are matched in sequence: (a), then (b) after it, and so on.
    struct Label {
        std::size_t start;
        std::size_t end;
    };
    std::vector<Label> labels;
    std::size_t from = 0;
    for (std::size_t i = 0; i < 26; ++i) {
        const std::string label = std::string("(") + choice_letter(i) + ")";
        auto pos = ifind(trimmed, label, from);
        if (pos == std::string::npos) break;
        labels.push_back({pos, pos + label.size()});
        from = pos + label.size();
    }

    std::vector<std::string> raw;
    if (labels.empty()) {
        std::string_view body = trimmed;
        if (iequals_at(body, 0, "answer:")) body.remove_prefix(7);
        raw.push_back(strip_edges(body));
    } else {
        for (std::size_t i = 0; i < labels.size(); ++i) {
            const auto stop = i + 1 < labels.size() ? labels[i + 1].start : trimmed.size();
            raw.push_back(strip_edges(std::string_view(trimmed).substr(labels[i].end, stop - labels[i].end)));
        }
    }

    std::unordered_set<std::string> seen;
    for (auto& c : raw) {
        if (c.empty()) continue;
        if (!seen.insert(fold_case(c)).second) continue;
        out.candidates.push_back(std::move(c));
        if (out.candidates.size() == k) break;
    }
    if (out.candidates.empty()) throw ParseError("no answer candidates in response: " + trimmed);
    return out;
}

BoolAnswer parse_bool(std::string_view text) {
    for (const auto& token : tokenize(text)) {
        if (token == "true") return BoolAnswer::yes;
        if (token == "false") return BoolAnswer::no;
    }
    return BoolAnswer::unparseable;
}

PassageChoice parse_passage_choice(std::string_view text) {
    constexpr std::string_view kWord = "passage";
    std::size_t pos = 0;
    while ((pos = ifind(text, kWord, pos)) != std::string_view::npos) {
        const bool left_ok = pos == 0 || !is_word_char(static_cast<unsigned char>(text[pos - 1]));
        std::size_t p = pos + kWord.size();
        if (left_ok && p < text.size() && (text[p] == ' ' || text[p] == '#')) {
            while (p < text.size() && (text[p] == ' ' || text[p] == '#')) ++p;
            std::size_t digits = p;
            while (digits < text.size() && std::isdigit(static_cast<unsigned char>(text[digits]))) ++digits;
            const bool right_ok = digits == text.size() || !is_word_char(static_cast<unsigned char>(text[digits]));
            if (right_ok && digits == p + 1) {
                if (text[p] == '1') return PassageChoice::first;
                if (text[p] == '2') return PassageChoice::second;
            }
        }
        pos += kWord.size();
    }
    return PassageChoice::neither;
}

}  // namespace sure
