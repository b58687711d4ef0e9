#include "sure/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <map>
#include <ostream>
#include <random>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "sure/errors.hpp"

namespace sure {

using json = nlohmann::json;

namespace {

bool is_blank(std::string_view line) { return line.find_first_not_of(" \t\r\n") == std::string_view::npos; }

bool is_squad_punct(unsigned char c) {
    // Python's string.punctuation.
    static constexpr std::string_view kPunct = "!\"#$%&'()*+,-./:;<=>?@[\\]^_`{|}~";
    return kPunct.find(static_cast<char>(c)) != std::string_view::npos;
}

bool is_regex_word(unsigned char c) { return c >= 0x80 || std::isalnum(c) || c == '_'; }

std::vector<std::string> split_ws(std::string_view s) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : s) {
        if (std::isspace(static_cast<unsigned char>(ch))) {
            if (!cur.empty()) out.push_back(std::move(cur)), cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double percentile(const std::vector<double>& sorted, double q) {
    if (sorted.size() == 1) return sorted.front();
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + (sorted[hi] - sorted[lo]) * frac;
}

double mean_of(std::span<const double> values) {
    double s = 0.0;
    for (double v : values) s += v;
    return s / static_cast<double>(values.size());
}

}  // namespace

std::vector<QAExample> load_dataset(std::istream& in) {
    std::vector<QAExample> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (is_blank(line)) continue;
        const auto where = " at line " + std::to_string(line_no);
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw FormatError("malformed dataset record" + where + ": " + e.what());
        }
        if (!j.is_object() || !j.contains("question") || !j.at("question").is_string()) {
            throw FormatError("dataset record" + where + " has no string \"question\"");
        }
        QAExample ex;
        ex.question = j.at("question").get<std::string>();
        if (!j.contains("answers") || !j.at("answers").is_array() || j.at("answers").empty()) {
            throw FormatError("dataset record" + where + " has missing or empty \"answers\"");
        }
        for (const auto& a : j.at("answers")) {
            if (!a.is_string()) throw FormatError("dataset record" + where + " has a non-string answer");
            ex.gold_answers.push_back(a.get<std::string>());
        }
        if (j.contains("id") && !j.at("id").is_null()) {
            ex.id = j.at("id").is_string() ? j.at("id").get<std::string>() : j.at("id").dump();
        } else {
            ex.id = "q" + std::to_string(out.size());
        }
        out.push_back(std::move(ex));
    }
    std::map<std::string, std::size_t> seen;
    for (const auto& ex : out) {
        if (++seen[ex.id] > 1) throw FormatError("duplicate dataset id " + ex.id);
    }
    return out;
}

std::vector<QAExample> load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open dataset " + path.string());
    return load_dataset(in);
}

void write_dataset(std::span<const QAExample> examples, std::ostream& out) {
    for (const auto& ex : examples) {
        out << json{{"id", ex.id}, {"question", ex.question}, {"answers", ex.gold_answers}}.dump() << '\n';
    }
}

std::vector<FewShotExample> load_shots(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open few-shot file " + path.string());
    std::vector<FewShotExample> shots;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (is_blank(line)) continue;
        try {
            json j = json::parse(line);
            FewShotExample s;
            s.question = j.at("question").get<std::string>();
            if (j.contains("answer")) {
                s.answer = j.at("answer").get<std::string>();
            } else {
                s.answer = j.at("answers").at(0).get<std::string>();
            }
            shots.push_back(std::move(s));
        } catch (const json::exception& e) {
            throw FormatError("malformed few-shot record at line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    if (shots.empty()) throw FormatError("few-shot file " + path.string() + " has no examples");
    return shots;
}

std::vector<QAExample> subsample(std::span<const QAExample> examples, std::size_t n, std::uint64_t seed) {
    if (n > examples.size()) {
        throw ConfigError("cannot subsample " + std::to_string(n) + " from " + std::to_string(examples.size()) +
                          " examples");
    }
    // Selection sampling: one pass, every n-subset equally likely, order kept.
    std::mt19937_64 rng(seed);
    std::vector<QAExample> out;
    out.reserve(n);
    const std::size_t total = examples.size();
    for (std::size_t i = 0; i < total && out.size() < n; ++i) {
        const double remaining = static_cast<double>(total - i);
        const double needed = static_cast<double>(n - out.size());
        if (remaining * uniform01(rng) < needed) out.push_back(examples[i]);
    }
    return out;
}

std::string normalize_answer(std::string_view text) {
    std::string s;
    s.reserve(text.size());
    for (char ch : text) {
        auto c = static_cast<unsigned char>(ch);
        if (is_squad_punct(c)) continue;
        s.push_back(static_cast<char>(c < 0x80 ? std::tolower(c) : c));
    }
    // Replace every maximal word run equal to an article with a space.
    std::string no_articles;
    no_articles.reserve(s.size());
    std::size_t i = 0;
    while (i < s.size()) {
        if (!is_regex_word(static_cast<unsigned char>(s[i]))) {
            no_articles.push_back(s[i++]);
            continue;
        }
        std::size_t j = i;
        while (j < s.size() && is_regex_word(static_cast<unsigned char>(s[j]))) ++j;
        std::string_view word(s.data() + i, j - i);
        if (word == "a" || word == "an" || word == "the") {
            no_articles.push_back(' ');
        } else {
            no_articles.append(word);
        }
        i = j;
    }
    std::string out;
    for (const auto& tok : split_ws(no_articles)) {
        if (!out.empty()) out.push_back(' ');
        out += tok;
    }
    return out;
}

int exact_match(std::string_view prediction, std::span<const std::string> gold_answers) {
    const auto p = normalize_answer(prediction);
    for (const auto& g : gold_answers) {
        if (normalize_answer(g) == p) return 1;
    }
    return 0;
}

double f1_score(std::string_view prediction, std::span<const std::string> gold_answers) {
    const auto pred_tokens = split_ws(normalize_answer(prediction));
    double best = 0.0;
    for (const auto& g : gold_answers) {
        const auto gold_tokens = split_ws(normalize_answer(g));
        double f1 = 0.0;
        if (pred_tokens.empty() || gold_tokens.empty()) {
            f1 = pred_tokens.empty() && gold_tokens.empty() ? 1.0 : 0.0;
        } else {
            std::unordered_map<std::string, int> gold_counts;
            for (const auto& t : gold_tokens) ++gold_counts[t];
            int common = 0;
            for (const auto& t : pred_tokens) {
                auto it = gold_counts.find(t);
                if (it != gold_counts.end() && it->second > 0) {
                    --it->second;
                    ++common;
                }
            }
            if (common > 0) {
                const double precision = static_cast<double>(common) / static_cast<double>(pred_tokens.size());
                const double recall = static_cast<double>(common) / static_cast<double>(gold_tokens.size());
                f1 = 2.0 * precision * recall / (precision + recall);
            }
        }
        best = std::max(best, f1);
    }
    return best;
}

ConfidenceInterval bootstrap_ci(std::span<const double> values, std::size_t iterations, double level,
                                std::uint64_t seed) {
    if (values.empty()) throw ConfigError("bootstrap needs at least one value");
    if (iterations == 0) throw ConfigError("bootstrap needs at least one iteration");
    if (!(level > 0.0 && level < 1.0)) throw ConfigError("confidence level must be in (0, 1)");
    std::mt19937_64 rng(seed);
    const std::size_t n = values.size();
    std::vector<double> means;
    means.reserve(iterations);
    for (std::size_t it = 0; it < iterations; ++it) {
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) sum += values[rng() % n];
        means.push_back(sum / static_cast<double>(n));
    }
    std::sort(means.begin(), means.end());
    const double alpha = (1.0 - level) / 2.0;
    return {percentile(means, alpha), percentile(means, 1.0 - alpha)};
}

MetricsReport evaluate_run(std::span<const PredictionTrace> traces, std::span<const QAExample> dataset,
                           const EvalOptions& options) {
    std::unordered_map<std::string, const QAExample*> by_id;
    for (const auto& ex : dataset) by_id.emplace(ex.id, &ex);

    MetricsReport report;
    std::map<std::string, int> seen;
    for (const auto& t : traces) {
        auto it = by_id.find(t.id);
        if (it == by_id.end()) throw FormatError("trace id " + t.id + " has no matching dataset example");
        if (++seen[t.id] > 1) throw FormatError("trace id " + t.id + " appears more than once");
        if (report.method.empty()) report.method = t.method;
        ItemScore item;
        item.id = t.id;
        item.failed = t.error.has_value();
        item.prediction = item.failed ? std::string{} : t.final_answer;
        const auto& golds = it->second->gold_answers;
        item.em = item.failed ? 0 : exact_match(item.prediction, golds);
        item.f1 = item.failed ? 0.0 : f1_score(item.prediction, golds);
        if (item.failed) ++report.failed;
        report.items.push_back(std::move(item));
    }
    if (report.items.empty()) throw FormatError("no predictions to evaluate");

    std::vector<double> ems, f1s;
    for (const auto& item : report.items) {
        ems.push_back(item.em);
        f1s.push_back(item.f1);
    }
    report.em = mean_of(ems);
    report.f1 = mean_of(f1s);
    if (options.with_ci) {
        report.em_ci = bootstrap_ci(ems, options.iterations, options.level, options.seed);
        report.f1_ci = bootstrap_ci(f1s, options.iterations, options.level, options.seed);
    }
    return report;
}

std::string format_report_table(std::span<const MetricsReport> reports) {
    std::ostringstream out;
    out << std::fixed << std::setprecision(1);
    out << std::left << std::setw(22) << "method" << std::right << std::setw(6) << "n" << std::setw(22) << "EM"
        << std::setw(22) << "F1" << '\n';
    auto cell = [](double v, const std::optional<ConfidenceInterval>& ci) {
        std::ostringstream c;
        c << std::fixed << std::setprecision(1) << 100.0 * v;
        if (ci) c << " [" << 100.0 * ci->lo << ", " << 100.0 * ci->hi << "]";
        return c.str();
    };
    for (const auto& r : reports) {
        out << std::left << std::setw(22) << r.method << std::right << std::setw(6) << r.items.size()
            << std::setw(22) << cell(r.em, r.em_ci) << std::setw(22) << cell(r.f1, r.f1_ci) << '\n';
    }
    return out.str();
}

std::string report_record(const MetricsReport& report) {
    json j = {{"method", report.method}, {"n", report.items.size()}, {"em", report.em},
              {"f1", report.f1},         {"failed", report.failed}};
    if (report.em_ci) j["em_ci"] = {report.em_ci->lo, report.em_ci->hi};
    if (report.f1_ci) j["f1_ci"] = {report.f1_ci->lo, report.f1_ci->hi};
    return j.dump();
}

}  // namespace sure
