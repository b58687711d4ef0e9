#include "sure/bm25.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "sure/errors.hpp"

namespace sure {

namespace {

constexpr std::string_view kMagic = "sure-bm25";
constexpr int kFormatVersion = 1;

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

double parse_double(std::string_view s) {
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
        throw FormatError("bad number in index dump: " + std::string(s));
    }
    return v;
}

template <typename T>
T parse_uint(std::string_view s) {
    T v{};
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
        throw FormatError("bad integer in index dump: " + std::string(s));
    }
    return v;
}

std::string expect_line(std::istream& in, std::string_view what) {
    std::string line;
    if (!std::getline(in, line)) {
        throw FormatError("truncated index dump: expected " + std::string(what));
    }
    return line;
}

std::string_view expect_field(std::string_view line, std::string_view key) {
    if (line.size() <= key.size() || line.substr(0, key.size()) != key || line[key.size()] != ' ') {
        throw FormatError("index dump: expected '" + std::string(key) + "' line");
    }
    return line.substr(key.size() + 1);
}

}  // namespace

InvertedIndex InvertedIndex::build(const Corpus& corpus, Bm25Params params) {
    if (corpus.empty()) {
        throw ConfigError("cannot build a BM25 index over an empty corpus");
    }
    if (!(params.k1 > 0.0) || !(params.b >= 0.0 && params.b <= 1.0)) {
        throw ConfigError("BM25 parameters require k1 > 0 and 0 <= b <= 1");
    }
    InvertedIndex index;
    index.params_ = params;
    index.doc_len_.reserve(corpus.size());
    index.doc_ids_.reserve(corpus.size());

    std::map<std::string, std::uint32_t, std::less<>> counts;
    for (std::size_t pos = 0; pos < corpus.size(); ++pos) {
        const Passage& p = corpus.at(pos);
        counts.clear();
        auto title_tokens = tokenize(p.title);
        auto text_tokens = tokenize(p.text);
        for (auto& t : title_tokens) ++counts[t];
        for (auto& t : text_tokens) ++counts[t];
        for (const auto& [term, tf] : counts) {
            index.postings_[term].push_back({static_cast<std::uint32_t>(pos), tf});
        }
        index.doc_len_.push_back(static_cast<std::uint32_t>(title_tokens.size() + text_tokens.size()));
        index.doc_ids_.push_back(p.id);
    }
    index.finalize();
    return index;
}

void InvertedIndex::finalize() {
    double total = std::accumulate(doc_len_.begin(), doc_len_.end(), 0.0);
    avg_doc_len_ = doc_len_.empty() ? 0.0 : total / static_cast<double>(doc_len_.size());
}

const std::vector<Posting>* InvertedIndex::postings(std::string_view term) const {
    auto it = postings_.find(term);
    return it == postings_.end() ? nullptr : &it->second;
}

std::size_t InvertedIndex::df(std::string_view term) const {
    const auto* list = postings(term);
    return list ? list->size() : 0;
}

double InvertedIndex::idf(std::string_view term) const {
    const double n = static_cast<double>(doc_count());
    const double d = static_cast<double>(df(term));
    return std::log((n - d + 0.5) / (d + 0.5) + 1.0);
}

double InvertedIndex::score(std::span<const std::string> query_tokens, std::size_t position) const {
    if (position >= doc_count()) {
        throw std::out_of_range("passage position out of range");
    }
    const double norm =
        params_.k1 * (1.0 - params_.b + params_.b * static_cast<double>(doc_len_[position]) / avg_doc_len_);
    double total = 0.0;
    for (const auto& term : query_tokens) {
        const auto* list = postings(term);
        if (!list) continue;
        auto it = std::lower_bound(list->begin(), list->end(), position,
                                   [](const Posting& p, std::size_t pos) { return p.position < pos; });
        if (it == list->end() || it->position != position) continue;
        const double tf = static_cast<double>(it->tf);
        total += idf(term) * tf * (params_.k1 + 1.0) / (tf + norm);
    }
    return total;
}

bool InvertedIndex::matches(const Corpus& corpus) const {
    if (corpus.size() != doc_ids_.size()) return false;
    for (std::size_t i = 0; i < doc_ids_.size(); ++i) {
        if (corpus.at(i).id != doc_ids_[i]) return false;
    }
    return true;
}

void InvertedIndex::save(std::ostream& out) const {
    out << kMagic << ' ' << kFormatVersion << '\n';
    out << "k1 " << format_double(params_.k1) << '\n';
    out << "b " << format_double(params_.b) << '\n';
    out << "docs " << doc_len_.size() << '\n';
    for (std::size_t i = 0; i < doc_len_.size(); ++i) {
        out << doc_len_[i] << ' ' << nlohmann::json(doc_ids_[i]).dump() << '\n';
    }
    out << "terms " << postings_.size() << '\n';
    for (const auto& [term, list] : postings_) {
        out << term << ' ' << list.size();
        for (const auto& p : list) out << ' ' << p.position << ':' << p.tf;
        out << '\n';
    }
}

void InvertedIndex::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write index file " + path.string());
    save(out);
}

InvertedIndex InvertedIndex::load(std::istream& in) {
    InvertedIndex index;
    {
        std::string header = expect_line(in, "header");
        std::string expected = std::string(kMagic) + ' ' + std::to_string(kFormatVersion);
        if (header != expected) {
            throw FormatError("unsupported index dump header: " + header);
        }
    }
    index.params_.k1 = parse_double(expect_field(expect_line(in, "k1"), "k1"));
    index.params_.b = parse_double(expect_field(expect_line(in, "b"), "b"));
    auto docs = parse_uint<std::size_t>(expect_field(expect_line(in, "docs"), "docs"));
    index.doc_len_.reserve(docs);
    index.doc_ids_.reserve(docs);
    for (std::size_t i = 0; i < docs; ++i) {
        std::string line = expect_line(in, "document entry");
        auto space = line.find(' ');
        if (space == std::string::npos) throw FormatError("index dump: malformed document entry");
        index.doc_len_.push_back(parse_uint<std::uint32_t>(std::string_view(line).substr(0, space)));
        try {
            index.doc_ids_.push_back(nlohmann::json::parse(line.substr(space + 1)).get<std::string>());
        } catch (const nlohmann::json::exception&) {
            throw FormatError("index dump: malformed document id");
        }
    }
    auto terms = parse_uint<std::size_t>(expect_field(expect_line(in, "terms"), "terms"));
    for (std::size_t i = 0; i < terms; ++i) {
        std::istringstream row(expect_line(in, "term row"));
        std::string term, count_text;
        row >> term >> count_text;
        auto count = parse_uint<std::size_t>(count_text);
        std::vector<Posting> list;
        list.reserve(count);
        std::string cell;
        while (row >> cell) {
            auto colon = cell.find(':');
            if (colon == std::string::npos) throw FormatError("index dump: malformed posting");
            Posting p{parse_uint<std::uint32_t>(std::string_view(cell).substr(0, colon)),
                      parse_uint<std::uint32_t>(std::string_view(cell).substr(colon + 1))};
            if (p.position >= docs) throw FormatError("index dump: posting references unknown passage");
            list.push_back(p);
        }
        if (list.size() != count) throw FormatError("index dump: posting count mismatch for " + term);
        index.postings_.emplace(std::move(term), std::move(list));
    }
    if (index.doc_len_.empty()) throw FormatError("index dump has no documents");
    index.finalize();
    return index;
}

InvertedIndex InvertedIndex::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open index file " + path.string());
    return load(in);
}

std::vector<Passage> RetrievedSet::passages() const {
    std::vector<Passage> out;
    out.reserve(entries.size());
    for (const auto& e : entries) out.push_back(e.passage);
    return out;
}

RetrievedSet retrieve(const InvertedIndex& index, const Corpus& corpus, std::string_view question,
                      std::size_t n, RetrieveOptions options) {
    if (n == 0) throw ConfigError("retrieve requires N >= 1");
    if (!index.matches(corpus)) {
        throw ConfigError("index was not built over the supplied corpus");
    }
    const auto query = tokenize(question);
    const auto& params = index.params();
    const auto doc_len = index.doc_lengths();

    // Accumulate term by term in query order, the same order score() uses,
    // so both paths produce bit-identical sums.
    std::vector<double> scores(index.doc_count(), 0.0);
    std::vector<bool> touched(index.doc_count(), false);
    for (const auto& term : query) {
        const auto* list = index.postings(term);
        if (!list) continue;
        const double idf = index.idf(term);
        for (const auto& p : *list) {
            const double norm =
                params.k1 * (1.0 - params.b + params.b * static_cast<double>(doc_len[p.position]) / index.avg_doc_len());
            const double tf = static_cast<double>(p.tf);
            scores[p.position] += idf * tf * (params.k1 + 1.0) / (tf + norm);
            touched[p.position] = true;
        }
    }

    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (touched[i] && scores[i] > 0.0) order.push_back(i);
    }
    auto by_rank = [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return corpus.at(a).id < corpus.at(b).id;
    };
    std::sort(order.begin(), order.end(), by_rank);
    if (order.size() > n) order.resize(n);

    if (options.pad_with_zero && order.size() < n) {
        std::vector<std::size_t> rest;
        for (std::size_t i = 0; i < scores.size(); ++i) {
            if (!(touched[i] && scores[i] > 0.0)) rest.push_back(i);
        }
        std::sort(rest.begin(), rest.end(),
                  [&](std::size_t a, std::size_t b) { return corpus.at(a).id < corpus.at(b).id; });
        for (std::size_t i : rest) {
            if (order.size() >= n) break;
            order.push_back(i);
        }
    }

    RetrievedSet result;
    result.question = std::string(question);
    result.n = n;
    result.entries.reserve(order.size());
    for (std::size_t i : order) {
        result.entries.push_back({corpus.at(i), scores[i]});
    }
    return result;
}

}  // namespace sure
