#include "sure/corpus.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>

#include <json.hpp>

#include "sure/errors.hpp"

namespace sure {

using json = nlohmann::json;

namespace {

bool is_blank(std::string_view line) {
    return line.find_first_not_of(" \t\r\n") == std::string_view::npos;
}

std::string required_string(const json& record, const char* key, std::size_t line_no) {
    auto it = record.find(key);
    if (it == record.end() || !it->is_string()) {
        throw FormatError("malformed corpus record at line " + std::to_string(line_no) +
                          ": missing string field \"" + key + "\"");
    }
    return it->get<std::string>();
}

}  // namespace

void Corpus::add(Passage passage) {
    if (passage.id.empty()) {
        throw FormatError("passage id must be non-empty");
    }
    auto [it, inserted] = by_id_.emplace(passage.id, passages_.size());
    if (!inserted) {
        throw FormatError("duplicate id " + passage.id);
    }
    passages_.push_back(std::move(passage));
}

const Passage* Corpus::find(std::string_view id) const {
    auto it = by_id_.find(std::string(id));
    return it == by_id_.end() ? nullptr : &passages_[it->second];
}

std::size_t Corpus::position_of(std::string_view id) const {
    auto it = by_id_.find(std::string(id));
    if (it == by_id_.end()) {
        throw std::out_of_range("unknown passage id " + std::string(id));
    }
    return it->second;
}

Corpus ingest_jsonl(std::istream& in) {
    Corpus corpus;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (is_blank(line)) continue;
        json record;
        try {
            record = json::parse(line);
        } catch (const json::parse_error& e) {
            throw FormatError("malformed corpus record at line " + std::to_string(line_no) + ": " +
                              e.what());
        }
        if (!record.is_object()) {
            throw FormatError("malformed corpus record at line " + std::to_string(line_no) +
                              ": expected a JSON object");
        }
        Passage p{required_string(record, "id", line_no), required_string(record, "title", line_no),
                  required_string(record, "text", line_no)};
        if (p.id.empty()) {
            throw FormatError("empty id at line " + std::to_string(line_no));
        }
        if (corpus.find(p.id) != nullptr) {
            throw FormatError("duplicate id " + p.id + " at line " + std::to_string(line_no));
        }
        corpus.add(std::move(p));
    }
    return corpus;
}

Corpus ingest_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw FormatError("cannot open corpus file " + path.string());
    }
    return ingest_jsonl(in);
}

void write_jsonl(const Corpus& corpus, std::ostream& out) {
    for (const auto& p : corpus) {
        json record = {{"id", p.id}, {"title", p.title}, {"text", p.text}};
        out << record.dump() << '\n';
    }
}

void write_jsonl(const Corpus& corpus, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw FormatError("cannot write corpus file " + path.string());
    }
    write_jsonl(corpus, out);
}

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    for (char ch : text) {
        auto c = static_cast<unsigned char>(ch);
        if (c >= 0x80 || (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z')) {
            current.push_back(ch);
        } else if (c >= 'A' && c <= 'Z') {
            current.push_back(static_cast<char>(c - 'A' + 'a'));
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

}  // namespace sure
