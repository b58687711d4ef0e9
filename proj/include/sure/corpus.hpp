#pragma once

/** \file corpus.hpp
 *  \brief Passage corpus storage and the shared tokenizer.
 *
 * A corpus is an ordered, immutable-after-load collection of passages keyed
 * by a unique id. Title and text are stored verbatim; all lexical processing
 * goes through tokenize().
 */

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace sure {

struct Passage {
    std::string id;
    std::string title;
    std::string text;

    bool operator==(const Passage&) const = default;
};

class Corpus {
public:
    Corpus() = default;

    /// Appends a passage. Throws FormatError on an empty or duplicate id.
    void add(Passage passage);

    std::size_t size() const noexcept { return passages_.size(); }
    bool empty() const noexcept { return passages_.empty(); }

    const Passage& at(std::size_t position) const { return passages_.at(position); }
    std::span<const Passage> passages() const noexcept { return passages_; }

    /// Returns nullptr when the id is unknown.
    const Passage* find(std::string_view id) const;
    /// Position of the passage in ingestion order; throws std::out_of_range.
    std::size_t position_of(std::string_view id) const;

    auto begin() const noexcept { return passages_.begin(); }
    auto end() const noexcept { return passages_.end(); }

    bool operator==(const Corpus& other) const { return passages_ == other.passages_; }

private:
    std::vector<Passage> passages_;
    std::unordered_map<std::string, std::size_t> by_id_;
};

/// Reads one JSON object per line with keys "id", "title", "text".
/// Blank lines are skipped; unknown keys are ignored.
Corpus ingest_jsonl(std::istream& in);
Corpus ingest_jsonl(const std::filesystem::path& path);

void write_jsonl(const Corpus& corpus, std::ostream& out);
void write_jsonl(const Corpus& corpus, const std::filesystem::path& path);

/// Lowercase tokens split on every non-alphanumeric ASCII character.
/// Bytes >= 0x80 count as word characters so UTF-8 words stay whole.
std::vector<std::string> tokenize(std::string_view text);

}  // namespace sure
