#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "sure/pipeline.hpp"

namespace sure {

/// One JSON object on a single line, keys in sorted order, no trailing newline.
std::string serialize_trace(const PredictionTrace& trace);
PredictionTrace parse_trace(const std::string& line);

/// Reads a run file. With `tolerate_torn_tail`, an unparseable final line
/// without a newline (an interrupted append) is ignored instead of raising.
std::vector<PredictionTrace> read_traces(std::istream& in, bool tolerate_torn_tail = false);
std::vector<PredictionTrace> read_traces(const std::filesystem::path& path, bool tolerate_torn_tail = false);

std::string_view passage_choice_name(PassageChoice choice);

}  // namespace sure
