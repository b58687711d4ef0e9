#include "sure/trace_io.hpp"

#include <fstream>
#include <istream>
#include <sstream>

#include <json.hpp>

namespace sure {

using json = nlohmann::json;

std::string_view passage_choice_name(PassageChoice choice) {
    switch (choice) {
        case PassageChoice::first: return "passage_1";
        case PassageChoice::second: return "passage_2";
        case PassageChoice::neither: return "neither";
    }
    return "neither";
}

namespace {

PassageChoice parse_choice_name(const std::string& name) {
    if (name == "passage_1") return PassageChoice::first;
    if (name == "passage_2") return PassageChoice::second;
    if (name == "neither") return PassageChoice::neither;
    throw FormatError("unknown pair-vote choice " + name);
}

}  // namespace

std::string serialize_trace(const PredictionTrace& t) {
    json calls = json::array();
    for (const auto& c : t.calls) {
        calls.push_back({{"stage", c.stage},
                         {"backend", c.backend},
                         {"model", c.model},
                         {"digest", c.digest},
                         {"prompt", c.prompt},
                         {"response", c.response}});
    }
    json votes = json::array();
    for (const auto& v : t.pair_votes) {
        votes.push_back({{"passage_1", v.first}, {"passage_2", v.second}, {"choice", passage_choice_name(v.choice)}});
    }
    json j = {{"id", t.id},
              {"method", t.method},
              {"question", t.question},
              {"retrieved_ids", t.retrieved_ids},
              {"retrieved_scores", t.retrieved_scores},
              {"candidates", t.candidates},
              {"candidate_response", t.candidate_response},
              {"summaries", t.summaries},
              {"validity", t.validity},
              {"rank", t.rank},
              {"pair_votes", votes},
              {"final_answer", t.final_answer},
              {"calls", calls},
              {"call_count", t.calls.size()},
              {"stage_backends", t.stage_backends},
              {"notes", t.notes}};
    j["chosen_index"] = t.chosen_index ? json(*t.chosen_index) : json(nullptr);
    if (t.error) j["error"] = *t.error;
    if (!t.rerank_key.empty() || !t.reranked.empty()) {
        json reranked = json::array();
        for (const auto& r : t.reranked) reranked.push_back({{"id", r.id}, {"score", r.score}});
        j["rerank_key"] = t.rerank_key;
        j["reranked"] = reranked;
    }
    return j.dump();
}

PredictionTrace parse_trace(const std::string& line) {
    PredictionTrace t;
    try {
        json j = json::parse(line);
        t.id = j.at("id").get<std::string>();
        t.method = j.value("method", std::string{});
        t.question = j.value("question", std::string{});
        t.retrieved_ids = j.value("retrieved_ids", std::vector<std::string>{});
        t.retrieved_scores = j.value("retrieved_scores", std::vector<double>{});
        t.candidates = j.value("candidates", std::vector<std::string>{});
        t.candidate_response = j.value("candidate_response", std::string{});
        t.summaries = j.value("summaries", std::vector<std::string>{});
        t.validity = j.value("validity", std::vector<int>{});
        t.rank = j.value("rank", std::vector<double>{});
        for (const auto& v : j.value("pair_votes", json::array())) {
            t.pair_votes.push_back({v.at("passage_1").get<std::size_t>(), v.at("passage_2").get<std::size_t>(),
                                    parse_choice_name(v.at("choice").get<std::string>())});
        }
        if (j.contains("chosen_index") && !j.at("chosen_index").is_null()) {
            t.chosen_index = j.at("chosen_index").get<std::size_t>();
        }
        t.final_answer = j.value("final_answer", std::string{});
        for (const auto& c : j.value("calls", json::array())) {
            t.calls.push_back({c.at("stage").get<std::string>(), c.value("backend", std::string{}),
                               c.value("model", std::string{}), c.at("digest").get<std::string>(),
                               c.value("prompt", std::string{}), c.at("response").get<std::string>()});
        }
        t.stage_backends = j.value("stage_backends", std::map<std::string, std::string>{});
        t.notes = j.value("notes", std::vector<std::string>{});
        if (j.contains("error")) t.error = j.at("error").get<std::string>();
        t.rerank_key = j.value("rerank_key", std::string{});
        for (const auto& r : j.value("reranked", json::array())) {
            t.reranked.push_back({r.at("id").get<std::string>(), r.at("score").get<double>()});
        }
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed trace record: ") + e.what());
    }
    return t;
}

std::vector<PredictionTrace> read_traces(std::istream& in, bool tolerate_torn_tail) {
    std::vector<PredictionTrace> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const bool last_without_newline = in.eof();
        try {
            out.push_back(parse_trace(line));
        } catch (const FormatError& e) {
            if (tolerate_torn_tail && last_without_newline) break;
            throw FormatError("line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

std::vector<PredictionTrace> read_traces(const std::filesystem::path& path, bool tolerate_torn_tail) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open trace file " + path.string());
    return read_traces(in, tolerate_torn_tail);
}

}  // namespace sure
