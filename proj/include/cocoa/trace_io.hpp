#pragma once

// Divergence traces as JSONL, one object per divergence point:
//   {"pos":int,"candidates":[{"tokens":[int],"log_p":float,"mlds":float,"score":float}],
//    "chosen":int,"greedy":int}

#include <istream>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "cocoa/core.hpp"

namespace cocoa {

inline nlohmann::json trace_to_json(const DivergenceTrace& t) {
  nlohmann::json cands = nlohmann::json::array();
  for (const auto& c : t.candidates) {
    cands.push_back({{"tokens", c.tokens}, {"log_p", c.log_p}, {"mlds", c.mlds}, {"score", c.score}});
  }
  return {{"pos", t.position}, {"candidates", std::move(cands)}, {"chosen", t.chosen_index}, {"greedy", t.greedy_index}};
}

namespace detail {

inline void expect_keys(const nlohmann::json& j, const std::set<std::string>& keys, const std::string& where) {
  if (!j.is_object()) throw ParseError(where + ": expected an object");
  for (const auto& k : keys) {
    if (!j.contains(k)) throw ParseError(where + ": missing field \"" + k + "\"");
  }
  for (const auto& [k, _] : j.items()) {
    if (!keys.contains(k)) throw ParseError(where + ": unexpected field \"" + k + "\"");
  }
}

inline std::size_t expect_index(const nlohmann::json& j, const std::string& where) {
  if (!j.is_number_unsigned()) throw ParseError(where + ": expected a non-negative integer");
  return j.get<std::size_t>();
}

inline double expect_number(const nlohmann::json& j, const std::string& where) {
  if (!j.is_number()) throw ParseError(where + ": expected a number");
  return j.get<double>();
}

}  // namespace detail

inline DivergenceTrace trace_from_json(const nlohmann::json& j) {
  detail::expect_keys(j, {"pos", "candidates", "chosen", "greedy"}, "trace");
  DivergenceTrace t;
  t.position = detail::expect_index(j["pos"], "pos");
  t.chosen_index = detail::expect_index(j["chosen"], "chosen");
  t.greedy_index = detail::expect_index(j["greedy"], "greedy");
  const auto& cands = j["candidates"];
  if (!cands.is_array()) throw ParseError("candidates: expected an array");
  for (std::size_t i = 0; i < cands.size(); ++i) {
    const std::string where = "candidates[" + std::to_string(i) + "]";
    detail::expect_keys(cands[i], {"tokens", "log_p", "mlds", "score"}, where);
    TraceCandidate c;
    const auto& toks = cands[i]["tokens"];
    if (!toks.is_array()) throw ParseError(where + ".tokens: expected an array");
    for (const auto& tok : toks) {
      if (!tok.is_number_integer()) throw ParseError(where + ".tokens: expected integers");
      c.tokens.push_back(tok.get<TokenId>());
    }
    c.log_p = detail::expect_number(cands[i]["log_p"], where + ".log_p");
    c.mlds = detail::expect_number(cands[i]["mlds"], where + ".mlds");
    c.score = detail::expect_number(cands[i]["score"], where + ".score");
    t.candidates.push_back(std::move(c));
  }
  if (t.chosen_index >= t.candidates.size() || t.greedy_index >= t.candidates.size()) {
    throw ParseError("trace: chosen/greedy index out of range");
  }
  return t;
}

inline void write_traces(std::ostream& out, const std::vector<DivergenceTrace>& traces) {
  for (const auto& t : traces) out << trace_to_json(t).dump() << '\n';
}

/// Reads a whole trace file; errors name the 1-based line number.
inline std::vector<DivergenceTrace> read_traces(std::istream& in) {
  std::vector<DivergenceTrace> traces;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      traces.push_back(trace_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("line " + std::to_string(lineno) + ": " + e.what());
    } catch (const ParseError& e) {
      throw ParseError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return traces;
}

}  // namespace cocoa
