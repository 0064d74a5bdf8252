#pragma once

// Table-driven backend: every queried prefix maps to stored logits and
// hidden states. Used as a deterministic oracle in tests and fixtures.
//
// File layout (UTF-8 JSON):
//   {"vocab_size":V,"num_layers":L,"hidden_dim":d,
//    "entries":[{"prefix":[...],"logits":[V floats],
//                "states":[[[d floats] x (L+1)] x len(prefix)]}]}

#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "cocoa/model.hpp"

namespace cocoa {

struct ScriptedEntry {
  std::vector<TokenId> prefix;
  Vector logits;
  LayerStates states;

  bool operator==(const ScriptedEntry&) const = default;
};

class ScriptedModel : public Backend {
 public:
  ScriptedModel(int vocab_size, int num_layers, int hidden_dim, std::string name = "scripted") {
    info_ = {vocab_size, num_layers, hidden_dim, std::move(name)};
    info_.validate();
  }

  const BackendInfo& info() const override { return info_; }

  StepOutput evaluate(std::span<const TokenId> prefix) const override {
    check_prefix(prefix);
    auto it = entries_.find(std::vector<TokenId>(prefix.begin(), prefix.end()));
    if (it == entries_.end()) {
      throw MissingEntry(info_.name + ": no entry for prefix " + format_tokens(prefix));
    }
    return {log_softmax(it->second.logits), it->second.states};
  }

  /// Adds or replaces the entry for entry.prefix.
  void add_entry(ScriptedEntry entry) {
    check_entry(entry, "entry " + format_tokens(entry.prefix));
    auto key = entry.prefix;
    entries_.insert_or_assign(std::move(key), std::move(entry));
  }

  bool contains(std::span<const TokenId> prefix) const {
    return entries_.contains(std::vector<TokenId>(prefix.begin(), prefix.end()));
  }

  std::vector<ScriptedEntry> entries() const {
    std::vector<ScriptedEntry> out;
    out.reserve(entries_.size());
    for (const auto& [_, e] : entries_) out.push_back(e);
    return out;
  }

  std::size_t size() const { return entries_.size(); }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["vocab_size"] = info_.vocab_size;
    j["num_layers"] = info_.num_layers;
    j["hidden_dim"] = info_.hidden_dim;
    auto& arr = j["entries"] = nlohmann::json::array();
    for (const auto& [prefix, e] : entries_) {
      nlohmann::json states = nlohmann::json::array();
      for (std::size_t p = 0; p < e.states.seq_len(); ++p) {
        nlohmann::json layers = nlohmann::json::array();
        for (int l = 0; l <= info_.num_layers; ++l) {
          auto v = e.states.at(p, l);
          layers.push_back(std::vector<double>(v.begin(), v.end()));
        }
        states.push_back(std::move(layers));
      }
      arr.push_back({{"prefix", prefix}, {"logits", e.logits}, {"states", std::move(states)}});
    }
    return j;
  }

  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw Error("cannot open " + path + " for writing");
    out << to_json().dump() << '\n';
  }

  static ScriptedModel from_json(const nlohmann::json& j);

  static ScriptedModel parse(std::string_view text) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(std::string("scripted model: ") + e.what());
    }
    return from_json(j);
  }

  static ScriptedModel load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open scripted model file " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    try {
      return parse(buf.str());
    } catch (const ParseError& e) {
      throw ParseError(path + ": " + e.what());
    } catch (const SchemaError& e) {
      throw SchemaError(path + ": " + e.what());
    }
  }

 private:
  void check_entry(const ScriptedEntry& e, const std::string& where) const {
    if (e.prefix.empty()) throw SchemaError(where + ": prefix must be non-empty");
    for (TokenId t : e.prefix) {
      if (t < 0 || t >= info_.vocab_size) {
        throw SchemaError(where + ": prefix token " + std::to_string(t) + " outside vocabulary");
      }
    }
    if (e.logits.size() != static_cast<std::size_t>(info_.vocab_size)) {
      throw SchemaError(where + ".logits: expected " + std::to_string(info_.vocab_size) +
                        " values, got " + std::to_string(e.logits.size()));
    }
    if (e.states.seq_len() != e.prefix.size() || e.states.num_layers() != info_.num_layers ||
        e.states.dim() != static_cast<std::size_t>(info_.hidden_dim)) {
      throw SchemaError(where + ".states: shape does not match header");
    }
  }

  BackendInfo info_;
  std::map<std::vector<TokenId>, ScriptedEntry> entries_;
};

namespace detail {

inline const nlohmann::json& require(const nlohmann::json& j, const char* key, const std::string& where) {
  if (!j.is_object()) throw ParseError(where + ": expected an object");
  auto it = j.find(key);
  if (it == j.end()) throw ParseError(where + ": missing field \"" + key + "\"");
  return *it;
}

inline int require_int(const nlohmann::json& j, const char* key, const std::string& where) {
  const auto& v = require(j, key, where);
  if (!v.is_number_integer()) throw ParseError(where + "." + key + ": expected an integer");
  return v.get<int>();
}

inline std::vector<double> number_array(const nlohmann::json& j, std::size_t expected,
                                        const std::string& where) {
  if (!j.is_array()) throw ParseError(where + ": expected an array");
  if (j.size() != expected) {
    throw SchemaError(where + ": expected " + std::to_string(expected) + " values, got " +
                      std::to_string(j.size()));
  }
  std::vector<double> out;
  out.reserve(expected);
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ParseError(where + "[" + std::to_string(i) + "]: expected a number");
    out.push_back(j[i].get<double>());
  }
  return out;
}

}  // namespace detail

inline ScriptedModel ScriptedModel::from_json(const nlohmann::json& j) {
  const int V = detail::require_int(j, "vocab_size", "header");
  const int L = detail::require_int(j, "num_layers", "header");
  const int d = detail::require_int(j, "hidden_dim", "header");
  ScriptedModel model = [&] {
    try {
      return ScriptedModel(V, L, d);
    } catch (const ConfigError& e) {
      throw SchemaError(std::string("header: ") + e.what());
    }
  }();

  const auto& entries = detail::require(j, "entries", "header");
  if (!entries.is_array()) throw ParseError("entries: expected an array");
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const std::string where = "entries[" + std::to_string(i) + "]";
    const auto& je = entries[i];
    const auto& jp = detail::require(je, "prefix", where);
    if (!jp.is_array()) throw ParseError(where + ".prefix: expected an array");
    ScriptedEntry e;
    for (std::size_t k = 0; k < jp.size(); ++k) {
      if (!jp[k].is_number_integer()) {
        throw ParseError(where + ".prefix[" + std::to_string(k) + "]: expected an integer");
      }
      e.prefix.push_back(jp[k].get<TokenId>());
    }
    e.logits = detail::number_array(detail::require(je, "logits", where), static_cast<std::size_t>(V),
                                    where + ".logits");

    const auto& js = detail::require(je, "states", where);
    if (!js.is_array()) throw ParseError(where + ".states: expected an array");
    if (js.size() != e.prefix.size()) {
      throw SchemaError(where + ".states: expected " + std::to_string(e.prefix.size()) +
                        " positions, got " + std::to_string(js.size()));
    }
    e.states = LayerStates(e.prefix.size(), L, static_cast<std::size_t>(d));
    for (std::size_t p = 0; p < js.size(); ++p) {
      const std::string pw = where + ".states[" + std::to_string(p) + "]";
      if (!js[p].is_array()) throw ParseError(pw + ": expected an array");
      if (js[p].size() != static_cast<std::size_t>(L) + 1) {
        throw SchemaError(pw + ": expected " + std::to_string(L + 1) + " layers, got " +
                          std::to_string(js[p].size()));
      }
      for (int l = 0; l <= L; ++l) {
        e.states.set(p, l,
                     detail::number_array(js[p][static_cast<std::size_t>(l)], static_cast<std::size_t>(d),
                                          pw + "[" + std::to_string(l) + "]"));
      }
    }
    model.add_entry(std::move(e));
  }
  return model;
}

/// Wraps a backend and records every evaluated prefix, so that a run against
/// any model can be frozen into a ScriptedModel fixture.
class RecordingBackend : public Backend {
 public:
  explicit RecordingBackend(const Backend& inner)
      : inner_(inner), table_(inner.info().vocab_size, inner.info().num_layers, inner.info().hidden_dim,
                              inner.info().name + "+recorded") {}

  const BackendInfo& info() const override { return inner_.info(); }

  StepOutput evaluate(std::span<const TokenId> prefix) const override {
    StepOutput out = inner_.evaluate(prefix);
    std::lock_guard lock(mu_);
    // log-probs are valid logits: log_softmax of them is the identity up to rounding
    table_.add_entry({{prefix.begin(), prefix.end()}, out.next_log_probs, out.layer_states});
    return out;
  }

  ScriptedModel recorded() const {
    std::lock_guard lock(mu_);
    return table_;
  }

 private:
  const Backend& inner_;
  mutable std::mutex mu_;
  mutable ScriptedModel table_;
};

}  // namespace cocoa
