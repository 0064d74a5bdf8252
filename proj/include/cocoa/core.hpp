#pragma once

// Shared domain types for the cocoa decoding engine.
//
// Probabilities are carried in log space everywhere; linear-space values only
// show up at API edges. All reals are double precision.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cocoa {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidInput : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class SchemaError : public Error {
 public:
  using Error::Error;
};

class MissingEntry : public Error {
 public:
  using Error::Error;
};

class InvalidToken : public Error {
 public:
  using Error::Error;
};

using TokenId = std::int32_t;
using Vector = std::vector<double>;

inline std::string format_tokens(std::span<const TokenId> tokens) {
  std::string out = "[";
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(tokens[i]);
  }
  return out + "]";
}

/// Hidden states for every (position, layer) of one forward pass.
///
/// Layer 0 is the embedding output; layers 1..L are the residual stream after
/// each block. Storage is dense, indexed [position][layer][dim].
class LayerStates {
 public:
  LayerStates() = default;

  LayerStates(std::size_t seq_len, int num_layers, std::size_t dim)
      : seq_len_(seq_len), num_layers_(num_layers), dim_(dim) {
    if (num_layers < 0) throw InvalidInput("LayerStates: negative layer count");
    data_.assign(seq_len_ * levels() * dim_, 0.0);
  }

  std::size_t seq_len() const { return seq_len_; }
  int num_layers() const { return num_layers_; }
  std::size_t levels() const { return static_cast<std::size_t>(num_layers_) + 1; }
  std::size_t dim() const { return dim_; }

  std::span<const double> at(std::size_t pos, int layer) const {
    return {data_.data() + offset(pos, layer), dim_};
  }
  std::span<double> at(std::size_t pos, int layer) {
    return {data_.data() + offset(pos, layer), dim_};
  }

  void set(std::size_t pos, int layer, std::span<const double> v) {
    if (v.size() != dim_) {
      throw InvalidInput("LayerStates: vector of length " + std::to_string(v.size()) +
                         " where dimension " + std::to_string(dim_) + " expected");
    }
    std::copy(v.begin(), v.end(), at(pos, layer).begin());
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
  }

  std::span<const double> raw() const { return data_; }

  bool operator==(const LayerStates&) const = default;

 private:
  std::size_t offset(std::size_t pos, int layer) const {
    if (pos >= seq_len_ || layer < 0 || layer > num_layers_) {
      throw InvalidInput("LayerStates: (position " + std::to_string(pos) + ", layer " +
                         std::to_string(layer) + ") out of range for seq_len " +
                         std::to_string(seq_len_) + ", L " + std::to_string(num_layers_));
    }
    return (pos * levels() + static_cast<std::size_t>(layer)) * dim_;
  }

  std::size_t seq_len_ = 0;
  int num_layers_ = 0;
  std::size_t dim_ = 0;
  std::vector<double> data_;
};

/// Pooled span representation per layer.
using PooledLayers = std::map<int, Vector>;

/// A contiguous run of generated tokens occupying positions [start, end()].
struct Span {
  std::vector<TokenId> tokens;
  std::size_t start = 0;
  double log_prob_sum = 0.0;
  PooledLayers pooled;

  std::size_t size() const { return tokens.size(); }
  std::size_t end() const { return start + tokens.size() - 1; }
};

enum class MldsMode { conmlds, fmlds };
enum class CommitMode { full_span, first_token };
enum class WindowKind { automatic, all, explicit_range };

struct WindowSpec {
  WindowKind kind = WindowKind::automatic;
  int first = 0;
  int last = 0;

  static WindowSpec range(int m, int n) { return {WindowKind::explicit_range, m, n}; }
};

struct DecodeConfig {
  double alpha = 2.5;
  double gamma = 0.3;
  MldsMode mode = MldsMode::fmlds;
  bool gating = true;
  WindowSpec layer_window;
  int max_span_len = 8;
  int max_candidates = 8;
  CommitMode commit_mode = CommitMode::full_span;
  bool length_normalize = true;
  int max_new_tokens = 64;
  std::set<TokenId> eos_tokens;
  std::uint64_t seed = 0;

  bool is_eos(TokenId t) const { return eos_tokens.contains(t); }

  void validate() const {
    if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in (0, 1]");
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ConfigError("alpha must be finite and >= 0");
    if (max_span_len < 1) throw ConfigError("max_span_len must be >= 1");
    if (max_candidates < 1) throw ConfigError("max_candidates must be >= 1");
    if (max_new_tokens < 1) throw ConfigError("max_new_tokens must be >= 1");
    if (layer_window.kind == WindowKind::explicit_range &&
        (layer_window.first < 1 || layer_window.first > layer_window.last)) {
      throw ConfigError("layer window must satisfy 1 <= m <= n");
    }
    for (TokenId t : eos_tokens) {
      if (t < 0) throw ConfigError("eos token ids must be non-negative");
    }
  }
};

struct TraceCandidate {
  std::vector<TokenId> tokens;
  double log_p = 0.0;
  double mlds = 0.0;
  double score = 0.0;

  bool operator==(const TraceCandidate&) const = default;
};

/// One divergence point: candidates in descending first-token probability.
struct DivergenceTrace {
  std::size_t position = 0;
  std::vector<TraceCandidate> candidates;
  std::size_t chosen_index = 0;
  std::size_t greedy_index = 0;

  bool operator==(const DivergenceTrace&) const = default;
};

/// Numerically stable log-softmax.
inline Vector log_softmax(std::span<const double> logits) {
  if (logits.empty()) throw InvalidInput("log_softmax: empty input");
  double max = -std::numeric_limits<double>::infinity();
  for (double x : logits) {
    if (!std::isfinite(x)) throw InvalidInput("log_softmax: non-finite logit");
    max = std::max(max, x);
  }
  double sum = 0.0;
  for (double x : logits) sum += std::exp(x - max);
  const double lse = max + std::log(sum);
  Vector out(logits.size());
  std::transform(logits.begin(), logits.end(), out.begin(), [lse](double x) { return x - lse; });
  return out;
}

}  // namespace cocoa
