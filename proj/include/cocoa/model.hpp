#pragma once

#include <span>
#include <string>

#include "cocoa/core.hpp"

namespace cocoa {

struct BackendInfo {
  int vocab_size = 0;
  int num_layers = 0;
  int hidden_dim = 0;
  std::string name;

  void validate() const {
    if (vocab_size < 2) throw ConfigError("backend: vocab_size must be >= 2");
    if (num_layers < 3) throw ConfigError("backend: num_layers must be >= 3");
    if (hidden_dim < 1) throw ConfigError("backend: hidden_dim must be >= 1");
  }
};

struct StepOutput {
  Vector next_log_probs;     // length V
  LayerStates layer_states;  // every position of the evaluated prefix, layers 0..L

  bool operator==(const StepOutput&) const = default;
};

/// A layered language model.
///
/// evaluate() is a pure function of the prefix and returns hidden states for
/// the whole prefix on every call. Implementations are read-only after
/// construction and may be shared across threads.
class Backend {
 public:
  virtual ~Backend() = default;

  virtual const BackendInfo& info() const = 0;
  virtual StepOutput evaluate(std::span<const TokenId> prefix) const = 0;

 protected:
  void check_prefix(std::span<const TokenId> prefix) const {
    if (prefix.empty()) throw InvalidInput(info().name + ": empty prefix");
    for (TokenId t : prefix) {
      if (t < 0 || t >= info().vocab_size) {
        throw InvalidToken(info().name + ": token " + std::to_string(t) +
                           " outside vocabulary of size " + std::to_string(info().vocab_size));
      }
    }
  }
};

}  // namespace cocoa
