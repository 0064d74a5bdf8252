#pragma once

#include <cmath>
#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cocoa/scripted_model.hpp"

namespace fixtures {

using cocoa::LayerStates;
using cocoa::ScriptedEntry;
using cocoa::ScriptedModel;
using cocoa::TokenId;
using cocoa::Vector;

inline Vector log_probs(std::initializer_list<double> probs) {
  Vector out;
  for (double p : probs) out.push_back(std::log(p));
  return out;
}

// Tokens of the flip scenario.
inline constexpr TokenId kPrompt = 0;
inline constexpr TokenId kConfused = 1;  // more probable, unstable middle layers
inline constexpr TokenId kStable = 2;    // less probable, layers agree
inline constexpr TokenId kEos = 3;

/// V=4, L=3, d=3. After the prompt two candidates clear gamma=0.3:
/// kConfused (p=0.55) and kStable (p=0.44); each continues to kEos with
/// p=0.97. kConfused's span has layers 1, 2, 3 pairwise orthogonal
/// (fMLDS 1.0, conMLDS 0.5); kStable's span has identical vectors on every
/// layer (both scores 0).
inline ScriptedModel flip_model() {
  ScriptedModel m(4, 3, 3, "flip");
  const std::vector<Vector> prompt_layers = {{1, 1, 1}, {1, 1, 1}, {1, 1, 1}, {1, 1, 1}};
  const std::vector<Vector> confused_layers = {{0.5, 0.5, 0.5}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  const std::vector<Vector> stable_layers = {{1, 1, 1}, {1, 1, 1}, {1, 1, 1}, {1, 1, 1}};

  auto states = [&](const std::vector<TokenId>& prefix) {
    LayerStates s(prefix.size(), 3, 3);
    const auto& span_layers = prefix.size() > 1 && prefix[1] == kConfused ? confused_layers : stable_layers;
    for (std::size_t p = 0; p < prefix.size(); ++p) {
      for (int l = 0; l <= 3; ++l) s.set(p, l, p == 0 ? prompt_layers[l] : span_layers[l]);
    }
    return s;
  };
  auto add = [&](std::vector<TokenId> prefix, Vector logits) {
    LayerStates s = states(prefix);
    m.add_entry({std::move(prefix), std::move(logits), std::move(s)});
  };

  add({kPrompt}, log_probs({0.005, 0.55, 0.44, 0.005}));
  add({kPrompt, kConfused}, log_probs({0.01, 0.01, 0.01, 0.97}));
  add({kPrompt, kStable}, log_probs({0.01, 0.01, 0.01, 0.97}));
  add({kPrompt, kConfused, kEos}, log_probs({0.25, 0.25, 0.25, 0.25}));
  add({kPrompt, kStable, kEos}, log_probs({0.25, 0.25, 0.25, 0.25}));
  return m;
}

/// Multiplies every hidden vector at layer l by scales[l].
class ScaledBackend : public cocoa::Backend {
 public:
  ScaledBackend(const cocoa::Backend& inner, std::vector<double> scales) : inner_(inner), scales_(std::move(scales)) {}

  const cocoa::BackendInfo& info() const override { return inner_.info(); }

  cocoa::StepOutput evaluate(std::span<const TokenId> prefix) const override {
    auto out = inner_.evaluate(prefix);
    auto& s = out.layer_states;
    for (std::size_t p = 0; p < s.seq_len(); ++p) {
      for (int l = 0; l <= s.num_layers(); ++l) {
        for (double& x : s.at(p, l)) x *= scales_[static_cast<std::size_t>(l)];
      }
    }
    return out;
  }

 private:
  const cocoa::Backend& inner_;
  std::vector<double> scales_;
};

/// Fails every evaluate() after the first `allowed` calls.
class FailingBackend : public cocoa::Backend {
 public:
  FailingBackend(const cocoa::Backend& inner, int allowed) : inner_(inner), allowed_(allowed) {}
  const cocoa::BackendInfo& info() const override { return inner_.info(); }
  cocoa::StepOutput evaluate(std::span<const TokenId> prefix) const override {
    if (calls_++ >= allowed_) throw cocoa::Error("injected backend failure");
    return inner_.evaluate(prefix);
  }

 private:
  const cocoa::Backend& inner_;
  int allowed_;
  mutable int calls_ = 0;
};

inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("cocoa_test_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

}  // namespace fixtures
