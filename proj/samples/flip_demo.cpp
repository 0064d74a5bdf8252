// Builds a four-token scripted model with one divergence point and decodes it
// twice: once as plain greedy (alpha = 0) and once with re-ranking enabled.
// The more probable candidate has disagreeing middle layers, so re-ranking
// picks the other one.
//
//   flip_demo [--save model.json]

#include <cmath>
#include <cstring>
#include <iostream>

#include "cocoa/decoder.hpp"
#include "cocoa/scripted_model.hpp"

using namespace cocoa;

namespace {

Vector log_probs(std::initializer_list<double> probs) {
  Vector out;
  for (double p : probs) out.push_back(std::log(p));
  return out;
}

ScriptedModel build_model() {
  // token 0: prompt, 1: confident but unstable, 2: less likely but stable, 3: EOS
  ScriptedModel m(4, 3, 3, "flip");
  const std::vector<Vector> flat = {{1, 1, 1}, {1, 1, 1}, {1, 1, 1}, {1, 1, 1}};
  const std::vector<Vector> twisted = {{0.5, 0.5, 0.5}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  auto add = [&](std::vector<TokenId> prefix, Vector logits) {
    LayerStates s(prefix.size(), 3, 3);
    const auto& span_layers = prefix.size() > 1 && prefix[1] == 1 ? twisted : flat;
    for (std::size_t p = 0; p < prefix.size(); ++p) {
      for (int l = 0; l <= 3; ++l) s.set(p, l, p == 0 ? flat[l] : span_layers[l]);
    }
    m.add_entry({std::move(prefix), std::move(logits), std::move(s)});
  };
  add({0}, log_probs({0.005, 0.55, 0.44, 0.005}));
  add({0, 1}, log_probs({0.01, 0.01, 0.01, 0.97}));
  add({0, 2}, log_probs({0.01, 0.01, 0.01, 0.97}));
  add({0, 1, 3}, log_probs({0.25, 0.25, 0.25, 0.25}));
  add({0, 2, 3}, log_probs({0.25, 0.25, 0.25, 0.25}));
  return m;
}

void run(const Backend& model, double alpha) {
  DecodeConfig cfg;
  cfg.alpha = alpha;
  cfg.eos_tokens = {3};
  const std::vector<TokenId> prompt{0};
  const auto r = decode(model, prompt, cfg);
  std::cout << "alpha = " << alpha << ": " << format_tokens(r.tokens) << '\n';
  for (const auto& t : r.traces) {
    for (std::size_t i = 0; i < t.candidates.size(); ++i) {
      const auto& c = t.candidates[i];
      std::cout << "  " << (i == t.chosen_index ? '*' : ' ') << ' ' << format_tokens(c.tokens)
                << "  log_p " << c.log_p << "  mlds " << c.mlds << "  score " << c.score << '\n';
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  const auto model = build_model();
  if (argc == 3 && std::strcmp(argv[1], "--save") == 0) {
    model.save(argv[2]);
    std::cout << "wrote " << argv[2] << '\n';
    return 0;
  }
  run(model, 0.0);
  run(model, 2.5);
  return 0;
}
