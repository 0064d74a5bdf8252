#pragma once

// A desk-scale decoder-only transformer with seeded random weights.
//
// Pre-norm blocks, causal multi-head attention, GELU MLP, sinusoidal position
// encoding and an untied output projection. Layer 0 is token embedding plus
// position encoding; layer l is the residual stream after block l. The final
// norm and output projection come after layer L and never touch the states.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "cocoa/model.hpp"

namespace cocoa {

struct TinyTransformerConfig {
  int vocab_size = 16;
  int num_layers = 6;
  int hidden_dim = 32;
  int num_heads = 4;
  std::uint64_t seed = 0;
  int ffn_mult = 4;
  // Scales the output projection; larger values give peakier distributions.
  double logit_scale = 1.0;
};

class TinyTransformer : public Backend {
 public:
  explicit TinyTransformer(const TinyTransformerConfig& cfg) : cfg_(cfg) {
    if (cfg.num_heads < 1 || cfg.hidden_dim % cfg.num_heads != 0) {
      throw ConfigError("tiny transformer: hidden_dim " + std::to_string(cfg.hidden_dim) +
                        " not divisible by num_heads " + std::to_string(cfg.num_heads));
    }
    if (cfg.ffn_mult < 1) throw ConfigError("tiny transformer: ffn_mult must be >= 1");
    info_ = {cfg.vocab_size, cfg.num_layers, cfg.hidden_dim,
             "tiny:" + std::to_string(cfg.vocab_size) + "," + std::to_string(cfg.num_layers) + "," +
                 std::to_string(cfg.hidden_dim) + "," + std::to_string(cfg.num_heads) + "," +
                 std::to_string(cfg.seed)};
    info_.validate();
    init_weights();
  }

  TinyTransformer(int vocab_size, int num_layers, int hidden_dim, int num_heads, std::uint64_t seed)
      : TinyTransformer(TinyTransformerConfig{vocab_size, num_layers, hidden_dim, num_heads, seed}) {}

  const BackendInfo& info() const override { return info_; }
  const TinyTransformerConfig& config() const { return cfg_; }

  StepOutput evaluate(std::span<const TokenId> prefix) const override {
    check_prefix(prefix);
    const std::size_t T = prefix.size();
    const std::size_t d = dim();
    const std::size_t heads = static_cast<std::size_t>(cfg_.num_heads);
    const std::size_t hd = d / heads;
    const double att_scale = 1.0 / std::sqrt(static_cast<double>(hd));

    StepOutput out;
    out.layer_states = LayerStates(T, cfg_.num_layers, d);
    auto& states = out.layer_states;

    std::vector<Vector> x(T, Vector(d));
    for (std::size_t t = 0; t < T; ++t) {
      const double* emb = &token_embedding_[static_cast<std::size_t>(prefix[t]) * d];
      for (std::size_t i = 0; i < d; ++i) x[t][i] = emb[i] + position_encoding(t, i);
      states.set(t, 0, x[t]);
    }

    std::vector<Vector> q(T), k(T), v(T);
    Vector h(d), attn(d), proj(d), hidden(ffn_dim()), scores(T);
    for (int l = 0; l < cfg_.num_layers; ++l) {
      const Block& blk = blocks_[static_cast<std::size_t>(l)];
      for (std::size_t t = 0; t < T; ++t) {
        layer_norm(x[t], blk.ln1_gain, blk.ln1_bias, h);
        q[t] = matvec(blk.wq, h, d);
        k[t] = matvec(blk.wk, h, d);
        v[t] = matvec(blk.wv, h, d);
      }
      for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t hh = 0; hh < heads; ++hh) {
          const std::size_t off = hh * hd;
          double max = -std::numeric_limits<double>::infinity();
          for (std::size_t s = 0; s <= t; ++s) {
            double dot = 0.0;
            for (std::size_t i = 0; i < hd; ++i) dot += q[t][off + i] * k[s][off + i];
            scores[s] = dot * att_scale;
            max = std::max(max, scores[s]);
          }
          double z = 0.0;
          for (std::size_t s = 0; s <= t; ++s) {
            scores[s] = std::exp(scores[s] - max);
            z += scores[s];
          }
          for (std::size_t i = 0; i < hd; ++i) {
            double acc = 0.0;
            for (std::size_t s = 0; s <= t; ++s) acc += scores[s] * v[s][off + i];
            attn[off + i] = acc / z;
          }
        }
        proj = matvec(blk.wo, attn, d);
        for (std::size_t i = 0; i < d; ++i) x[t][i] += proj[i];

        layer_norm(x[t], blk.ln2_gain, blk.ln2_bias, h);
        hidden = matvec(blk.w1, h, ffn_dim());
        for (std::size_t i = 0; i < hidden.size(); ++i) hidden[i] = gelu(hidden[i] + blk.b1[i]);
        proj = matvec(blk.w2, hidden, d);
        for (std::size_t i = 0; i < d; ++i) x[t][i] += proj[i] + blk.b2[i];

        states.set(t, l + 1, x[t]);
      }
    }

    layer_norm(x[T - 1], final_gain_, final_bias_, h);
    Vector logits = matvec(unembed_, h, static_cast<std::size_t>(cfg_.vocab_size));
    for (double& z : logits) z *= cfg_.logit_scale;
    out.next_log_probs = log_softmax(logits);
    return out;
  }

 private:
  struct Block {
    Vector ln1_gain, ln1_bias, wq, wk, wv, wo;
    Vector ln2_gain, ln2_bias, w1, b1, w2, b2;
  };

  std::size_t dim() const { return static_cast<std::size_t>(cfg_.hidden_dim); }
  std::size_t ffn_dim() const { return dim() * static_cast<std::size_t>(cfg_.ffn_mult); }

  // Uniform draws from the raw 64-bit engine output keep weights identical
  // across standard library implementations.
  double next_uniform(std::mt19937_64& rng) const {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
  }

  Vector random_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols, double stddev) const {
    const double a = stddev * std::numbers::sqrt3;
    Vector m(rows * cols);
    for (double& w : m) w = (2.0 * next_uniform(rng) - 1.0) * a;
    return m;
  }

  void init_weights() {
    std::mt19937_64 rng(cfg_.seed);
    const std::size_t d = dim();
    const std::size_t f = ffn_dim();
    const double in_std = 1.0 / std::sqrt(static_cast<double>(d));
    const double ffn_std = 1.0 / std::sqrt(static_cast<double>(f));

    token_embedding_ = random_matrix(rng, static_cast<std::size_t>(cfg_.vocab_size), d, 1.0);
    blocks_.resize(static_cast<std::size_t>(cfg_.num_layers));
    for (Block& b : blocks_) {
      b.ln1_gain = Vector(d, 1.0);
      b.ln1_bias = Vector(d, 0.0);
      b.wq = random_matrix(rng, d, d, in_std);
      b.wk = random_matrix(rng, d, d, in_std);
      b.wv = random_matrix(rng, d, d, in_std);
      b.wo = random_matrix(rng, d, d, in_std);
      b.ln2_gain = Vector(d, 1.0);
      b.ln2_bias = Vector(d, 0.0);
      b.w1 = random_matrix(rng, f, d, in_std);
      b.b1 = random_matrix(rng, 1, f, 0.1);
      b.w2 = random_matrix(rng, d, f, ffn_std);
      b.b2 = random_matrix(rng, 1, d, 0.1);
    }
    final_gain_ = Vector(d, 1.0);
    final_bias_ = Vector(d, 0.0);
    unembed_ = random_matrix(rng, static_cast<std::size_t>(cfg_.vocab_size), d, 1.0);
  }

  // Row-major (rows x x.size()) matrix times x.
  static Vector matvec(const Vector& m, const Vector& x, std::size_t rows) {
    const std::size_t cols = x.size();
    Vector y(rows, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* row = &m[r * cols];
      double acc = 0.0;
      for (std::size_t c = 0; c < cols; ++c) acc += row[c] * x[c];
      y[r] = acc;
    }
    return y;
  }

  static void layer_norm(const Vector& x, const Vector& gain, const Vector& bias, Vector& out) {
    const double n = static_cast<double>(x.size());
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean);
    var /= n;
    const double inv = 1.0 / std::sqrt(var + 1e-5);
    out.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = (x[i] - mean) * inv * gain[i] + bias[i];
  }

  static double gelu(double x) {
    return 0.5 * x * (1.0 + std::tanh(0.7978845608028654 * (x + 0.044715 * x * x * x)));
  }

  double position_encoding(std::size_t pos, std::size_t i) const {
    const double d = static_cast<double>(dim());
    const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / d);
    const double angle = static_cast<double>(pos) * rate;
    return (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
  }

  TinyTransformerConfig cfg_;
  BackendInfo info_;
  Vector token_embedding_;
  std::vector<Block> blocks_;
  Vector final_gain_, final_bias_;
  Vector unembed_;
};

}  // namespace cocoa
