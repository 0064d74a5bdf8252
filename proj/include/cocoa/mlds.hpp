#pragma once

// Middle-layer disagreement scores.
//
// A candidate span is summarized per layer by mean-pooling its hidden
// states. Disagreement between two layers is the cosine distance of their
// pooled vectors. Two aggregate scores are provided:
//
//   con_mlds: consecutive-layer disagreement, (1/N) sum_{j=m}^{n-1} (1 - cos(H_j, H_{j+1}))
//   f_mlds:   disagreement against the final layer, (1/N) sum_{j=m}^{n} (1 - cos(H_j, H_L))
//
// with N = n - m + 1 in both, so con_mlds divides n - m summands by N.

#include <algorithm>
#include <cmath>
#include <span>
#include <string>

#include "cocoa/core.hpp"

namespace cocoa {

struct LayerWindow {
  int m = 1;  // first middle layer
  int n = 1;  // last middle layer
  int L = 3;  // final layer

  int size() const { return n - m + 1; }

  void validate() const {
    if (!(1 <= m && m <= n && n <= L)) {
      throw ConfigError("layer window (" + std::to_string(m) + ", " + std::to_string(n) +
                        ") invalid for L = " + std::to_string(L));
    }
  }

  bool operator==(const LayerWindow&) const = default;
};

/// m = floor(L/3), n = floor(2L/3), with m raised to 1 when L/3 rounds to 0.
inline LayerWindow default_window(int L) {
  if (L < 3) throw ConfigError("default_window: need at least 3 layers, got " + std::to_string(L));
  return {std::max(1, L / 3), (2 * L) / 3, L};
}

/// "all" covers layers 1..L and leaves out the embedding output.
inline LayerWindow resolve_window(const WindowSpec& spec, int L) {
  LayerWindow w;
  switch (spec.kind) {
    case WindowKind::automatic:
      return default_window(L);
    case WindowKind::all:
      w = {1, L, L};
      break;
    case WindowKind::explicit_range:
      w = {spec.first, spec.last, L};
      break;
  }
  w.validate();
  return w;
}

inline constexpr double kZeroNorm = 1e-12;

inline double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw InvalidInput("cosine_similarity: dimension mismatch (" + std::to_string(a.size()) + " vs " +
                       std::to_string(b.size()) + ")");
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  // degenerate vectors carry no agreement evidence
  if (std::sqrt(na) < kZeroNorm || std::sqrt(nb) < kZeroNorm) return 0.0;
  // sqrt(|a|^2 |a|^2) == |a|^2 exactly, so self-similarity is exactly 1
  return std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
}

/// Component-wise mean of positions p..q (inclusive) at layer l.
inline Vector mean_pool(const LayerStates& states, std::size_t p, std::size_t q, int l) {
  if (p > q || q >= states.seq_len()) {
    throw InvalidInput("mean_pool: positions [" + std::to_string(p) + ", " + std::to_string(q) +
                       "] out of range for seq_len " + std::to_string(states.seq_len()));
  }
  if (l < 0 || l > states.num_layers()) {
    throw InvalidInput("mean_pool: layer " + std::to_string(l) + " out of range");
  }
  Vector out(states.dim(), 0.0);
  for (std::size_t i = p; i <= q; ++i) {
    auto v = states.at(i, l);
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += v[k];
  }
  const double count = static_cast<double>(q - p + 1);
  for (double& x : out) x /= count;
  return out;
}

/// Pools the layers both metrics need: m..n and L.
inline PooledLayers pool_window(const LayerStates& states, std::size_t p, std::size_t q, const LayerWindow& w) {
  PooledLayers pooled;
  for (int l = w.m; l <= w.n; ++l) pooled.emplace(l, mean_pool(states, p, q, l));
  if (!pooled.contains(w.L)) pooled.emplace(w.L, mean_pool(states, p, q, w.L));
  return pooled;
}

namespace detail {

inline const Vector& pooled_at(const PooledLayers& pooled, int l) {
  auto it = pooled.find(l);
  if (it == pooled.end()) throw InvalidInput("missing pooled layer " + std::to_string(l));
  return it->second;
}

}  // namespace detail

inline double con_mlds(const PooledLayers& pooled, const LayerWindow& w) {
  w.validate();
  double sum = 0.0;
  const Vector* prev = &detail::pooled_at(pooled, w.m);
  for (int j = w.m; j < w.n; ++j) {
    const Vector& next = detail::pooled_at(pooled, j + 1);
    sum += 1.0 - cosine_similarity(*prev, next);
    prev = &next;
  }
  return sum / static_cast<double>(w.size());
}

inline double f_mlds(const PooledLayers& pooled, const LayerWindow& w) {
  w.validate();
  const Vector& final_layer = detail::pooled_at(pooled, w.L);
  double sum = 0.0;
  for (int j = w.m; j <= w.n; ++j) {
    if (j == w.L) continue;  // the final layer agrees with itself
    sum += 1.0 - cosine_similarity(detail::pooled_at(pooled, j), final_layer);
  }
  return sum / static_cast<double>(w.size());
}

inline double mlds(MldsMode mode, const PooledLayers& pooled, const LayerWindow& w) {
  return mode == MldsMode::conmlds ? con_mlds(pooled, w) : f_mlds(pooled, w);
}

}  // namespace cocoa
