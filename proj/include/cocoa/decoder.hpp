#pragma once

// Greedy decoding with span re-ranking at divergence points.
//
// At every step the next-token distribution is checked for a divergence
// point: more than one token whose probability is at least gamma times the
// maximum. Away from divergence points the greedy token is emitted. At a
// divergence point every candidate token is expanded greedily into a span,
// each span is scored from its log-probability and its middle-layer
// disagreement, and the best-scoring span is committed.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "cocoa/core.hpp"
#include "cocoa/mlds.hpp"
#include "cocoa/model.hpp"

namespace cocoa {

struct CandidateScore {
  Span span;
  double log_p = 0.0;
  double mlds = 0.0;
  double score = 0.0;
  std::size_t rank_in_C = 0;
};

struct GenerationResult {
  std::vector<TokenId> tokens;
  std::vector<DivergenceTrace> traces;
  std::size_t steps_greedy = 0;
  std::size_t steps_diverged = 0;

  bool operator==(const GenerationResult&) const = default;
};

/// Thrown when the backend fails mid-generation; carries everything decoded so far.
class DecodeAborted : public Error {
 public:
  DecodeAborted(const std::string& what, GenerationResult partial)
      : Error("decode aborted: " + what), partial_(std::move(partial)) {}

  const GenerationResult& partial() const { return partial_; }

 private:
  GenerationResult partial_;
};

/// Tokens with p >= gamma * max p, by descending probability (ties by id),
/// truncated to the top max_candidates. Element 0 is the greedy token.
inline std::vector<TokenId> divergence_set(std::span<const double> next_log_probs, double gamma,
                                           int max_candidates) {
  if (next_log_probs.empty()) throw InvalidInput("divergence_set: empty distribution");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw InvalidInput("divergence_set: gamma must lie in (0, 1]");
  if (max_candidates < 1) throw InvalidInput("divergence_set: max_candidates must be >= 1");

  double max = -std::numeric_limits<double>::infinity();
  for (double lp : next_log_probs) {
    if (std::isnan(lp)) throw InvalidInput("divergence_set: NaN log-probability");
    max = std::max(max, lp);
  }
  if (!std::isfinite(max)) throw InvalidInput("divergence_set: distribution has no finite mass");

  std::vector<TokenId> out;
  for (std::size_t i = 0; i < next_log_probs.size(); ++i) {
    if (std::exp(next_log_probs[i] - max) >= gamma) out.push_back(static_cast<TokenId>(i));
  }
  std::stable_sort(out.begin(), out.end(), [&](TokenId a, TokenId b) {
    return next_log_probs[static_cast<std::size_t>(a)] > next_log_probs[static_cast<std::size_t>(b)];
  });
  if (out.size() > static_cast<std::size_t>(max_candidates)) out.resize(static_cast<std::size_t>(max_candidates));
  return out;
}

inline double span_log_p(const Span& span, bool length_normalize) {
  if (span.tokens.empty()) throw InvalidInput("span_log_p: empty span");
  return length_normalize ? span.log_prob_sum / static_cast<double>(span.size()) : span.log_prob_sum;
}

/// CoCoA: log_p - alpha * mlds. With self-information gating: log_p * (1 + alpha * mlds).
inline double score_candidate(double log_p, double mlds, double alpha, bool gating) {
  return gating ? log_p * (1.0 + alpha * mlds) : log_p - alpha * mlds;
}

namespace detail {

inline Span expand_from(const Backend& backend, std::span<const TokenId> context, TokenId first,
                        double first_log_prob, const DecodeConfig& cfg, const LayerWindow& window,
                        int max_len) {
  std::vector<TokenId> seq(context.begin(), context.end());
  seq.push_back(first);

  Span span;
  span.start = context.size();
  span.tokens.push_back(first);
  span.log_prob_sum = first_log_prob;

  for (;;) {
    StepOutput out = backend.evaluate(seq);
    bool stop = cfg.is_eos(seq.back()) || static_cast<int>(span.size()) >= max_len;
    if (!stop) {
      auto next = divergence_set(out.next_log_probs, cfg.gamma, cfg.max_candidates);
      if (next.size() > 1) {
        stop = true;  // the next step is itself a divergence point
      } else {
        const TokenId t = next.front();
        seq.push_back(t);
        span.tokens.push_back(t);
        span.log_prob_sum += out.next_log_probs[static_cast<std::size_t>(t)];
      }
    }
    if (stop) {
      span.pooled = pool_window(out.layer_states, span.start, span.end(), window);
      return span;
    }
  }
}

}  // namespace detail

/// Expands `first` into a candidate span by greedy continuation.
///
/// Stops at max_span_len tokens, after an EOS token (kept in the span), or
/// right before a step that is itself a divergence point. The span's pooled
/// representations cover layers m..n and L of the resolved window.
inline Span expand_candidate(const Backend& backend, std::span<const TokenId> context, TokenId first,
                             const DecodeConfig& cfg) {
  cfg.validate();
  const LayerWindow window = resolve_window(cfg.layer_window, backend.info().num_layers);
  StepOutput ctx = backend.evaluate(context);
  if (first < 0 || static_cast<std::size_t>(first) >= ctx.next_log_probs.size()) {
    throw InvalidToken("expand_candidate: first token " + std::to_string(first) + " outside vocabulary");
  }
  return detail::expand_from(backend, context, first, ctx.next_log_probs[static_cast<std::size_t>(first)], cfg,
                             window, cfg.max_span_len);
}

/// Index of the best-scoring candidate; equal scores keep the lower rank.
inline std::size_t select_candidate(std::span<const CandidateScore> candidates) {
  if (candidates.empty()) throw InvalidInput("select_candidate: no candidates");
  std::size_t best = 0;
  for (std::size_t i = 1; i < candidates.size(); ++i) {
    if (candidates[i].score > candidates[best].score) best = i;
  }
  return best;
}

inline GenerationResult decode(const Backend& backend, std::span<const TokenId> prompt, const DecodeConfig& cfg) {
  cfg.validate();
  if (prompt.empty()) throw InvalidInput("decode: empty prompt");
  const LayerWindow window = resolve_window(cfg.layer_window, backend.info().num_layers);

  std::vector<TokenId> seq(prompt.begin(), prompt.end());
  GenerationResult result;
  const auto budget = static_cast<std::size_t>(cfg.max_new_tokens);

  try {
    while (result.tokens.size() < budget) {
      StepOutput out = backend.evaluate(seq);
      auto C = divergence_set(out.next_log_probs, cfg.gamma, cfg.max_candidates);

      if (C.size() == 1) {
        const TokenId t = C.front();
        seq.push_back(t);
        result.tokens.push_back(t);
        ++result.steps_greedy;
        if (cfg.is_eos(t)) break;
        continue;
      }

      const int remaining = static_cast<int>(budget - result.tokens.size());
      const int max_len = std::min(cfg.max_span_len, remaining);
      std::vector<CandidateScore> scored;
      scored.reserve(C.size());
      for (std::size_t r = 0; r < C.size(); ++r) {
        CandidateScore c;
        c.rank_in_C = r;
        c.span = detail::expand_from(backend, seq, C[r], out.next_log_probs[static_cast<std::size_t>(C[r])], cfg,
                                     window, max_len);
        c.log_p = span_log_p(c.span, cfg.length_normalize);
        c.mlds = mlds(cfg.mode, c.span.pooled, window);
        c.score = score_candidate(c.log_p, c.mlds, cfg.alpha, cfg.gating);
        scored.push_back(std::move(c));
      }
      const std::size_t chosen = select_candidate(scored);

      DivergenceTrace trace;
      trace.position = seq.size();
      trace.chosen_index = chosen;
      trace.greedy_index = 0;
      for (const auto& c : scored) trace.candidates.push_back({c.span.tokens, c.log_p, c.mlds, c.score});
      result.traces.push_back(std::move(trace));
      ++result.steps_diverged;

      const auto& span = scored[chosen].span.tokens;
      const std::size_t commit = cfg.commit_mode == CommitMode::full_span ? span.size() : 1;
      seq.insert(seq.end(), span.begin(), span.begin() + static_cast<std::ptrdiff_t>(commit));
      result.tokens.insert(result.tokens.end(), span.begin(), span.begin() + static_cast<std::ptrdiff_t>(commit));
      if (cfg.is_eos(result.tokens.back())) break;
    }
  } catch (const Error& e) {
    throw DecodeAborted(e.what(), std::move(result));
  }
  return result;
}

/// Plain greedy decoding, the baseline the re-ranking decoder departs from.
inline std::vector<TokenId> greedy_decode(const Backend& backend, std::span<const TokenId> prompt, int max_new_tokens,
                                          const std::set<TokenId>& eos_tokens) {
  if (prompt.empty()) throw InvalidInput("greedy_decode: empty prompt");
  std::vector<TokenId> seq(prompt.begin(), prompt.end());
  std::vector<TokenId> out;
  while (out.size() < static_cast<std::size_t>(std::max(0, max_new_tokens))) {
    const TokenId t = divergence_set(backend.evaluate(seq).next_log_probs, 1.0, 1).front();
    seq.push_back(t);
    out.push_back(t);
    if (eos_tokens.contains(t)) break;
  }
  return out;
}

}  // namespace cocoa
