#include <cmath>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "cocoa/decoder.hpp"
#include "cocoa/tiny_transformer.hpp"
#include "cocoa/trace_io.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

namespace cocoa {
namespace {

using fixtures::kConfused;
using fixtures::kEos;
using fixtures::kPrompt;
using fixtures::kStable;

TEST(DivergenceSet, Examples) {
  // threshold 0.3 * 0.5 = 0.15 admits tokens 0 and 1
  EXPECT_EQ(divergence_set(fixtures::log_probs({0.5, 0.2, 0.1, 0.1, 0.1}), 0.3, 8), (std::vector<TokenId>{0, 1}));
  // threshold 0.27 excludes the rest
  EXPECT_EQ(divergence_set(fixtures::log_probs({0.9, 0.05, 0.05}), 0.3, 8), (std::vector<TokenId>{0}));
  EXPECT_EQ(divergence_set(fixtures::log_probs({0.2, 0.5, 0.3}), 1.0, 8), (std::vector<TokenId>{1}));
}

TEST(DivergenceSet, OrderingTiesAndCap) {
  auto lp = fixtures::log_probs({0.1, 0.3, 0.3, 0.2, 0.1});
  EXPECT_EQ(divergence_set(lp, 0.3, 8), (std::vector<TokenId>{1, 2, 3, 0, 4}));
  EXPECT_EQ(divergence_set(lp, 0.3, 2), (std::vector<TokenId>{1, 2}));
  EXPECT_THROW(divergence_set(lp, 0.0, 2), InvalidInput);
  EXPECT_THROW(divergence_set(lp, 0.3, 0), InvalidInput);
  EXPECT_THROW(divergence_set(Vector{}, 0.3, 2), InvalidInput);
}

TEST(DivergenceSet, PropertyMatchesEnumeration) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-5, 5), gamma(0.05, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    Vector logits(2 + rng() % 30);
    for (double& x : logits) x = u(rng);
    const auto lp = log_softmax(logits);
    const double g = gamma(rng);
    double pmax = 0;
    for (double x : lp) pmax = std::max(pmax, std::exp(x));
    std::size_t count = 0;
    for (double x : lp) count += std::exp(x) >= g * pmax ? 1 : 0;
    auto c = divergence_set(lp, g, 64);
    EXPECT_EQ(c.size(), count);
    EXPECT_EQ(c.front(), std::max_element(lp.begin(), lp.end()) - lp.begin());
    for (std::size_t i = 1; i < c.size(); ++i) EXPECT_GE(lp[c[i - 1]], lp[c[i]]);
  }
}

TEST(SpanLogP, Examples) {
  Span one{{1}, 0, std::log(0.5), {}};
  EXPECT_DOUBLE_EQ(span_log_p(one, true), std::log(0.5));
  EXPECT_DOUBLE_EQ(span_log_p(one, false), std::log(0.5));
  Span two{{1, 2}, 0, 2 * std::log(0.5), {}};
  EXPECT_DOUBLE_EQ(span_log_p(two, true), std::log(0.5));
  EXPECT_DOUBLE_EQ(span_log_p(two, false), 2 * std::log(0.5));
  EXPECT_THROW(span_log_p(Span{}, true), InvalidInput);
}

TEST(ScoreCandidate, Examples) {
  EXPECT_EQ(score_candidate(-1.3, 0.7, 0.0, false), -1.3);
  EXPECT_EQ(score_candidate(-1.3, 0.7, 0.0, true), -1.3);
  EXPECT_EQ(score_candidate(-1.3, 0.0, 4.0, false), -1.3);
  EXPECT_EQ(score_candidate(-1.3, 0.0, 4.0, true), -1.3);
  EXPECT_DOUBLE_EQ(score_candidate(-1.0, 0.5, 2.0, false), -2.0);
  EXPECT_DOUBLE_EQ(score_candidate(-1.0, 0.5, 2.0, true), -2.0);
}

TEST(ScoreCandidate, MonotoneInMlds) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> lp(-10, -1e-6), m(0, 2), a(1e-3, 10);
  for (int trial = 0; trial < 500; ++trial) {
    const double l = lp(rng), alpha = a(rng), m1 = m(rng), m2 = m1 + m(rng);
    for (bool gating : {false, true}) EXPECT_LE(score_candidate(l, m2, alpha, gating), score_candidate(l, m1, alpha, gating));
  }
}

DecodeConfig flip_config(double alpha, MldsMode mode, bool gating = true) {
  DecodeConfig cfg;
  cfg.alpha = alpha;
  cfg.mode = mode;
  cfg.gating = gating;
  cfg.eos_tokens = {kEos};
  cfg.max_new_tokens = 8;
  return cfg;
}

TEST(ExpandCandidate, HorizonOneAndEosStop) {
  auto model = fixtures::flip_model();
  const std::vector<TokenId> ctx{kPrompt};
  auto cfg = flip_config(2.5, MldsMode::fmlds);
  cfg.max_span_len = 1;
  auto one = expand_candidate(model, ctx, kConfused, cfg);
  EXPECT_EQ(one.tokens, (std::vector<TokenId>{kConfused}));
  EXPECT_NEAR(one.log_prob_sum, std::log(0.55), 1e-12);

  cfg.max_span_len = 8;
  auto span = expand_candidate(model, ctx, kConfused, cfg);
  EXPECT_EQ(span.tokens, (std::vector<TokenId>{kConfused, kEos}));
  EXPECT_EQ(span.start, 1u);
  EXPECT_EQ(span.end(), 2u);
  EXPECT_NEAR(span.log_prob_sum, std::log(0.55) + std::log(0.97), 1e-12);
  EXPECT_EQ(span.pooled.at(1), (Vector{1, 0, 0}));
  EXPECT_EQ(span.pooled.at(3), (Vector{0, 0, 1}));
}

TEST(ExpandCandidate, StopsBeforeNextDivergencePoint) {
  // after token 1 the distribution is flat: that step is itself a divergence point
  ScriptedModel m(3, 3, 1);
  auto states = [](std::size_t n) {
    LayerStates s(n, 3, 1);
    for (std::size_t p = 0; p < n; ++p)
      for (int l = 0; l <= 3; ++l) s.set(p, l, Vector{1.0 + l});
    return s;
  };
  m.add_entry({{0}, fixtures::log_probs({0.1, 0.5, 0.4}), states(1)});
  m.add_entry({{0, 1}, fixtures::log_probs({0.34, 0.33, 0.33}), states(2)});
  DecodeConfig cfg;
  auto span = expand_candidate(m, std::vector<TokenId>{0}, 1, cfg);
  EXPECT_EQ(span.tokens, (std::vector<TokenId>{1}));
}

TEST(Decode, FlipScenario) {
  auto model = fixtures::flip_model();
  const std::vector<TokenId> prompt{kPrompt};
  for (auto mode : {MldsMode::fmlds, MldsMode::conmlds}) {
    for (bool gating : {true, false}) {
      auto greedy_like = decode(model, prompt, flip_config(0.0, mode, gating));
      ASSERT_EQ(greedy_like.traces.size(), 1u);
      EXPECT_EQ(greedy_like.traces[0].chosen_index, 0u);
      EXPECT_EQ(greedy_like.tokens, (std::vector<TokenId>{kConfused, kEos}));

      auto cocoa = decode(model, prompt, flip_config(2.5, mode, gating));
      ASSERT_EQ(cocoa.traces.size(), 1u);
      const auto& t = cocoa.traces[0];
      EXPECT_EQ(t.greedy_index, 0u);
      EXPECT_EQ(t.chosen_index, 1u);
      EXPECT_EQ(t.position, 1u);
      EXPECT_EQ(cocoa.tokens, (std::vector<TokenId>{kStable, kEos}));
      EXPECT_DOUBLE_EQ(t.candidates[0].mlds, mode == MldsMode::fmlds ? 1.0 : 0.5);
      EXPECT_DOUBLE_EQ(t.candidates[1].mlds, 0.0);
    }
  }
}

TEST(Decode, TraceScoresFollowConfiguredRule) {
  auto model = fixtures::flip_model();
  const std::vector<TokenId> prompt{kPrompt};
  for (bool gating : {true, false}) {
    auto cfg = flip_config(2.5, MldsMode::fmlds, gating);
    auto r = decode(model, prompt, cfg);
    for (const auto& c : r.traces[0].candidates) {
      EXPECT_NEAR(c.score, score_candidate(c.log_p, c.mlds, cfg.alpha, gating), 1e-12);
    }
    EXPECT_NEAR(r.traces[0].candidates[0].log_p, (std::log(0.55) + std::log(0.97)) / 2, 1e-12);
  }
}

TEST(Decode, FirstTokenCommitMode) {
  auto model = fixtures::flip_model();
  auto cfg = flip_config(2.5, MldsMode::fmlds);
  cfg.commit_mode = CommitMode::first_token;
  auto r = decode(model, std::vector<TokenId>{kPrompt}, cfg);
  // the chosen span's first token is committed, then kEos follows greedily
  EXPECT_EQ(r.tokens, (std::vector<TokenId>{kStable, kEos}));
  EXPECT_EQ(r.steps_diverged, 1u);
  EXPECT_EQ(r.steps_greedy, 1u);
}

TEST(Decode, TinyTransformerInvariants) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 6; ++trial) {
    TinyTransformer model(12, 4, 16, 2, 40 + trial);
    DecodeConfig cfg;
    cfg.max_new_tokens = 12;
    cfg.max_span_len = 3;
    cfg.max_candidates = 3;
    cfg.eos_tokens = {0};
    cfg.commit_mode = trial % 2 ? CommitMode::first_token : CommitMode::full_span;
    std::vector<TokenId> prompt{TokenId(1 + rng() % 11), TokenId(1 + rng() % 11)};
    auto r = decode(model, prompt, cfg);
    EXPECT_LE(r.tokens.size(), 12u);
    EXPECT_EQ(r.steps_diverged, r.traces.size());
    std::size_t committed = 0;
    for (const auto& t : r.traces) {
      ASSERT_LT(t.chosen_index, t.candidates.size());
      EXPECT_GT(t.candidates.size(), 1u);
      committed += cfg.commit_mode == CommitMode::full_span ? t.candidates[t.chosen_index].tokens.size() : 1;
      std::set<TokenId> firsts;
      for (const auto& c : t.candidates) {
        EXPECT_TRUE(firsts.insert(c.tokens.front()).second);
        EXPECT_LE(c.log_p, 0.0);
        EXPECT_GE(c.mlds, 0.0);
      }
    }
    EXPECT_EQ(r.steps_greedy + committed, r.tokens.size());
    EXPECT_EQ(decode(model, prompt, cfg), r);
  }
}

TEST(Decode, GammaOneIsGreedy) {
  TinyTransformer model(16, 6, 32, 4, 7);
  DecodeConfig cfg;
  cfg.gamma = 1.0;
  cfg.max_new_tokens = 10;
  const std::vector<TokenId> prompt{1, 2};
  auto r = decode(model, prompt, cfg);
  EXPECT_TRUE(r.traces.empty());
  EXPECT_EQ(r.tokens, oracle::greedy(model, prompt, 10, {}));
  EXPECT_EQ(r.tokens, greedy_decode(model, prompt, 10, {}));
}

TEST(Decode, SelectionInvariantToLogPShift) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> lp(-5, -0.1), m(0, 1.5), shift(-3, 3);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<CandidateScore> a(2 + rng() % 6), b;
    const double c = shift(rng);
    for (auto& x : a) {
      x.log_p = lp(rng);
      x.mlds = m(rng);
      x.score = score_candidate(x.log_p, x.mlds, 2.5, false);
    }
    b = a;
    for (auto& x : b) x.score = score_candidate(x.log_p + c, x.mlds, 2.5, false);
    EXPECT_EQ(select_candidate(a), select_candidate(b));
  }
}

TEST(Decode, TieBreaksTowardGreedy) {
  std::vector<CandidateScore> c(3);
  c[0].score = -1.0;
  c[1].score = -0.5;
  c[2].score = -0.5;
  EXPECT_EQ(select_candidate(c), 1u);
}

TEST(Decode, BackendFailureCarriesPartialResult) {
  TinyTransformer model(16, 6, 32, 4, 7);
  DecodeConfig cfg;
  cfg.gamma = 1.0;
  fixtures::FailingBackend failing(model, 3);
  try {
    decode(failing, std::vector<TokenId>{1, 2}, cfg);
    FAIL() << "expected DecodeAborted";
  } catch (const DecodeAborted& e) {
    EXPECT_EQ(e.partial().tokens.size(), 3u);
    EXPECT_EQ(e.partial().tokens, oracle::greedy(model, {1, 2}, 3, {}));
  }
}

TEST(Decode, RejectsBadInputs) {
  auto model = fixtures::flip_model();
  DecodeConfig cfg;
  EXPECT_THROW(decode(model, std::vector<TokenId>{}, cfg), InvalidInput);
  cfg.layer_window = WindowSpec::range(2, 4);
  EXPECT_THROW(decode(model, std::vector<TokenId>{kPrompt}, cfg), ConfigError);
}

TEST(TraceIo, RoundTripAndErrors) {
  auto model = fixtures::flip_model();
  auto r = decode(model, std::vector<TokenId>{kPrompt}, flip_config(2.5, MldsMode::fmlds));
  std::stringstream buf;
  write_traces(buf, r.traces);
  const std::string text = buf.str();
  EXPECT_NE(text.find("\"chosen\":1"), std::string::npos);
  std::istringstream in(text);
  EXPECT_EQ(read_traces(in), r.traces);

  std::istringstream bad("\n" + text + "{\"pos\":1}\n");
  try {
    read_traces(bad);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
  std::istringstream extra(R"({"pos":1,"candidates":[],"chosen":0,"greedy":0,"x":1})");
  EXPECT_THROW(read_traces(extra), ParseError);
  std::istringstream range(R"({"pos":1,"candidates":[{"tokens":[1],"log_p":-1,"mlds":0,"score":-1}],"chosen":1,"greedy":0})");
  EXPECT_THROW(read_traces(range), ParseError);
}

}  // namespace
}  // namespace cocoa
