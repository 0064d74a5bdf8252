#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "cocoa/scripted_model.hpp"
#include "cocoa/tiny_transformer.hpp"
#include "support/fixtures.hpp"

namespace cocoa {
namespace {

double sum_exp(const Vector& v) {
  double s = 0;
  for (double x : v) s += std::exp(x);
  return s;
}

ScriptedModel minimal_model() {
  ScriptedModel m(4, 3, 2);
  LayerStates s(1, 3, 2);
  for (int l = 0; l <= 3; ++l) s.set(0, l, std::vector<double>{double(l), 1.0});
  m.add_entry({{3}, {0.0, 1.0, 2.0, 3.0}, s});
  return m;
}

TEST(ScriptedModel, LookupReturnsStoredEntry) {
  auto m = minimal_model();
  const std::vector<TokenId> prefix{3};
  auto out = m.evaluate(prefix);
  EXPECT_EQ(out.next_log_probs, log_softmax(std::vector<double>{0.0, 1.0, 2.0, 3.0}));
  EXPECT_EQ(out.layer_states, m.entries().front().states);
  EXPECT_NEAR(sum_exp(out.next_log_probs), 1.0, 1e-12);
  EXPECT_EQ(m.evaluate(prefix), out);
}

TEST(ScriptedModel, Errors) {
  auto m = minimal_model();
  try {
    m.evaluate(std::vector<TokenId>{1, 2});
    FAIL() << "expected MissingEntry";
  } catch (const MissingEntry& e) {
    EXPECT_NE(std::string(e.what()).find("[1, 2]"), std::string::npos);
  }
  EXPECT_THROW(m.evaluate(std::vector<TokenId>{4}), InvalidToken);
  EXPECT_THROW(m.evaluate(std::vector<TokenId>{-1}), InvalidToken);
  EXPECT_THROW(m.evaluate(std::vector<TokenId>{}), InvalidInput);
}

TEST(ScriptedModel, ParsesMinimalFile) {
  const char* text = R"({"vocab_size":4,"num_layers":3,"hidden_dim":2,"entries":[
    {"prefix":[3],"logits":[0,1,2,3],"states":[[[0,1],[1,1],[2,1],[3,1]]]}]})";
  auto m = ScriptedModel::parse(text);
  EXPECT_EQ(m.info().vocab_size, 4);
  EXPECT_EQ(m.info().num_layers, 3);
  EXPECT_EQ(m.info().hidden_dim, 2);
  EXPECT_EQ(m.size(), 1u);
  EXPECT_EQ(m.entries().front(), minimal_model().entries().front());
}

TEST(ScriptedModel, SchemaAndParseErrors) {
  // wrong vector length
  const char* bad_dim = R"({"vocab_size":4,"num_layers":3,"hidden_dim":2,"entries":[
    {"prefix":[3],"logits":[0,1,2,3],"states":[[[0,1],[1,1,9],[2,1],[3,1]]]}]})";
  try {
    ScriptedModel::parse(bad_dim);
    FAIL() << "expected SchemaError";
  } catch (const SchemaError& e) {
    EXPECT_NE(std::string(e.what()).find("entries[0].states[0][1]"), std::string::npos) << e.what();
  }
  const char* bad_logits = R"({"vocab_size":4,"num_layers":3,"hidden_dim":2,"entries":[
    {"prefix":[3],"logits":[0,1,2],"states":[[[0,1],[1,1],[2,1],[3,1]]]}]})";
  EXPECT_THROW(ScriptedModel::parse(bad_logits), SchemaError);
  const char* missing = R"({"vocab_size":4,"num_layers":3,"entries":[]})";
  EXPECT_THROW(ScriptedModel::parse(missing), ParseError);
  const char* small_L = R"({"vocab_size":4,"num_layers":2,"hidden_dim":2,"entries":[]})";
  EXPECT_THROW(ScriptedModel::parse(small_L), SchemaError);
  try {
    ScriptedModel::parse("{\"vocab_size\": 4,\n \"num_layers\": }");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
}

TEST(ScriptedModel, RoundTripThroughFile) {
  auto dir = fixtures::temp_dir("scripted_rt");
  auto original = fixtures::flip_model();
  original.save((dir / "m.json").string());
  auto loaded = ScriptedModel::load((dir / "m.json").string());
  EXPECT_EQ(loaded.entries(), original.entries());

  // random-valued entries survive bit-exactly
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0.0, 3.0);
  ScriptedModel r(7, 4, 3);
  for (TokenId t = 0; t < 7; ++t) {
    ScriptedEntry e{{t, TokenId((t + 1) % 7)}, Vector(7), LayerStates(2, 4, 3)};
    for (double& x : e.logits) x = g(rng);
    for (std::size_t p = 0; p < 2; ++p)
      for (int l = 0; l <= 4; ++l)
        for (double& x : e.states.at(p, l)) x = g(rng);
    r.add_entry(e);
  }
  r.save((dir / "r.json").string());
  EXPECT_EQ(ScriptedModel::load((dir / "r.json").string()).entries(), r.entries());
  std::filesystem::remove_all(dir);
}

TEST(RecordingBackend, FreezesQueriedPrefixes) {
  TinyTransformer tiny(8, 3, 8, 2, 1);
  RecordingBackend rec(tiny);
  const std::vector<TokenId> a{1, 2}, b{1, 2, 3};
  auto oa = rec.evaluate(a);
  rec.evaluate(b);
  auto table = rec.recorded();
  EXPECT_EQ(table.size(), 2u);
  auto replay = table.evaluate(a);
  EXPECT_EQ(replay.layer_states, oa.layer_states);
  for (std::size_t i = 0; i < oa.next_log_probs.size(); ++i) {
    EXPECT_NEAR(replay.next_log_probs[i], oa.next_log_probs[i], 1e-12);
  }
}

TEST(TinyTransformer, RejectsIndivisibleHeads) {
  EXPECT_THROW(TinyTransformer(16, 6, 30, 4, 7), ConfigError);
  EXPECT_THROW(TinyTransformer(16, 2, 32, 4, 7), ConfigError);
}

TEST(TinyTransformer, DeterministicForSameSeed) {
  TinyTransformer a(16, 6, 32, 4, 7), b(16, 6, 32, 4, 7), c(16, 6, 32, 4, 8);
  const std::vector<TokenId> prefix{3, 1, 4, 1, 5};
  EXPECT_EQ(a.evaluate(prefix), b.evaluate(prefix));
  EXPECT_EQ(a.evaluate(prefix), a.evaluate(prefix));
  EXPECT_NE(a.evaluate(prefix), c.evaluate(prefix));
}

TEST(TinyTransformer, FiniteStatesAtEveryLevel) {
  TinyTransformer m(16, 6, 32, 4, 7);
  auto out = m.evaluate(std::vector<TokenId>{0});
  EXPECT_EQ(out.layer_states.seq_len(), 1u);
  EXPECT_EQ(out.layer_states.levels(), 7u);
  EXPECT_TRUE(out.layer_states.all_finite());
  EXPECT_EQ(out.next_log_probs.size(), 16u);
}

TEST(TinyTransformer, Normalized) {
  TinyTransformer m(16, 6, 32, 4, 7);
  EXPECT_NEAR(sum_exp(m.evaluate(std::vector<TokenId>{1, 2}).next_log_probs), 1.0, 1e-6);
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<TokenId> prefix(1 + rng() % 10);
    for (auto& t : prefix) t = TokenId(rng() % 16);
    EXPECT_NEAR(sum_exp(m.evaluate(prefix).next_log_probs), 1.0, 1e-6);
  }
}

TEST(TinyTransformer, CausalStatesUnchangedByExtension) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    TinyTransformer m(12, 4 + trial % 3, 16, 4, 100 + trial);
    std::vector<TokenId> prefix(1 + rng() % 8);
    for (auto& t : prefix) t = TokenId(rng() % 12);
    auto base = m.evaluate(prefix);
    auto ext = prefix;
    ext.push_back(TokenId(rng() % 12));
    auto longer = m.evaluate(ext);
    for (std::size_t p = 0; p < prefix.size(); ++p) {
      for (int l = 0; l <= m.info().num_layers; ++l) {
        auto a = base.layer_states.at(p, l), b = longer.layer_states.at(p, l);
        for (std::size_t k = 0; k < a.size(); ++k) EXPECT_NEAR(a[k], b[k], 1e-9);
      }
    }
  }
}

TEST(TinyTransformer, LayersCarryDistinctStates) {
  TinyTransformer m(16, 6, 32, 4, 7);
  auto out = m.evaluate(std::vector<TokenId>{2, 9});
  for (int l = 1; l <= 6; ++l) {
    auto prev = out.layer_states.at(1, l - 1), cur = out.layer_states.at(1, l);
    EXPECT_NE(std::vector<double>(prev.begin(), prev.end()), std::vector<double>(cur.begin(), cur.end()));
  }
}

}  // namespace
}  // namespace cocoa
