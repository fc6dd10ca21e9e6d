#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>

#include "momentnav/agent.hpp"
#include "momentnav/errors.hpp"

using namespace momentnav;

namespace {

AgentConfig small_agent() {
  AgentConfig a;
  a.feature_dim = 8;
  a.vocab_size = 30;
  a.query_dim = 6;
  a.feedback_dim = 5;
  a.joint_dim = 7;
  a.hidden_dim = 9;
  return a;
}

Corpus small_corpus() {
  CorpusConfig c;
  c.n_videos = 3;
  c.clips_per_video = 4;
  c.vocab_size = 30;
  c.concepts_per_clip = 10;
  c.feature_dim = 8;
  c.topic_concepts = 6;
  return gen_corpus(c);
}

PolicyParams fresh(std::uint64_t seed = 7) {
  AgentConfig a = small_agent();
  a.init_seed = seed;
  PolicyParams p(a);
  p.init();
  return p;
}

void expect_near(const Vec& a, const Vec& b, double tol) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], tol) << i;
}

}  // namespace

TEST(Config, Dimensions) {
  PolicyParams p = fresh();
  EXPECT_EQ(p.fc_m.in_dim(), 8u);
  EXPECT_EQ(p.fc_m.out_dim(), 7u);
  EXPECT_EQ(p.fc_q.in_dim(), 6u);
  EXPECT_EQ(p.fc_q.out_dim(), 7u);
  EXPECT_EQ(p.fc_w.in_dim(), 14u);
  EXPECT_EQ(p.fc_w.out_dim(), 1u);
  EXPECT_EQ(p.gru.input_dim(), 5u);
  EXPECT_EQ(p.gru.hidden_dim(), 6u);
  AgentConfig bad = small_agent();
  bad.temperature = 0.0;
  EXPECT_THROW(PolicyParams{bad}, ConfigError);
}

TEST(EncodeQuery, EmptyBagGivesProjectionBias) {
  PolicyParams p = fresh();
  for (double& b : p.query_proj.bias.value.data()) b = 0.125;
  QuerySpec q;
  Vec q0 = encode_query(p, q);
  EXPECT_EQ(q0, Vec(6, 0.125));
  q.concept_bag = {{3, 0.0}, {4, 0.0}};
  EXPECT_EQ(encode_query(p, q), Vec(6, 0.125));
}

TEST(EncodeQuery, SingleConceptIsProjectedEmbedding) {
  PolicyParams p = fresh();
  QuerySpec q;
  q.concept_bag = {{5, 1.0}};
  auto row = p.concept_embed.value.data().subspan(5 * 6, 6);
  expect_near(encode_query(p, q), p.query_proj.forward(row), 0.0);
}

TEST(EncodeQuery, OrderInvariantAndUnknownConcept) {
  PolicyParams p = fresh();
  QuerySpec a;
  a.concept_bag = {{1, 0.9}, {7, 0.4}, {12, 0.25}, {29, 0.6}};
  QuerySpec b = a;
  std::reverse(b.concept_bag.begin(), b.concept_bag.end());
  expect_near(encode_query(p, a), encode_query(p, b), 1e-15);
  a.concept_bag.push_back({30, 1.0});
  EXPECT_THROW(encode_query(p, a), ArgumentError);
}

TEST(UpdateQuery, ZeroGruWeights) {
  PolicyParams p = fresh();
  ParamRefs g;
  p.gru.collect(g);
  for (Param* x : g) x->value.fill(0.0);
  Vec qt{1.0, -2.0, 0.5, 0.0, 3.0, -1.0};
  Vec q0{0.1, 0.2, 0.3, 0.4, 0.5, 0.6};
  const Feedback fb[] = {{4, +1}};
  Vec out = update_query(p, qt, q0, fb);
  for (std::size_t i = 0; i < qt.size(); ++i) EXPECT_DOUBLE_EQ(out[i], 0.5 * qt[i] + q0[i]);
}

TEST(UpdateQuery, EmptyFeedbackIsIdentity) {
  PolicyParams p = fresh();
  Vec qt{1.0, -2.0, 0.5, 0.0, 3.0, -1.0};
  Vec q0(6, 9.0);
  EXPECT_EQ(update_query(p, qt, q0, {}), qt);
}

TEST(UpdateQuery, SignedFeedbackLinearity) {
  PolicyParams p = fresh();
  for (double& b : p.b1.value.data()) b = 0.3;
  Vec plus = embed_feedback(p, {11, +1});
  Vec minus = embed_feedback(p, {11, -1});
  for (std::size_t i = 0; i < plus.size(); ++i) {
    EXPECT_NEAR(plus[i] - minus[i], 2.0 * p.W1.value(i, 11), 1e-15);
    EXPECT_NEAR(plus[i] + minus[i], 0.6, 1e-15);
  }
  EXPECT_THROW(embed_feedback(p, {30, +1}), ArgumentError);
  EXPECT_THROW(embed_feedback(p, {1, 0}), ArgumentError);
  const Feedback bad[] = {{99, 1}};
  EXPECT_THROW(update_query(p, Vec(6, 0.0), Vec(6, 0.0), bad), ArgumentError);
}

TEST(UpdateQuery, KeywordsFoldSequentially) {
  PolicyParams p = fresh();
  Vec qt{0.2, -0.1, 0.4, 0.0, 0.3, -0.5};
  Vec q0{0.1, 0.1, 0.1, 0.1, 0.1, 0.1};
  const Feedback both[] = {{2, +1}, {9, -1}};
  Vec h = p.gru.forward(embed_feedback(p, both[0]), qt);
  h = p.gru.forward(embed_feedback(p, both[1]), h);
  for (std::size_t i = 0; i < h.size(); ++i) h[i] += q0[i];
  EXPECT_EQ(update_query(p, qt, q0, both), h);
}

TEST(ScoreActions, SingleCandidate) {
  PolicyParams p = fresh();
  Corpus c = small_corpus();
  const MomentId cand[] = {3};
  ActionScores s = score_actions(p, Vec(6, 0.3), cand, c);
  ASSERT_EQ(s.probabilities.size(), 1u);
  EXPECT_DOUBLE_EQ(s.probabilities[0], 1.0);
  ObservationWindow empty;
  EXPECT_THROW(score_actions(p, Vec(6, 0.3), empty, c), StateError);
}

TEST(ScoreActions, IdenticalFeaturesEqualScores) {
  PolicyParams p = fresh();
  Corpus base = small_corpus();
  auto moments = base.moments();
  moments[5].feature = moments[2].feature;
  Corpus c(base.config(), base.vocab(), moments);
  const MomentId cand[] = {2, 5, 7};
  ActionScores s = score_actions(p, Vec{0.1, 0.5, -0.2, 0.3, 0.0, 0.9}, cand, c);
  EXPECT_EQ(s.scores[0], s.scores[1]);
  EXPECT_EQ(s.probabilities[0], s.probabilities[1]);
  double sum = 0.0;
  for (double v : s.probabilities) sum += v;
  EXPECT_NEAR(sum, 1.0, 1e-12);
}

TEST(ScoreActions, EmbeddingCacheMatchesDirect) {
  PolicyParams p = fresh();
  Corpus c = small_corpus();
  MomentEmbeddings emb(p, c);
  const MomentId cand[] = {0, 4, 11};
  Vec q{0.1, 0.5, -0.2, 0.3, 0.0, 0.9};
  EXPECT_EQ(score_actions(p, q, cand, c).scores, score_actions(p, q, cand, c, &emb).scores);
}

TEST(SelectAction, ArgmaxAndTies) {
  ActionScores s;
  s.candidates = {4, 2, 9};
  s.scores = {0.1, 0.9, 0.3};
  s.probabilities = softmax(s.scores);
  EXPECT_EQ(s.argmax(), 1u);
  Rng rng(1);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(select_action(s, 0.0, rng).moment, 2u);

  ActionScores tie;
  tie.candidates = {8, 3, 5};
  tie.scores = {0.5, 0.5, 0.2};
  EXPECT_EQ(tie.argmax(), 1u);  // candidate 3 is the lower id
}

TEST(SelectAction, UniformWhenEpsilonOne) {
  ActionScores s;
  s.candidates = {0, 1, 2, 3, 4};
  s.scores = {0.9, 0.1, 0.1, 0.1, 0.1};
  Rng rng(5);
  std::vector<int> counts(5, 0);
  const int n = 10000;
  for (int i = 0; i < n; ++i) ++counts[select_action(s, 1.0, rng).index];
  double chi2 = 0.0;
  for (int c : counts) chi2 += (c - n / 5.0) * (c - n / 5.0) / (n / 5.0);
  EXPECT_LT(chi2, 18.47);  // 4 dof, p = 0.001
}

TEST(SelectAction, ExploreRate) {
  ActionScores s;
  s.candidates = {0, 1, 2};
  s.scores = {0.1, 0.9, 0.3};
  Rng rng(13);
  int explored = 0;
  for (int i = 0; i < 10000; ++i) explored += select_action(s, 0.1, rng).explored;
  EXPECT_NEAR(explored / 10000.0, 0.10, 0.02);
  EXPECT_THROW(select_action(s, 1.5, rng), ArgumentError);
}

TEST(Value, ZeroWeightsGiveBias) {
  PolicyParams p = fresh();
  for (auto& l : p.fc_w.layers()) {
    l.weight.value.fill(0.0);
    l.bias.value.fill(0.0);
  }
  p.fc_w.layers().back().bias.value[0] = -0.75;
  Rng rng(2);
  for (int i = 0; i < 5; ++i) {
    Vec m(8), q(6);
    for (double& x : m) x = rng.normal();
    for (double& x : q) x = rng.normal();
    EXPECT_EQ(value(p, m, q), -0.75);
  }
}

TEST(Value, Deterministic) {
  PolicyParams p = fresh();
  Vec m(8, 0.3), q(6, -0.2);
  EXPECT_EQ(value(p, m, q), value(p, m, q));
}

TEST(Policy, SaveLoadBitExact) {
  auto dir = std::filesystem::temp_directory_path() / "momentnav_test_agent";
  std::filesystem::create_directories(dir);
  PolicyParams p = fresh(21);
  save_policy(p, dir / "p.ckpt", json{{"tag", 1}});
  json meta;
  PolicyParams q = load_policy(dir / "p.ckpt", &meta);
  EXPECT_EQ(meta["tag"], 1);
  auto a = p.params();
  auto b = q.params();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i]->name, b[i]->name);
    EXPECT_EQ(a[i]->value, b[i]->value);
  }
  EXPECT_EQ(q.config.hidden_dim, 9u);
}

TEST(Policy, InitDeterministic) {
  PolicyParams a = fresh(3), b = fresh(3), c = fresh(4);
  EXPECT_EQ(a.fc_m.layers()[0].weight.value, b.fc_m.layers()[0].weight.value);
  EXPECT_NE(a.fc_m.layers()[0].weight.value, c.fc_m.layers()[0].weight.value);
}
