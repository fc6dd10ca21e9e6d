#include "momentnav/gradsuite.hpp"

#include <chrono>
#include <sstream>

#include "momentnav/agent.hpp"
#include "momentnav/environment.hpp"
#include "momentnav/trainer.hpp"

namespace momentnav {

namespace {

Param random_param(const std::string& name, std::vector<std::size_t> shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = rng.normal(0.0, scale);
  return Param(name, std::move(t));
}

std::size_t dim(Rng& rng, std::size_t lo, std::size_t hi) { return lo + rng.uniform_int(hi - lo + 1); }

double weighted_sum(std::span<const double> y, std::span<const double> c) { return dot(y, c); }

GradcheckReport check_fc(Rng& rng, const GradcheckOptions& o, std::string& detail) {
  const std::size_t depth = dim(rng, 1, 3);
  std::vector<std::size_t> widths{dim(rng, 1, 7)};
  for (std::size_t i = 0; i < depth; ++i) widths.push_back(dim(rng, 1, 7));
  FcNet net("fc", widths);
  Param x;
  Vec c(widths.back());
  // redraw until no ReLU input sits on the kink
  for (int attempt = 0; attempt < 100; ++attempt) {
    net.init(rng);
    for (auto& l : net.layers()) {
      for (auto& b : l.bias.value.data()) b = rng.normal(0.0, 0.3);
    }
    x = random_param("x", {widths.front()}, rng);
    FcCache cache;
    net.forward(x.value.data(), &cache);
    bool ok = true;
    for (std::size_t l = 0; l + 1 < cache.pre.size(); ++l) {
      for (double v : cache.pre[l]) ok = ok && std::abs(v) > 1e-3;
    }
    if (ok) break;
  }
  for (auto& v : c) v = rng.normal();
  std::ostringstream d;
  d << "widths";
  for (auto w : widths) d << ' ' << w;
  detail = d.str();
  ParamRefs params;
  net.collect(params);
  params.push_back(&x);
  auto loss = [&](bool grad) {
    FcCache cache;
    const Vec y = net.forward(x.value.data(), &cache);
    if (grad) {
      const Vec dx = net.backward(cache, c);
      axpy(1.0, dx, x.grad.data());
    }
    return weighted_sum(y, c);
  };
  return gradcheck(loss, params, o);
}

GradcheckReport check_gru(Rng& rng, const GradcheckOptions& o, std::string& detail) {
  const std::size_t in = dim(rng, 1, 6), hid = dim(rng, 1, 6);
  GruCell cell("gru", in, hid);
  cell.init(rng);
  for (Param* p : ParamRefs{&cell.b_z, &cell.b_r, &cell.b_h}) {
    for (auto& v : p->value.data()) v = rng.normal(0.0, 0.5);
  }
  Param x = random_param("x", {in}, rng);
  Param h = random_param("h", {hid}, rng, 0.7);
  Vec c(hid);
  for (auto& v : c) v = rng.normal();
  detail = "in " + std::to_string(in) + " hidden " + std::to_string(hid);
  ParamRefs params;
  cell.collect(params);
  params.push_back(&x);
  params.push_back(&h);
  auto loss = [&](bool grad) {
    GruCache cache;
    const Vec y = cell.forward(x.value.data(), h.value.data(), &cache);
    if (grad) {
      const GruGrads g = cell.backward(cache, c);
      axpy(1.0, g.dx, x.grad.data());
      axpy(1.0, g.dh, h.grad.data());
    }
    return weighted_sum(y, c);
  };
  return gradcheck(loss, params, o);
}

GradcheckReport check_cosine(Rng& rng, const GradcheckOptions& o, std::string& detail) {
  const std::size_t n = dim(rng, 1, 10);
  Param a = random_param("a", {n}, rng, rng.uniform(0.1, 3.0));
  Param b = random_param("b", {n}, rng, rng.uniform(0.1, 3.0));
  const double up = rng.normal();
  detail = "dim " + std::to_string(n);
  ParamRefs params{&a, &b};
  auto loss = [&](bool grad) {
    const double v = cosine(a.value.data(), b.value.data());
    if (grad) {
      auto [da, db] = cosine_backward(a.value.data(), b.value.data(), up);
      axpy(1.0, da, a.grad.data());
      axpy(1.0, db, b.grad.data());
    }
    return up * v;
  };
  return gradcheck(loss, params, o);
}

GradcheckReport check_triplet(Rng& rng, const GradcheckOptions& o, std::string& detail) {
  const std::size_t n = dim(rng, 2, 12);
  const std::size_t pos = rng.uniform_int(n);
  const double margin = rng.uniform(0.05, 0.5);
  const bool printed = rng.bernoulli(0.5);
  Param s("scores", Tensor({n}));
  for (int attempt = 0; attempt < 100; ++attempt) {
    for (auto& v : s.value.data()) v = rng.uniform(-1.0, 1.0);
    bool ok = true;
    for (std::size_t i = 0; i < n; ++i) {
      if (i == pos) continue;
      const double arg = printed ? margin + s.value[pos] - s.value[i] : margin - s.value[pos] + s.value[i];
      ok = ok && std::abs(arg) > 1e-3;
    }
    if (ok) break;
  }
  detail = "window " + std::to_string(n) + (printed ? " as-printed" : "");
  ParamRefs params{&s};
  auto loss = [&](bool grad) {
    const ScoreLoss l = triplet_loss(s.value.data(), pos, margin, printed);
    if (grad) axpy(1.0, l.dscores, s.grad.data());
    return l.loss;
  };
  return gradcheck(loss, params, o);
}

GradcheckReport check_policy(Rng& rng, const GradcheckOptions& o, std::string& detail) {
  const std::size_t n = dim(rng, 1, 12);
  const std::size_t a = rng.uniform_int(n);
  const double adv = rng.normal();
  const double tau = rng.uniform(0.05, 2.0);
  Param s = random_param("scores", {n}, rng, 0.5);
  detail = "window " + std::to_string(n) + " tau " + std::to_string(tau);
  ParamRefs params{&s};
  auto loss = [&](bool grad) {
    const ScoreLoss l = policy_loss(s.value.data(), a, adv, tau);
    if (grad) axpy(1.0, l.dscores, s.grad.data());
    return l.loss;
  };
  return gradcheck(loss, params, o);
}

GradcheckReport check_value(Rng& rng, const GradcheckOptions& o, std::string& detail) {
  Param q = random_param("q", {1}, rng, 2.0);
  const double ret = rng.normal(0.0, 2.0);
  detail = "return " + std::to_string(ret);
  ParamRefs params{&q};
  auto loss = [&](bool grad) {
    double dq = 0.0;
    const double l = value_loss(q.value[0], ret, &dq);
    if (grad) q.grad[0] += dq;
    return l;
  };
  return gradcheck(loss, params, o);
}

AgentConfig random_agent(Rng& rng, std::uint32_t feature_dim, std::uint32_t vocab) {
  AgentConfig a;
  a.feature_dim = feature_dim;
  a.vocab_size = vocab;
  a.query_dim = static_cast<std::uint32_t>(dim(rng, 2, 7));
  a.feedback_dim = static_cast<std::uint32_t>(dim(rng, 2, 6));
  a.joint_dim = static_cast<std::uint32_t>(dim(rng, 2, 7));
  a.hidden_dim = static_cast<std::uint32_t>(dim(rng, 2, 8));
  a.fc_layers = static_cast<std::uint32_t>(dim(rng, 1, 3));
  a.temperature = rng.uniform(0.1, 1.0);
  a.init_seed = rng.next_u64();
  return a;
}

// Zero biases can leave an FC output at exactly 0, where cosine has no gradient.
void jitter_biases(PolicyParams& p, Rng& rng) {
  for (Param* q : p.params()) {
    if (q->value.shape().size() != 1) continue;
    for (auto& v : q->value.data()) v += rng.normal(0.0, 0.1);
  }
}

// Query encoder plus a chain of feedback updates.
GradcheckReport check_query(Rng& rng, const GradcheckOptions& o, std::string& detail) {
  const auto vocab = static_cast<std::uint32_t>(dim(rng, 3, 12));
  AgentConfig ac = random_agent(rng, 4, vocab);
  PolicyParams p(ac);
  p.init(rng);
  jitter_biases(p, rng);
  QuerySpec q;
  const std::size_t bag = dim(rng, 1, vocab);
  for (std::size_t i = 0; i < bag; ++i) q.concept_bag.push_back({static_cast<ConceptId>(i), rng.uniform(0.2, 1.0)});
  std::vector<std::vector<Feedback>> rounds(dim(rng, 1, 3));
  for (auto& r : rounds) {
    const std::size_t n = dim(rng, 0, 3);
    for (std::size_t i = 0; i < n; ++i) {
      r.push_back({static_cast<ConceptId>(rng.uniform_int(vocab)), rng.bernoulli(0.5) ? 1 : -1});
    }
  }
  Vec c(ac.query_dim);
  for (auto& v : c) v = rng.normal();
  detail = "vocab " + std::to_string(vocab) + " rounds " + std::to_string(rounds.size());
  auto loss = [&](bool grad) {
    QueryEncodeCache enc;
    const Vec q0 = encode_query(p, q, &enc);
    std::vector<QueryUpdateCache> caches(rounds.size());
    Vec qt = q0;
    for (std::size_t i = 0; i < rounds.size(); ++i) qt = update_query(p, qt, q0, rounds[i], &caches[i]);
    if (grad) {
      Vec dq = c;
      Vec dq0(ac.query_dim, 0.0);
      for (std::size_t i = rounds.size(); i-- > 0;) {
        const QueryUpdateGrads g = update_query_backward(p, caches[i], dq);
        axpy(1.0, g.dq0, dq0);
        dq = g.dq_t;
      }
      axpy(1.0, dq, dq0);
      encode_query_backward(p, q, enc, dq0);
    }
    return dot(qt, c);
  };
  return gradcheck(loss, p.params(), o);
}

struct ObjectiveFixture {
  Corpus corpus;
  NavGraph graph;
  std::vector<QuerySpec> queries;
};

ObjectiveFixture make_fixture(std::uint64_t seed) {
  CorpusConfig cc;
  cc.n_videos = 12;
  cc.clips_per_video = 6;
  cc.vocab_size = 40;
  cc.concepts_per_clip = 12;
  cc.feature_dim = 8;
  cc.topic_concepts = 8;
  cc.seed = seed;
  ObjectiveFixture f;
  f.corpus = gen_corpus(cc);
  f.graph = build_graph(f.corpus, GraphBuildConfig{});
  f.queries = gen_queries(f.corpus, 8, derive_seed(seed, {1}));
  return f;
}

GradcheckReport check_objective(const ObjectiveFixture& fx, TrainMode mode, Rng& rng, const GradcheckOptions& o,
                                std::string& detail) {
  AgentConfig ac = random_agent(rng, fx.corpus.config().feature_dim,
                                static_cast<std::uint32_t>(fx.corpus.vocab().size()));
  PolicyParams p(ac);
  p.init(rng);
  jitter_biases(p, rng);
  LossConfig lc;
  lc.margin = rng.uniform(0.05, 0.3);
  lc.lambda1 = rng.uniform(0.5, 1.5);
  lc.lambda2 = rng.uniform(0.05, 1.0);
  lc.lambda3 = rng.uniform(0.05, 1.0);
  lc.value_to_encoders = true;  // the detached variant is not a true gradient
  RolloutOptions ro;
  ro.k = static_cast<int>(dim(rng, 1, 3));
  ro.agent_epsilon = 0.3;
  ro.compute_values = true;
  ro.use_feedback = mode != TrainMode::no_feedback;
  ro.bootstrap = rng.bernoulli(0.5) ? BootstrapState::post : BootstrapState::pre;
  ro.reward.t_max = static_cast<int>(dim(rng, 2, 7));

  DistanceOracle oracle(fx.graph);
  std::vector<Trajectory> trajs;
  std::vector<const QuerySpec*> qs;
  const std::size_t batch = dim(rng, 2, 5);
  for (std::size_t i = 0; i < fx.queries.size() && trajs.size() < batch; ++i) {
    const QuerySpec& q = fx.queries[(i + rng.uniform_int(fx.queries.size())) % fx.queries.size()];
    Rng r(rng.next_u64());
    const auto m0 = sample_start(oracle, fx.graph, q.target, static_cast<int>(dim(rng, 1, 3)), r);
    if (!m0) continue;
    trajs.push_back(rollout_episode(&p, fx.graph, fx.corpus, q, *m0, ro, r, oracle));
    qs.push_back(&q);
  }
  detail = "batch " + std::to_string(trajs.size()) + " k " + std::to_string(ro.k) + " fc_layers " +
           std::to_string(ac.fc_layers);
  auto loss = [&](bool grad) { return batch_objective(p, trajs, qs, fx.corpus, lc, mode, grad).total; };
  GradcheckOptions capped = o;
  capped.max_entries_per_param = 24;
  return gradcheck(loss, p.params(), capped);
}

}  // namespace

GradSuiteReport run_gradcheck_suite(std::size_t n_configs, std::uint64_t seed, double step) {
  const auto t0 = std::chrono::steady_clock::now();
  GradSuiteReport out;
  const ObjectiveFixture fx = make_fixture(derive_seed(seed, {0xf1}));
  static const char* kinds[] = {"fc", "gru", "cosine", "triplet", "policy", "value", "query",
                                "objective/full", "objective/imitation", "objective/no_feedback"};
  constexpr std::size_t n_kinds = std::size(kinds);
  for (std::size_t i = 0; i < n_configs; ++i) {
    Rng rng(derive_seed(seed, {i}));
    GradcheckOptions o;
    o.step = step;
    o.seed = rng.next_u64();
    GradSuiteCase c;
    c.index = i;
    c.kind = kinds[i % n_kinds];
    switch (i % n_kinds) {
      case 0: c.report = check_fc(rng, o, c.detail); break;
      case 1: c.report = check_gru(rng, o, c.detail); break;
      case 2: c.report = check_cosine(rng, o, c.detail); break;
      case 3: c.report = check_triplet(rng, o, c.detail); break;
      case 4: c.report = check_policy(rng, o, c.detail); break;
      case 5: c.report = check_value(rng, o, c.detail); break;
      case 6: c.report = check_query(rng, o, c.detail); break;
      case 7: c.report = check_objective(fx, TrainMode::full, rng, o, c.detail); break;
      case 8: c.report = check_objective(fx, TrainMode::imitation, rng, o, c.detail); break;
      default: c.report = check_objective(fx, TrainMode::no_feedback, rng, o, c.detail); break;
    }
    out.max_rel_error_fixed_floor = std::max(out.max_rel_error_fixed_floor, c.report.max_rel_error_fixed_floor);
    if (out.cases.empty() || c.report.max_rel_error > out.max_rel_error) {
      out.max_rel_error = c.report.max_rel_error;
      out.worst_case = i;
    }
    out.cases.push_back(std::move(c));
  }
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

json to_json_value(const GradSuiteReport& r) {
  json cases = json::array();
  for (const auto& c : r.cases) {
    cases.push_back({{"index", c.index},
                     {"kind", c.kind},
                     {"detail", c.detail},
                     {"max_rel_error", c.report.max_rel_error},
                     {"max_rel_error_fixed_floor", c.report.max_rel_error_fixed_floor},
                     {"worst_param", c.report.worst_param},
                     {"worst_index", c.report.worst_index},
                     {"entries", c.report.entries_checked}});
  }
  return {{"configs", r.cases.size()},
          {"max_rel_error", r.max_rel_error},
          {"max_rel_error_fixed_floor", r.max_rel_error_fixed_floor},
          {"worst_case", r.worst_case},
          {"seconds", r.seconds},
          {"cases", cases}};
}

}  // namespace momentnav
