#include "momentnav/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "momentnav/checkpoint.hpp"
#include "momentnav/errors.hpp"

namespace momentnav {

std::string to_string(TrainMode m) {
  switch (m) {
    case TrainMode::full: return "full";
    case TrainMode::imitation: return "imitation";
    case TrainMode::no_feedback: return "no_feedback";
  }
  return "unknown";
}

TrainMode train_mode_from_string(const std::string& s) {
  if (s == "full") return TrainMode::full;
  if (s == "imitation") return TrainMode::imitation;
  if (s == "no_feedback" || s == "no-feedback") return TrainMode::no_feedback;
  throw ConfigError("unknown training mode '" + s + "'");
}

void LossConfig::validate() const {
  if (!(margin >= 0.0)) throw ConfigError("loss: margin must be >= 0");
  if (!(lambda1 >= 0.0 && lambda2 >= 0.0 && lambda3 >= 0.0)) throw ConfigError("loss: lambdas must be >= 0");
}

void to_json(json& j, const LossConfig& c) {
  j = json{{"margin", c.margin},
           {"lambda1", c.lambda1},
           {"lambda2", c.lambda2},
           {"lambda3", c.lambda3},
           {"triplet_as_printed", c.triplet_as_printed},
           {"value_to_encoders", c.value_to_encoders}};
}

void from_json(const json& j, LossConfig& c) {
  const LossConfig d;
  c.margin = j.value("margin", d.margin);
  c.lambda1 = j.value("lambda1", d.lambda1);
  c.lambda2 = j.value("lambda2", d.lambda2);
  c.lambda3 = j.value("lambda3", d.lambda3);
  c.triplet_as_printed = j.value("triplet_as_printed", d.triplet_as_printed);
  c.value_to_encoders = j.value("value_to_encoders", d.value_to_encoders);
}

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("train: epochs must be >= 0");
  if (episodes_per_query < 1 || batch_size < 1) throw ConfigError("train: counts must be positive");
  if (!(lr > 0.0)) throw ConfigError("train: lr must be positive");
  if (!(clip > 0.0)) throw ConfigError("train: clip must be positive");
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ConfigError("train: epsilon outside [0,1]");
  if (d0_min < 1 || d0_max < d0_min) throw ConfigError("train: need 1 <= d0_min <= d0_max");
  loss.validate();
  rollout.validate();
  agent.validate();
}

RolloutOptions TrainConfig::sampling_options() const {
  RolloutOptions o = rollout;
  o.policy = PolicyKind::learned;
  o.agent_epsilon = epsilon;
  o.use_feedback = mode != TrainMode::no_feedback;
  o.compute_values = mode == TrainMode::full;
  return o;
}

void to_json(json& j, const TrainConfig& c) {
  j = json{{"mode", to_string(c.mode)},
           {"epochs", c.epochs},
           {"episodes_per_query", c.episodes_per_query},
           {"batch_size", c.batch_size},
           {"lr", c.lr},
           {"clip", c.clip},
           {"epsilon", c.epsilon},
           {"seed", c.seed},
           {"d0_min", c.d0_min},
           {"d0_max", c.d0_max},
           {"loss", c.loss},
           {"rollout", c.rollout},
           {"agent", c.agent}};
}

void from_json(const json& j, TrainConfig& c) {
  const TrainConfig d;
  c.mode = train_mode_from_string(j.value("mode", to_string(d.mode)));
  c.epochs = j.value("epochs", d.epochs);
  c.episodes_per_query = j.value("episodes_per_query", d.episodes_per_query);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.lr = j.value("lr", d.lr);
  c.clip = j.value("clip", d.clip);
  c.epsilon = j.value("epsilon", d.epsilon);
  c.seed = j.value("seed", d.seed);
  c.d0_min = j.value("d0_min", d.d0_min);
  c.d0_max = j.value("d0_max", d.d0_max);
  c.loss = j.value("loss", d.loss);
  c.rollout = j.value("rollout", d.rollout);
  c.agent = j.value("agent", d.agent);
}

// ---------------------------------------------------------------------------
// Loss terms

ScoreLoss triplet_loss(std::span<const double> scores, std::size_t positive, double margin, bool as_printed) {
  if (positive >= scores.size()) throw ArgumentError("triplet positive index out of range");
  ScoreLoss out;
  out.dscores.assign(scores.size(), 0.0);
  const std::size_t negatives = scores.size() - 1;
  if (negatives == 0) return out;
  const double scale = 1.0 / static_cast<double>(negatives);
  const double sign = as_printed ? 1.0 : -1.0;  // coefficient on u+
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (i == positive) continue;
    const double h = margin + sign * scores[positive] - sign * scores[i];
    if (h > 0.0) {
      out.loss += scale * h;
      out.dscores[positive] += scale * sign;
      out.dscores[i] -= scale * sign;
    }
  }
  return out;
}

ScoreLoss policy_loss(std::span<const double> scores, std::size_t action, double advantage, double temperature) {
  if (action >= scores.size()) throw ArgumentError("policy action index out of range");
  Vec logits(scores.begin(), scores.end());
  for (double& l : logits) l /= temperature;
  const Vec p = softmax(logits);
  ScoreLoss out;
  out.loss = -std::log(p[action]) * advantage;
  out.dscores.resize(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    out.dscores[i] = advantage * (p[i] - (i == action ? 1.0 : 0.0)) / temperature;
  }
  return out;
}

double value_loss(double q, double ret, double* dq) {
  const double diff = q - ret;
  if (dq) *dq = 2.0 * diff;
  return diff * diff;
}

LossTerms& LossTerms::operator+=(const LossTerms& o) {
  triplet += o.triplet;
  policy += o.policy;
  value += o.value;
  total += o.total;
  steps += o.steps;
  triplet_steps += o.triplet_steps;
  return *this;
}

// ---------------------------------------------------------------------------
// Replay

LossTerms replay_trajectory(PolicyParams& params, const Trajectory& traj, const QuerySpec& query,
                            MomentEmbeddings& embeddings, const LossConfig& loss,
                            TrainMode mode, double weight, bool backward) {
  LossTerms terms;
  const std::size_t n = traj.steps.size();
  if (n == 0) return terms;
  const std::size_t dj = params.config.joint_dim;
  const bool full = mode == TrainMode::full;

  QueryEncodeCache enc;
  const Vec q0 = encode_query(params, query, &enc);
  std::vector<Vec> qs(n);
  std::vector<QueryUpdateCache> updates(n);
  qs[0] = q0;
  for (std::size_t t = 0; t + 1 < n; ++t) {
    const auto& fb = mode == TrainMode::no_feedback ? std::vector<Feedback>{} : traj.steps[t].feedback;
    qs[t + 1] = update_query(params, qs[t], q0, fb, &updates[t]);
  }

  std::vector<Vec> dq(n);
  for (std::size_t t = 0; t < n; ++t) {
    const TrajectoryStep& step = traj.steps[t];
    const std::size_t w = step.window.size();
    FcCache q_cache;
    const Vec zq = params.fc_q.forward(qs[t], &q_cache);
    Vec scores(w);
    for (std::size_t i = 0; i < w; ++i) scores[i] = cosine(embeddings.get(step.window[i]), zq);

    Vec dscores(w, 0.0);
    std::optional<std::size_t> positive;
    if (mode == TrainMode::imitation) {
      positive = step.oracle_index;
    } else {
      const auto it = std::lower_bound(step.window.begin(), step.window.end(), traj.target);
      if (it != step.window.end() && *it == traj.target) positive = static_cast<std::size_t>(it - step.window.begin());
    }
    if (positive && w > 1 && loss.lambda1 > 0.0) {
      const ScoreLoss tl = triplet_loss(scores, *positive, loss.margin, loss.triplet_as_printed);
      terms.triplet += tl.loss;
      ++terms.triplet_steps;
      axpy(loss.lambda1, tl.dscores, dscores);
    }

    Vec dzq(dj, 0.0);
    if (full) {
      const ScoreLoss pl = policy_loss(scores, step.action_index, step.advantage, params.config.temperature);
      terms.policy += pl.loss;
      axpy(loss.lambda2, pl.dscores, dscores);

      FcCache w_cache;
      const Vec& zm = embeddings.get(step.current);
      const double qv = value_from_projections(params, zm, zq, &w_cache);
      double dqv = 0.0;
      terms.value += value_loss(qv, step.ret, &dqv);
      if (backward && loss.lambda3 > 0.0) {
        const Vec up{weight * loss.lambda3 * dqv};
        const Vec djoint = params.fc_w.backward(w_cache, up);
        if (loss.value_to_encoders) {
          embeddings.add_grad(step.current, std::span<const double>(djoint).first(dj));
          axpy(1.0, std::span<const double>(djoint).subspan(dj, dj), dzq);
        }
      }
    }
    ++terms.steps;

    if (!backward) continue;
    for (std::size_t i = 0; i < w; ++i) {
      if (dscores[i] == 0.0) continue;
      const Vec& zm = embeddings.get(step.window[i]);
      const auto [dm, dz] = cosine_backward(zm, zq, weight * dscores[i]);
      embeddings.add_grad(step.window[i], dm);
      axpy(1.0, dz, dzq);
    }
    dq[t] = params.fc_q.backward(q_cache, dzq);
  }
  terms.total = loss.lambda1 * terms.triplet + loss.lambda2 * terms.policy + loss.lambda3 * terms.value;
  if (!backward) return terms;

  Vec dq0(q0.size(), 0.0);
  for (std::size_t t = n; t-- > 1;) {
    const QueryUpdateGrads g = update_query_backward(params, updates[t - 1], dq[t]);
    axpy(1.0, g.dq_t, dq[t - 1]);
    axpy(1.0, g.dq0, dq0);
  }
  axpy(1.0, dq[0], dq0);
  encode_query_backward(params, query, enc, dq0);
  return terms;
}

LossTerms batch_objective(PolicyParams& params, std::span<const Trajectory> trajs,
                          std::span<const QuerySpec* const> queries, const Corpus& corpus,
                          const LossConfig& loss, TrainMode mode, bool backward) {
  if (trajs.size() != queries.size()) throw ArgumentError("one query per trajectory expected");
  MomentEmbeddings embeddings(params, corpus);
  LossTerms sum;
  if (trajs.empty()) return sum;
  const double weight = 1.0 / static_cast<double>(trajs.size());
  for (std::size_t i = 0; i < trajs.size(); ++i) {
    sum += replay_trajectory(params, trajs[i], *queries[i], embeddings, loss, mode, weight, backward);
  }
  if (backward) embeddings.backward(params);
  sum.triplet *= weight;
  sum.policy *= weight;
  sum.value *= weight;
  sum.total *= weight;
  return sum;
}

// ---------------------------------------------------------------------------
// Training loop

json to_json_value(const TrainReport& r, bool include_timing) {
  json epochs = json::array();
  for (const auto& e : r.epochs) {
    json row{{"epoch", e.epoch},
             {"loss_triplet", e.loss.triplet},
             {"loss_policy", e.loss.policy},
             {"loss_value", e.loss.value},
             {"loss_total", e.loss.total},
             {"mean_return", e.mean_return},
             {"train_recall", e.train_recall},
             {"episodes", e.episodes},
             {"updates", e.updates},
             {"grad_norm", e.grad_norm}};
    if (include_timing) row["wall_seconds"] = e.wall_seconds;
    epochs.push_back(row);
  }
  json out{{"mode", to_string(r.mode)}, {"epochs", epochs}};
  if (include_timing) out["wall_seconds"] = r.wall_seconds;
  return out;
}

TrainResult train(const Corpus& corpus, const NavGraph& graph, std::span<const QuerySpec> queries,
                  const TrainConfig& cfg_in) {
  TrainConfig cfg = cfg_in;
  cfg.agent.feature_dim = static_cast<std::uint32_t>(corpus.config().feature_dim);
  cfg.agent.vocab_size = static_cast<std::uint32_t>(corpus.vocab().size());
  cfg.validate();
  if (graph.size() != corpus.size()) throw ArgumentError("graph and corpus sizes differ");
  if (queries.empty() && cfg.epochs > 0) throw ArgumentError("training needs at least one query");

  using clock = std::chrono::steady_clock;
  const auto start = clock::now();

  PolicyParams params(cfg.agent);
  {
    Rng init_rng(derive_seed(cfg.seed, {cfg.agent.init_seed}));
    params.init(init_rng);
  }
  TrainReport report;
  report.mode = cfg.mode;

  const RolloutOptions opts = cfg.sampling_options();
  DistanceOracle oracle(graph);
  const ParamRefs refs = params.params();

  std::vector<std::size_t> order(queries.size());
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto epoch_start = clock::now();
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng(derive_seed(cfg.seed, {0x5eed, static_cast<std::uint64_t>(epoch)}));
    shuffle_rng.shuffle(std::span<std::size_t>(order));

    EpochReport er;
    er.epoch = epoch;
    double return_sum = 0.0;
    std::size_t successes = 0;
    for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), b + static_cast<std::size_t>(cfg.batch_size));
      std::vector<Trajectory> trajs;
      std::vector<const QuerySpec*> batch_queries;
      {
        MomentEmbeddings embeddings(params, corpus);
        for (std::size_t qi = b; qi < end; ++qi) {
          const QuerySpec& q = queries[order[qi]];
          for (int e = 0; e < cfg.episodes_per_query; ++e) {
            Rng rng(derive_seed(cfg.seed, {static_cast<std::uint64_t>(epoch), q.id, static_cast<std::uint64_t>(e)}));
            const int span = cfg.d0_max - cfg.d0_min + 1;
            int d0 = cfg.d0_min + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(span)));
            std::optional<MomentId> m0;
            for (; d0 >= cfg.d0_min && !m0; --d0) m0 = sample_start(oracle, graph, q.target, d0, rng);
            if (!m0) continue;
            trajs.push_back(rollout_episode(&params, graph, corpus, q, *m0, opts, rng, oracle, &embeddings));
            batch_queries.push_back(&q);
          }
        }
      }
      if (trajs.empty()) continue;
      for (const auto& t : trajs) {
        if (!t.steps.empty()) return_sum += t.steps.front().ret;
        if (t.status == SessionStatus::success) ++successes;
      }
      er.episodes += trajs.size();

      const LossTerms terms = batch_objective(params, trajs, batch_queries, corpus, cfg.loss, cfg.mode, true);
      if (!std::isfinite(terms.total)) {
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(b) +
                            " (triplet " + std::to_string(terms.triplet) + ", policy " +
                            std::to_string(terms.policy) + ", value " + std::to_string(terms.value) + ")");
      }
      er.grad_norm += sgd_step(refs, cfg.lr, cfg.clip);
      er.loss += terms;
      ++er.updates;
    }
    if (er.updates > 0) {
      const double inv = 1.0 / static_cast<double>(er.updates);
      er.loss.triplet *= inv;
      er.loss.policy *= inv;
      er.loss.value *= inv;
      er.loss.total *= inv;
      er.grad_norm *= inv;
    }
    if (er.episodes > 0) {
      er.mean_return = return_sum / static_cast<double>(er.episodes);
      er.train_recall = static_cast<double>(successes) / static_cast<double>(er.episodes);
    }
    er.wall_seconds = std::chrono::duration<double>(clock::now() - epoch_start).count();
    report.epochs.push_back(er);
  }
  report.wall_seconds = std::chrono::duration<double>(clock::now() - start).count();
  return TrainResult{std::move(params), std::move(report)};
}

json checkpoint_meta(const TrainConfig& cfg, const Corpus& corpus, const NavGraph& graph) {
  return json{{"train", cfg},
              {"corpus_hash", corpus_fingerprint(corpus)},
              {"graph_hash", graph_fingerprint(graph)}};
}

}  // namespace momentnav
