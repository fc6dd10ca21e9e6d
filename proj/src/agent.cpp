#include "momentnav/agent.hpp"

#include <algorithm>
#include <cmath>

#include "momentnav/checkpoint.hpp"
#include "momentnav/errors.hpp"

namespace momentnav {

void AgentConfig::validate() const {
  if (feature_dim == 0 || vocab_size == 0 || query_dim == 0 || feedback_dim == 0 || joint_dim == 0 ||
      hidden_dim == 0) {
    throw ConfigError("agent config: dimensions must be positive");
  }
  if (fc_layers < 1) throw ConfigError("agent config: fc_layers must be >= 1");
  if (!(temperature > 0.0)) throw ConfigError("agent config: temperature must be positive");
}

std::vector<std::size_t> AgentConfig::widths(std::size_t in, std::size_t out) const {
  std::vector<std::size_t> w{in};
  for (std::uint32_t i = 1; i < fc_layers; ++i) w.push_back(hidden_dim);
  w.push_back(out);
  return w;
}

void to_json(json& j, const AgentConfig& c) {
  j = json{{"feature_dim", c.feature_dim},   {"vocab_size", c.vocab_size}, {"query_dim", c.query_dim},
           {"feedback_dim", c.feedback_dim}, {"joint_dim", c.joint_dim},   {"hidden_dim", c.hidden_dim},
           {"fc_layers", c.fc_layers},       {"temperature", c.temperature}, {"init_seed", c.init_seed}};
}

void from_json(const json& j, AgentConfig& c) {
  const AgentConfig d;
  c.feature_dim = j.value("feature_dim", d.feature_dim);
  c.vocab_size = j.value("vocab_size", d.vocab_size);
  c.query_dim = j.value("query_dim", d.query_dim);
  c.feedback_dim = j.value("feedback_dim", d.feedback_dim);
  c.joint_dim = j.value("joint_dim", d.joint_dim);
  c.hidden_dim = j.value("hidden_dim", d.hidden_dim);
  c.fc_layers = j.value("fc_layers", d.fc_layers);
  c.temperature = j.value("temperature", d.temperature);
  c.init_seed = j.value("init_seed", d.init_seed);
}

// ---------------------------------------------------------------------------
// PolicyParams

PolicyParams::PolicyParams(const AgentConfig& cfg)
    : config(cfg),
      fc_m((cfg.validate(), "FC_m"), cfg.widths(cfg.feature_dim, cfg.joint_dim)),
      fc_q("FC_q", cfg.widths(cfg.query_dim, cfg.joint_dim)),
      fc_w("FC_w", cfg.widths(2 * std::size_t{cfg.joint_dim}, 1)),
      gru("gru", cfg.feedback_dim, cfg.query_dim),
      W1("feedback.W1", Tensor({cfg.feedback_dim, cfg.vocab_size})),
      b1("feedback.b1", Tensor({cfg.feedback_dim})),
      concept_embed("query.concept_embed", Tensor({cfg.vocab_size, cfg.query_dim})),
      query_proj("query.proj", cfg.query_dim, cfg.query_dim) {}

void PolicyParams::init(Rng& rng) {
  fc_m.init(rng);
  fc_q.init(rng);
  fc_w.init(rng);
  gru.init(rng);
  const double w1_scale = 1.0 / std::sqrt(static_cast<double>(config.feedback_dim));
  for (double& w : W1.value.data()) w = rng.normal() * w1_scale;
  b1.value.fill(0.0);
  const double embed_scale = 1.0 / std::sqrt(static_cast<double>(config.query_dim));
  for (double& w : concept_embed.value.data()) w = rng.normal() * embed_scale;
  query_proj.init(rng);
}

ParamRefs PolicyParams::params() {
  ParamRefs out;
  fc_m.collect(out);
  fc_q.collect(out);
  fc_w.collect(out);
  gru.collect(out);
  out.push_back(&W1);
  out.push_back(&b1);
  out.push_back(&concept_embed);
  query_proj.collect(out);
  return out;
}

std::vector<const Param*> PolicyParams::params() const {
  const auto refs = const_cast<PolicyParams*>(this)->params();
  return {refs.begin(), refs.end()};
}

void PolicyParams::zero_grad() {
  for (Param* p : params()) p->zero_grad();
}

void save_policy(const PolicyParams& params, const std::filesystem::path& path, const json& meta) {
  json full = meta;
  full["agent"] = params.config;
  const auto refs = params.params();
  save_checkpoint(path, refs, full);
}

PolicyParams load_policy(const std::filesystem::path& path, json* meta_out) {
  const json meta = read_checkpoint_meta(path);
  if (!meta.contains("agent")) throw ValidationError(path.string() + ": checkpoint has no agent config");
  PolicyParams params(meta.at("agent").get<AgentConfig>());
  load_checkpoint(path, params.params());
  if (meta_out) *meta_out = meta;
  return params;
}

// ---------------------------------------------------------------------------
// Query encoding / update

Vec encode_query(const PolicyParams& p, const QuerySpec& q, QueryEncodeCache* cache) {
  const std::size_t dq = p.config.query_dim;
  Vec pooled(dq, 0.0);
  for (const auto& c : q.concept_bag) {
    if (c.concept_id >= p.config.vocab_size) {
      throw ArgumentError("unknown concept id " + std::to_string(c.concept_id));
    }
    axpy(c.weight, p.concept_embed.value.data().subspan(std::size_t{c.concept_id} * dq, dq), pooled);
  }
  Vec q0 = p.query_proj.forward(pooled);
  if (cache) {
    cache->pooled = std::move(pooled);
    cache->ready = true;
  }
  return q0;
}

void encode_query_backward(PolicyParams& p, const QuerySpec& q, const QueryEncodeCache& cache,
                           std::span<const double> dq0) {
  if (!cache.ready) throw StateError("encode_query backward before forward");
  const std::size_t dq = p.config.query_dim;
  const Vec dpooled = p.query_proj.backward(cache.pooled, dq0);
  for (const auto& c : q.concept_bag) {
    axpy(c.weight, dpooled, p.concept_embed.grad.data().subspan(std::size_t{c.concept_id} * dq, dq));
  }
}

Vec embed_feedback(const PolicyParams& p, const Feedback& fb) {
  if (fb.concept_id >= p.config.vocab_size) throw ArgumentError("unknown concept id " + std::to_string(fb.concept_id));
  if (fb.sign != 1 && fb.sign != -1) throw ArgumentError("feedback sign must be +1 or -1");
  const std::size_t df = p.config.feedback_dim;
  Vec f(p.b1.value.data().begin(), p.b1.value.data().end());
  for (std::size_t i = 0; i < df; ++i) f[i] += fb.sign * p.W1.value(i, fb.concept_id);
  return f;
}

Vec update_query(const PolicyParams& p, std::span<const double> q_t, std::span<const double> q0,
                 std::span<const Feedback> feedback, QueryUpdateCache* cache) {
  if (cache) {
    cache->feedback.assign(feedback.begin(), feedback.end());
    cache->steps.assign(feedback.size(), GruCache{});
    cache->ready = true;
  }
  Vec h(q_t.begin(), q_t.end());
  if (feedback.empty()) return h;
  for (std::size_t i = 0; i < feedback.size(); ++i) {
    const Vec f = embed_feedback(p, feedback[i]);
    h = p.gru.forward(f, h, cache ? &cache->steps[i] : nullptr);
  }
  axpy(1.0, q0, h);
  return h;
}

QueryUpdateGrads update_query_backward(PolicyParams& p, const QueryUpdateCache& cache,
                                       std::span<const double> dq_next) {
  if (!cache.ready) throw StateError("update_query backward before forward");
  QueryUpdateGrads out;
  if (cache.feedback.empty()) {
    out.dq_t.assign(dq_next.begin(), dq_next.end());
    out.dq0.assign(dq_next.size(), 0.0);
    return out;
  }
  out.dq0.assign(dq_next.begin(), dq_next.end());
  Vec dh(dq_next.begin(), dq_next.end());
  const std::size_t df = p.config.feedback_dim;
  for (std::size_t i = cache.feedback.size(); i-- > 0;) {
    GruGrads g = p.gru.backward(cache.steps[i], dh);
    const Feedback& fb = cache.feedback[i];
    for (std::size_t r = 0; r < df; ++r) {
      p.W1.grad(r, fb.concept_id) += fb.sign * g.dx[r];
      p.b1.grad[r] += g.dx[r];
    }
    dh = std::move(g.dh);
  }
  out.dq_t = std::move(dh);
  return out;
}

// ---------------------------------------------------------------------------
// MomentEmbeddings

MomentEmbeddings::MomentEmbeddings(const PolicyParams& params, const Corpus& corpus, bool precompute_all)
    : params_(&params), corpus_(&corpus), entries_(corpus.size()) {
  if (corpus.config().feature_dim != params.config.feature_dim) {
    throw ConfigError("agent feature_dim does not match corpus");
  }
  if (precompute_all) {
    for (MomentId i = 0; i < corpus.size(); ++i) get(i);
  }
}

const Vec& MomentEmbeddings::get(MomentId id) {
  auto& slot = entries_.at(id);
  if (!slot) {
    slot.emplace();
    slot->out = params_->fc_m.forward(corpus_->moment(id).feature, &slot->cache);
    ++computed_;
  }
  return slot->out;
}

const Vec& MomentEmbeddings::get(MomentId id) const {
  const auto& slot = entries_.at(id);
  if (!slot) throw StateError("moment projection " + std::to_string(id) + " was not precomputed");
  return slot->out;
}

void MomentEmbeddings::add_grad(MomentId id, std::span<const double> grad) {
  auto& slot = entries_.at(id);
  if (!slot) throw StateError("gradient for a moment that was never projected");
  if (!slot->has_grad) {
    slot->grad.assign(grad.begin(), grad.end());
    slot->has_grad = true;
    touched_.push_back(id);
  } else {
    axpy(1.0, grad, slot->grad);
  }
}

void MomentEmbeddings::backward(PolicyParams& params) {
  std::sort(touched_.begin(), touched_.end());
  for (const MomentId id : touched_) {
    auto& slot = *entries_[id];
    params.fc_m.backward(slot.cache, slot.grad);
    slot.has_grad = false;
    slot.grad.clear();
  }
  touched_.clear();
}

// ---------------------------------------------------------------------------
// Policy / value

std::size_t ActionScores::argmax() const {
  if (scores.empty()) throw StateError("argmax over an empty action set");
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[best] || (scores[i] == scores[best] && candidates[i] < candidates[best])) best = i;
  }
  return best;
}

ActionScores score_actions(const PolicyParams& p, std::span<const double> q_t,
                           std::span<const MomentId> candidates, const Corpus& corpus,
                           MomentEmbeddings* embeddings) {
  if (candidates.empty()) throw StateError("empty observation window (dead end)");
  const Vec zq = p.fc_q.forward(q_t);
  ActionScores out;
  out.candidates.assign(candidates.begin(), candidates.end());
  out.scores.reserve(candidates.size());
  for (const MomentId id : candidates) {
    if (embeddings) {
      out.scores.push_back(cosine(embeddings->get(id), zq));
    } else {
      out.scores.push_back(cosine(p.fc_m.forward(corpus.moment(id).feature), zq));
    }
  }
  Vec logits(out.scores);
  for (double& l : logits) l /= p.config.temperature;
  out.probabilities = softmax(logits);
  return out;
}

ActionScores score_actions(const PolicyParams& p, std::span<const double> q_t, const ObservationWindow& window,
                           const Corpus& corpus, MomentEmbeddings* embeddings) {
  return score_actions(p, q_t, std::span<const MomentId>(window.members), corpus, embeddings);
}

SelectedAction select_action(const ActionScores& scores, double epsilon, Rng& rng) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ArgumentError("epsilon must lie in [0,1]");
  if (scores.candidates.empty()) throw StateError("no candidates to select from");
  SelectedAction out;
  if (epsilon > 0.0 && rng.bernoulli(epsilon)) {
    out.index = static_cast<std::size_t>(rng.uniform_int(scores.candidates.size()));
    out.explored = true;
  } else {
    out.index = scores.argmax();
  }
  out.moment = scores.candidates[out.index];
  return out;
}

double value_from_projections(const PolicyParams& p, std::span<const double> moment_proj,
                              std::span<const double> query_proj, FcCache* cache) {
  Vec joint(moment_proj.begin(), moment_proj.end());
  joint.insert(joint.end(), query_proj.begin(), query_proj.end());
  return p.fc_w.forward(joint, cache)[0];
}

double value(const PolicyParams& p, std::span<const double> moment_feature, std::span<const double> q) {
  return value_from_projections(p, p.fc_m.forward(moment_feature), p.fc_q.forward(q));
}

}  // namespace momentnav
