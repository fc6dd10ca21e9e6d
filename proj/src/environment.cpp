#include "momentnav/environment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "momentnav/errors.hpp"

namespace momentnav {

void RewardConfig::validate() const {
  if (!(phi >= 0.0)) throw ConfigError("reward: phi must be >= 0");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("reward: gamma must lie in (0,1]");
  if (t_max < 1) throw ConfigError("reward: t_max must be >= 1");
}

void to_json(json& j, const RewardConfig& c) { j = json{{"phi", c.phi}, {"gamma", c.gamma}, {"t_max", c.t_max}}; }

void from_json(const json& j, RewardConfig& c) {
  const RewardConfig d;
  c.phi = j.value("phi", d.phi);
  c.gamma = j.value("gamma", d.gamma);
  c.t_max = j.value("t_max", d.t_max);
}

double step_reward(const RewardConfig& cfg, int d_t, int d_next, int t) {
  if (d_t < 0 || d_next < 0 || t < 0) throw ArgumentError("step_reward: negative distance or step");
  const double penalty = cfg.phi * t;
  if (d_next < d_t) return std::ldexp(1.0, -d_next) - penalty;
  if (d_next == d_t) return -penalty;
  return -0.5 - penalty;
}

std::string to_string(SessionStatus s) {
  switch (s) {
    case SessionStatus::running: return "running";
    case SessionStatus::success: return "success";
    case SessionStatus::exhausted: return "exhausted";
    case SessionStatus::dead_end: return "dead_end";
  }
  return "unknown";
}

SessionStatus session_status_from_string(const std::string& s) {
  if (s == "running") return SessionStatus::running;
  if (s == "success") return SessionStatus::success;
  if (s == "exhausted") return SessionStatus::exhausted;
  if (s == "dead_end") return SessionStatus::dead_end;
  throw ValidationError("unknown session status '" + s + "'");
}

std::string to_string(PolicyKind k) {
  switch (k) {
    case PolicyKind::learned: return "learned";
    case PolicyKind::random: return "random";
    case PolicyKind::oracle: return "oracle";
  }
  return "unknown";
}

PolicyKind policy_kind_from_string(const std::string& s) {
  if (s == "learned") return PolicyKind::learned;
  if (s == "random") return PolicyKind::random;
  if (s == "oracle") return PolicyKind::oracle;
  throw ConfigError("unknown policy kind '" + s + "'");
}

std::string to_string(BootstrapState b) { return b == BootstrapState::pre ? "pre" : "post"; }

BootstrapState bootstrap_state_from_string(const std::string& s) {
  if (s == "pre") return BootstrapState::pre;
  if (s == "post") return BootstrapState::post;
  throw ConfigError("bootstrap state must be pre or post, got '" + s + "'");
}

// ---------------------------------------------------------------------------
// Simulator

namespace {

std::vector<ConceptId> concept_union(const ConceptProfile& a, const ConceptProfile& b) {
  std::vector<ConceptId> ids;
  ids.reserve(a.entries.size() + b.entries.size());
  for (const auto& e : a.entries) ids.push_back(e.concept_id);
  for (const auto& e : b.entries) ids.push_back(e.concept_id);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

bool has_concept(const ConceptProfile& p, ConceptId c) {
  return std::any_of(p.entries.begin(), p.entries.end(), [c](const ConceptEntry& e) { return e.concept_id == c; });
}

}  // namespace

std::optional<Feedback> exploit_feedback(const ConceptProfile& rec, const ConceptProfile& target) {
  std::optional<Feedback> best;
  double best_dev = 0.0;
  // Ascending id scan with a strict comparison keeps the lowest id on ties.
  for (const ConceptId c : concept_union(rec, target)) {
    const double dev = target.prob(c) - rec.prob(c);
    if (std::abs(dev) > best_dev) {
      best_dev = std::abs(dev);
      best = Feedback{c, dev > 0.0 ? +1 : -1};
    }
  }
  return best;
}

std::optional<SimulatedFeedback> simulate_feedback(const ConceptProfile& rec, const ConceptProfile& target,
                                                   double epsilon, Rng& rng) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ArgumentError("simulator epsilon must lie in [0,1]");
  if (epsilon > 0.0 && rng.bernoulli(epsilon)) {
    std::vector<Feedback> pool;
    for (const ConceptId c : concept_union(rec, target)) {
      const bool in_target = has_concept(target, c);
      const bool in_rec = has_concept(rec, c);
      if (in_target && !in_rec) pool.push_back({c, +1});
      if (in_rec && !in_target) pool.push_back({c, -1});
    }
    if (!pool.empty()) return SimulatedFeedback{pool[rng.uniform_int(pool.size())], true};
  }
  const auto fb = exploit_feedback(rec, target);
  if (!fb) return std::nullopt;
  return SimulatedFeedback{*fb, false};
}

std::optional<SimulatedFeedback> simulate_feedback(const Corpus& corpus, MomentId rec, MomentId target,
                                                   double epsilon, Rng& rng) {
  if (rec == target) throw ArgumentError("no feedback is needed once the target is recommended");
  return simulate_feedback(corpus.moment(rec).profile, corpus.moment(target).profile, epsilon, rng);
}

// ---------------------------------------------------------------------------
// Trajectories

bool TrajectoryStep::target_in_window(MomentId target) const {
  return std::binary_search(window.begin(), window.end(), target);
}

int Trajectory::success_step() const {
  return status == SessionStatus::success ? static_cast<int>(steps.size()) : 0;
}

void RolloutOptions::validate() const {
  if (k < 1) throw ConfigError("rollout: k must be >= 1");
  if (!(agent_epsilon >= 0.0 && agent_epsilon <= 1.0)) throw ConfigError("rollout: agent epsilon outside [0,1]");
  if (!(simulator_epsilon >= 0.0 && simulator_epsilon <= 1.0)) {
    throw ConfigError("rollout: simulator epsilon outside [0,1]");
  }
  reward.validate();
}

void to_json(json& j, const RolloutOptions& o) {
  j = json{{"k", o.k},
           {"agent_epsilon", o.agent_epsilon},
           {"simulator_epsilon", o.simulator_epsilon},
           {"exclude_visited", o.exclude_visited},
           {"use_feedback", o.use_feedback},
           {"policy", to_string(o.policy)},
           {"compute_values", o.compute_values},
           {"bootstrap", to_string(o.bootstrap)},
           {"reward", o.reward}};
}

void from_json(const json& j, RolloutOptions& o) {
  const RolloutOptions d;
  o.k = j.value("k", d.k);
  o.agent_epsilon = j.value("agent_epsilon", d.agent_epsilon);
  o.simulator_epsilon = j.value("simulator_epsilon", d.simulator_epsilon);
  o.exclude_visited = j.value("exclude_visited", d.exclude_visited);
  o.use_feedback = j.value("use_feedback", d.use_feedback);
  o.policy = policy_kind_from_string(j.value("policy", to_string(d.policy)));
  o.compute_values = j.value("compute_values", d.compute_values);
  o.bootstrap = bootstrap_state_from_string(j.value("bootstrap", to_string(d.bootstrap)));
  o.reward = j.value("reward", d.reward);
}

Trajectory rollout_episode(const PolicyParams* params, const NavGraph& graph, const Corpus& corpus,
                           const QuerySpec& query, MomentId m0, const RolloutOptions& opts, Rng& rng,
                           DistanceOracle& oracle, MomentEmbeddings* embeddings) {
  opts.validate();
  const bool learned = opts.policy == PolicyKind::learned;
  if (learned && !params) throw ArgumentError("learned policy needs parameters");
  if (m0 >= graph.size()) throw ArgumentError("start moment out of range");
  if (query.target >= graph.size()) throw ArgumentError("query target out of range");

  std::optional<MomentEmbeddings> local;
  if (learned && !embeddings) embeddings = &local.emplace(*params, corpus);

  Trajectory traj;
  traj.query_id = query.id;
  traj.target = query.target;
  traj.m0 = m0;
  const auto& dist = oracle.from_target(query.target);
  traj.d0 = dist[m0];

  Vec q0;
  Vec q;
  if (learned) {
    q0 = encode_query(*params, query);
    q = q0;
  }
  auto state_value = [&](MomentId m, const Vec& qv) {
    return value_from_projections(*params, embeddings->get(m), params->fc_q.forward(qv));
  };

  std::vector<MomentId> visited{m0};
  MomentId current = m0;
  if (current == query.target) {
    traj.status = SessionStatus::success;
    return traj;
  }
  for (int t = 0; t < opts.reward.t_max; ++t) {
    std::sort(visited.begin(), visited.end());
    const auto window = observation_window(graph, current, opts.k,
                                           opts.exclude_visited ? std::span<const MomentId>(visited)
                                                                : std::span<const MomentId>());
    if (window.members.empty()) {
      traj.status = SessionStatus::dead_end;
      break;
    }

    TrajectoryStep step;
    step.t = t;
    step.current = current;
    step.window = window.members;
    step.d_t = dist[current];
    for (std::size_t i = 1; i < step.window.size(); ++i) {
      if (dist[step.window[i]] < dist[step.window[step.oracle_index]]) step.oracle_index = i;
    }

    switch (opts.policy) {
      case PolicyKind::learned: {
        const ActionScores scores = score_actions(*params, q, window, corpus, embeddings);
        const SelectedAction sel = select_action(scores, opts.agent_epsilon, rng);
        step.action_index = sel.index;
        step.explored = sel.explored;
        step.log_prob = std::log(scores.probabilities[sel.index]);
        if (opts.compute_values) step.value_pre = state_value(current, q);
        break;
      }
      case PolicyKind::random:
        step.action_index = static_cast<std::size_t>(rng.uniform_int(step.window.size()));
        step.log_prob = -std::log(static_cast<double>(step.window.size()));
        break;
      case PolicyKind::oracle:
        step.action_index = step.oracle_index;
        break;
    }
    step.chosen = step.window[step.action_index];
    step.d_next = dist[step.chosen];
    step.reward = step_reward(opts.reward, step.d_t, step.d_next, t);
    visited.push_back(step.chosen);
    current = step.chosen;

    if (current == query.target) {
      traj.steps.push_back(std::move(step));
      traj.status = SessionStatus::success;
      break;
    }
    if (opts.use_feedback) {
      if (const auto fb = simulate_feedback(corpus, current, query.target, opts.simulator_epsilon, rng)) {
        step.feedback.push_back(fb->feedback);
        step.feedback_explored = fb->explored;
      }
      if (learned) q = update_query(*params, q, q0, step.feedback);
    }
    if (learned && opts.compute_values) step.value_post = state_value(current, q);
    traj.steps.push_back(std::move(step));
  }

  if (traj.status == SessionStatus::running) {
    traj.status = SessionStatus::exhausted;
    if (learned && opts.compute_values && !traj.steps.empty()) {
      traj.bootstrapped = true;
      const auto& last = traj.steps.back();
      traj.bootstrap_value = opts.bootstrap == BootstrapState::post ? last.value_post : last.value_pre;
    }
  }
  compute_returns(traj, opts.reward);
  return traj;
}

std::vector<double> discounted_returns(std::span<const double> rewards, double gamma,
                                       std::optional<double> bootstrap) {
  std::vector<double> out(rewards.size());
  double next = bootstrap.value_or(0.0);
  for (std::size_t i = rewards.size(); i-- > 0;) {
    next = rewards[i] + gamma * next;
    out[i] = next;
  }
  return out;
}

void compute_returns(Trajectory& traj, const RewardConfig& cfg) {
  std::vector<double> rewards;
  rewards.reserve(traj.steps.size());
  for (const auto& s : traj.steps) rewards.push_back(s.reward);
  std::optional<double> bootstrap;
  if (traj.status == SessionStatus::exhausted && traj.bootstrapped) bootstrap = traj.bootstrap_value;
  const auto rets = discounted_returns(rewards, cfg.gamma, bootstrap);
  for (std::size_t i = 0; i < traj.steps.size(); ++i) {
    traj.steps[i].ret = rets[i];
    traj.steps[i].advantage = rets[i] - traj.steps[i].value_pre;
  }
}

std::optional<MomentId> sample_start(DistanceOracle& oracle, const NavGraph& graph, MomentId target, int d0,
                                     Rng& rng) {
  const auto& dist = oracle.from_target(target);
  std::vector<MomentId> ring;
  for (MomentId v = 0; v < graph.size(); ++v) {
    if (dist[v] == d0) ring.push_back(v);
  }
  if (ring.empty()) return std::nullopt;
  return ring[rng.uniform_int(ring.size())];
}

json trajectory_to_json(const Trajectory& traj) {
  json steps = json::array();
  for (const auto& s : traj.steps) {
    json fb = json::array();
    for (const auto& f : s.feedback) fb.push_back(json{{"concept", f.concept_id}, {"sign", f.sign}});
    steps.push_back(json{{"t", s.t},
                         {"current", s.current},
                         {"window", s.window},
                         {"chosen", s.chosen},
                         {"explored", s.explored},
                         {"log_prob", s.log_prob},
                         {"reward", s.reward},
                         {"value_pre", s.value_pre},
                         {"value_post", s.value_post},
                         {"d_t", s.d_t},
                         {"d_next", s.d_next},
                         {"feedback", fb},
                         {"return", s.ret}});
  }
  return json{{"query_id", traj.query_id}, {"target", traj.target}, {"m0", traj.m0},
              {"d0", traj.d0},             {"status", to_string(traj.status)}, {"steps", steps}};
}

void write_trajectories(const std::filesystem::path& path, std::span<const Trajectory> trajs) {
  std::string text;
  for (const auto& t : trajs) {
    text += trajectory_to_json(t).dump();
    text += '\n';
  }
  write_text_file(path, text);
}

}  // namespace momentnav
