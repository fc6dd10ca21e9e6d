#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "momentnav/agent.hpp"
#include "momentnav/corpus.hpp"
#include "momentnav/json.hpp"
#include "momentnav/nav_graph.hpp"
#include "momentnav/rng.hpp"

namespace momentnav {

struct RewardConfig {
  double phi = 0.1;    // per-step penalty
  double gamma = 0.8;  // discount
  int t_max = 7;       // interaction rounds

  void validate() const;
};

void to_json(json& j, const RewardConfig& c);
void from_json(const json& j, RewardConfig& c);

/// 1/2^d' - phi*t when the move gets closer, -phi*t when the distance is
/// unchanged, -1/2 - phi*t when it moves away.
double step_reward(const RewardConfig& cfg, int d_t, int d_next, int t);

enum class SessionStatus { running, success, exhausted, dead_end };
std::string to_string(SessionStatus s);
SessionStatus session_status_from_string(const std::string& s);

struct SimulatedFeedback {
  Feedback feedback;
  bool explored = false;
};

/// Deterministic branch: the concept with the largest |p*(c) - p_r(c)| over
/// both profiles (ties to the lower id); +1 when the target has more of it.
/// nullopt when the profiles are identical.
std::optional<Feedback> exploit_feedback(const ConceptProfile& rec, const ConceptProfile& target);

/// With probability epsilon a uniform pick from the concepts present in only
/// one of the two profiles (+ if it is the target's, - if the recommendation's);
/// otherwise the exploit branch. Falls back to exploit when that pool is empty.
std::optional<SimulatedFeedback> simulate_feedback(const ConceptProfile& rec, const ConceptProfile& target,
                                                   double epsilon, Rng& rng);
std::optional<SimulatedFeedback> simulate_feedback(const Corpus& corpus, MomentId rec, MomentId target,
                                                   double epsilon, Rng& rng);

struct TrajectoryStep {
  int t = 0;
  MomentId current = 0;
  std::vector<MomentId> window;
  std::size_t action_index = 0;
  MomentId chosen = 0;
  bool explored = false;
  /// Window index of the member closest to the target (ties to lower id).
  std::size_t oracle_index = 0;
  double log_prob = 0.0;
  double reward = 0.0;
  double value_pre = 0.0;
  double value_post = 0.0;
  int d_t = 0;
  int d_next = 0;
  std::vector<Feedback> feedback;
  bool feedback_explored = false;
  double ret = 0.0;
  double advantage = 0.0;

  bool target_in_window(MomentId target) const;
};

struct Trajectory {
  std::uint64_t query_id = 0;
  MomentId target = 0;
  MomentId m0 = 0;
  int d0 = 0;
  SessionStatus status = SessionStatus::running;
  std::vector<TrajectoryStep> steps;
  bool bootstrapped = false;
  double bootstrap_value = 0.0;

  /// 1-based round at which the target was reached, 0 otherwise.
  int success_step() const;
};

enum class PolicyKind { learned, random, oracle };
enum class BootstrapState { pre, post };

std::string to_string(PolicyKind k);
PolicyKind policy_kind_from_string(const std::string& s);
std::string to_string(BootstrapState b);
BootstrapState bootstrap_state_from_string(const std::string& s);

struct RolloutOptions {
  int k = 3;
  double agent_epsilon = 0.0;
  double simulator_epsilon = 0.1;
  bool exclude_visited = true;
  bool use_feedback = true;
  PolicyKind policy = PolicyKind::learned;
  bool compute_values = false;
  BootstrapState bootstrap = BootstrapState::post;
  RewardConfig reward;

  void validate() const;
};

void to_json(json& j, const RolloutOptions& o);
void from_json(const json& j, RolloutOptions& o);

/// Runs one simulated session from m0. `params` may be null for the random
/// and oracle policies. `embeddings` (optional) caches FC_m projections for
/// the current parameter snapshot.
Trajectory rollout_episode(const PolicyParams* params, const NavGraph& graph, const Corpus& corpus,
                           const QuerySpec& query, MomentId m0, const RolloutOptions& opts, Rng& rng,
                           DistanceOracle& oracle, MomentEmbeddings* embeddings = nullptr);

/// R_t = r_t + gamma * R_{t+1}; the last step adds gamma * bootstrap when given.
std::vector<double> discounted_returns(std::span<const double> rewards, double gamma,
                                       std::optional<double> bootstrap = std::nullopt);

/// Fills step.ret and step.advantage (ret - value_pre).
void compute_returns(Trajectory& traj, const RewardConfig& cfg);

/// Uniform choice among nodes at exact hop distance d0 from the target.
std::optional<MomentId> sample_start(DistanceOracle& oracle, const NavGraph& graph, MomentId target, int d0,
                                     Rng& rng);

json trajectory_to_json(const Trajectory& traj);
void write_trajectories(const std::filesystem::path& path, std::span<const Trajectory> trajs);

}  // namespace momentnav
