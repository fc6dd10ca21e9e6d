#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "momentnav/agent.hpp"
#include "momentnav/environment.hpp"
#include "momentnav/json.hpp"

namespace momentnav {

enum class TrainMode { full, imitation, no_feedback };
std::string to_string(TrainMode m);
/// Accepts "no_feedback" and "no-feedback".
TrainMode train_mode_from_string(const std::string& s);

struct LossConfig {
  double margin = 0.1;
  double lambda1 = 1.0;  // triplet
  double lambda2 = 0.1;  // policy
  double lambda3 = 0.1;  // value
  /// Use max(0, c + u+ - u-) exactly as printed instead of max(0, c - u+ + u-).
  bool triplet_as_printed = false;
  /// Let the value loss update FC_m and FC_q as well as FC_w.
  bool value_to_encoders = false;

  void validate() const;
};

void to_json(json& j, const LossConfig& c);
void from_json(const json& j, LossConfig& c);

struct TrainConfig {
  TrainMode mode = TrainMode::full;
  int epochs = 15;
  int episodes_per_query = 1;
  int batch_size = 8;  // queries per optimisation step
  double lr = 0.1;
  double clip = 5.0;
  double epsilon = 0.1;
  std::uint64_t seed = 1;
  int d0_min = 1;
  int d0_max = 4;
  LossConfig loss;
  /// k, reward, simulator epsilon and bootstrap state are taken from here;
  /// policy, agent epsilon, use_feedback and compute_values follow the mode.
  RolloutOptions rollout;
  AgentConfig agent;

  void validate() const;
  RolloutOptions sampling_options() const;
};

void to_json(json& j, const TrainConfig& c);
void from_json(const json& j, TrainConfig& c);

/// A loss value with its gradient with respect to the window scores.
struct ScoreLoss {
  double loss = 0.0;
  Vec dscores;
};

/// Mean over negatives of max(0, c - u[pos] + u[neg]). Zero when the window
/// holds only the positive.
ScoreLoss triplet_loss(std::span<const double> scores, std::size_t positive, double margin,
                       bool as_printed = false);

/// -log softmax(scores / temperature)[action] * advantage, advantage held constant.
ScoreLoss policy_loss(std::span<const double> scores, std::size_t action, double advantage, double temperature);

/// (q - ret)^2; writes d/dq when `dq` is given.
double value_loss(double q, double ret, double* dq = nullptr);

struct LossTerms {
  double triplet = 0.0;
  double policy = 0.0;
  double value = 0.0;
  double total = 0.0;
  std::size_t steps = 0;
  std::size_t triplet_steps = 0;

  LossTerms& operator+=(const LossTerms& o);
};

/// Recomputes the forward pass of a recorded trajectory with `params` and
/// returns the weighted loss. With `backward`, gradients scaled by `weight`
/// are accumulated into `params` and, for FC_m, into `embeddings` (call
/// embeddings.backward afterwards).
LossTerms replay_trajectory(PolicyParams& params, const Trajectory& traj, const QuerySpec& query,
                            MomentEmbeddings& embeddings, const LossConfig& loss,
                            TrainMode mode, double weight, bool backward);

/// Mean objective over a batch; gradients land in params when `backward`.
LossTerms batch_objective(PolicyParams& params, std::span<const Trajectory> trajs,
                          std::span<const QuerySpec* const> queries, const Corpus& corpus,
                          const LossConfig& loss, TrainMode mode, bool backward);

struct EpochReport {
  int epoch = 0;
  LossTerms loss;  // mean per optimisation step
  double mean_return = 0.0;
  double train_recall = 0.0;
  std::size_t episodes = 0;
  std::size_t updates = 0;
  double grad_norm = 0.0;
  double wall_seconds = 0.0;
};

struct TrainReport {
  TrainMode mode = TrainMode::full;
  std::vector<EpochReport> epochs;
  double wall_seconds = 0.0;
};

json to_json_value(const TrainReport& r, bool include_timing = true);

struct TrainResult {
  PolicyParams params;
  TrainReport report;
};

/// On-policy training over `queries`. Each optimisation step samples
/// `batch_size * episodes_per_query` episodes with the current parameters.
TrainResult train(const Corpus& corpus, const NavGraph& graph, std::span<const QuerySpec> queries,
                  const TrainConfig& cfg);

/// Checkpoint metadata shared by the CLI and the service.
json checkpoint_meta(const TrainConfig& cfg, const Corpus& corpus, const NavGraph& graph);

}  // namespace momentnav
