#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "momentnav/agent.hpp"
#include "momentnav/environment.hpp"
#include "momentnav/json.hpp"
#include "momentnav/trainer.hpp"

namespace momentnav {

/// A policy under evaluation: learned parameters or one of the baselines.
struct EvalAgent {
  std::string name;
  PolicyKind kind = PolicyKind::learned;
  const PolicyParams* params = nullptr;
  bool use_feedback = true;
};

struct EvalOptions {
  std::vector<int> d0s{1, 2, 3, 4};
  /// Greedy agent; simulator epsilon, k and reward come from here.
  RolloutOptions rollout;
  /// Dump every trajectory here when set (JSON lines).
  std::filesystem::path trajectory_dump;
};

/// Cumulative fraction of sessions solved by round 1..t_max. `success_steps`
/// holds the 1-based success round per session, 0 for a failure.
std::vector<double> stepwise_recall(std::span<const int> success_steps, int t_max);

struct D0Bucket {
  int d0 = 0;
  std::size_t sessions = 0;
  std::size_t successes = 0;
  std::size_t skipped = 0;  // queries with no node at exactly d0
  std::vector<int> success_steps;

  double recall() const;
};

struct D0Run {
  std::string model;
  std::uint64_t seed = 0;
  int t_max = 0;
  std::vector<D0Bucket> buckets;
  std::size_t steps = 0;
  double wall_seconds = 0.0;
};

/// For every query and d0, m0 is drawn uniformly from the nodes at exactly d0
/// hops from the target (per-(seed, query, d0) generator, shared by all agents).
D0Run eval_d0(const EvalAgent& agent, const NavGraph& graph, const Corpus& corpus,
              std::span<const QuerySpec> queries, std::uint64_t seed, const EvalOptions& opts);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // population std over seeds
};

MeanStd mean_std(std::span<const double> xs);

/// Groups runs by model: recall mean/std per d0 and mean step-wise curves.
json summarize_d0(std::span<const D0Run> runs, bool include_timing = false);

// ---------------------------------------------------------------------------
// Engine-ranked protocol

struct EngineConfig {
  /// Score noise sd is drawn per query, log-uniform in [noise_min, noise_max];
  /// equal bounds give a fixed sd.
  double noise_min = 0.2;
  double noise_max = 0.2;
  std::uint64_t seed = 11;

  void validate() const;
};

void to_json(json& j, const EngineConfig& c);
void from_json(const json& j, EngineConfig& c);

struct EngineRanking {
  std::vector<MomentId> order;  // best first
  std::size_t target_rank = 0;  // 1-based
};

/// Degraded stand-in retrieval engine: cosine between the query's concept bag
/// and each clip's dense profile, plus Gaussian score noise. Ties go to the
/// lower id.
/// Ranking alone; the query target is ignored.
std::vector<MomentId> engine_order(const Corpus& corpus, const QuerySpec& query, const EngineConfig& cfg);

EngineRanking engine_rank(const Corpus& corpus, const QuerySpec& query, const EngineConfig& cfg);

struct RankBucket {
  std::string label;
  std::size_t lo = 0;  // exclusive
  std::size_t hi = 0;  // inclusive, 0 = unbounded
  std::size_t queries = 0;
  std::size_t found = 0;

  bool contains(std::size_t rank) const { return rank > lo && (hi == 0 || rank <= hi); }
  double found_fraction() const { return queries ? static_cast<double>(found) / static_cast<double>(queries) : 0.0; }
};

std::vector<RankBucket> default_rank_buckets();

struct RankPoint {
  std::uint64_t query_id = 0;
  std::size_t rank = 0;
  int steps = 0;  // success round, 0 when not found
};

struct RankedRun {
  std::string model;
  std::vector<RankBucket> buckets;
  std::vector<RankPoint> points;
  std::size_t skipped_top10 = 0;
};

/// m0 = engine top-1, only for queries whose target ranks below 10.
RankedRun eval_ranked(const EvalAgent& agent, const NavGraph& graph, const Corpus& corpus,
                      std::span<const QuerySpec> queries, const EngineConfig& engine, std::uint64_t seed,
                      const EvalOptions& opts);

json to_json_value(const RankedRun& r);
std::string rank_points_csv(const RankedRun& r);

// ---------------------------------------------------------------------------
// Action-space sweep

/// Mean |N^k(v)| over all nodes.
double mean_window_size(const NavGraph& graph, int k);

struct SweepEntry {
  int k = 0;
  double mean_window = 0.0;
  std::vector<D0Run> runs;  // one per seed
};

/// Trains one model per (k, seed) with `train_cfg` and evaluates it with the
/// same k over `opts.d0s`.
std::vector<SweepEntry> sweep_k(const Corpus& corpus, const NavGraph& graph, std::span<const QuerySpec> train_queries,
                                std::span<const QuerySpec> eval_queries, const TrainConfig& train_cfg,
                                std::span<const int> ks, std::span<const std::uint64_t> seeds,
                                const EvalOptions& opts);

json to_json_value(const std::vector<SweepEntry>& sweep);

/// One CSV row per (model, seed, d0).
std::string d0_runs_csv(std::span<const D0Run> runs);

}  // namespace momentnav
