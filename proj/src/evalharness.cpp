#include "momentnav/evalharness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "momentnav/errors.hpp"

namespace momentnav {

std::vector<double> stepwise_recall(std::span<const int> success_steps, int t_max) {
  if (t_max < 1) throw ArgumentError("t_max must be >= 1");
  std::vector<double> curve(static_cast<std::size_t>(t_max), 0.0);
  if (success_steps.empty()) return curve;
  std::vector<std::size_t> solved_at(static_cast<std::size_t>(t_max) + 1, 0);
  for (const int s : success_steps) {
    if (s < 0 || s > t_max) throw ArgumentError("success step outside [0, t_max]");
    if (s > 0) ++solved_at[static_cast<std::size_t>(s)];
  }
  std::size_t cum = 0;
  for (int t = 1; t <= t_max; ++t) {
    cum += solved_at[static_cast<std::size_t>(t)];
    curve[static_cast<std::size_t>(t - 1)] = static_cast<double>(cum) / static_cast<double>(success_steps.size());
  }
  return curve;
}

double D0Bucket::recall() const {
  return sessions ? static_cast<double>(successes) / static_cast<double>(sessions) : 0.0;
}

namespace {

RolloutOptions agent_options(const EvalAgent& agent, const EvalOptions& opts) {
  RolloutOptions o = opts.rollout;
  o.policy = agent.kind;
  o.agent_epsilon = 0.0;
  o.use_feedback = agent.use_feedback;
  o.compute_values = false;
  if (agent.kind == PolicyKind::learned && !agent.params) throw ArgumentError("learned agent without parameters");
  return o;
}

}  // namespace

D0Run eval_d0(const EvalAgent& agent, const NavGraph& graph, const Corpus& corpus,
              std::span<const QuerySpec> queries, std::uint64_t seed, const EvalOptions& opts) {
  if (opts.d0s.empty()) throw ArgumentError("no d0 values to evaluate");
  const RolloutOptions ro = agent_options(agent, opts);
  const auto start = std::chrono::steady_clock::now();

  D0Run run;
  run.model = agent.name;
  run.seed = seed;
  run.t_max = ro.reward.t_max;
  DistanceOracle oracle(graph);
  std::optional<MomentEmbeddings> embeddings;
  if (agent.params) embeddings.emplace(*agent.params, corpus, true);
  std::vector<Trajectory> dump;

  for (const int d0 : opts.d0s) {
    D0Bucket bucket;
    bucket.d0 = d0;
    for (const auto& q : queries) {
      Rng start_rng(derive_seed(seed, {q.id, static_cast<std::uint64_t>(d0), 1}));
      const auto m0 = sample_start(oracle, graph, q.target, d0, start_rng);
      if (!m0) {
        ++bucket.skipped;
        continue;
      }
      Rng rng(derive_seed(seed, {q.id, static_cast<std::uint64_t>(d0), 2}));
      Trajectory traj = rollout_episode(agent.params, graph, corpus, q, *m0, ro, rng, oracle,
                                        embeddings ? &*embeddings : nullptr);
      ++bucket.sessions;
      run.steps += traj.steps.size();
      const int s = traj.success_step();
      if (s > 0) ++bucket.successes;
      bucket.success_steps.push_back(s);
      if (!opts.trajectory_dump.empty()) dump.push_back(std::move(traj));
    }
    run.buckets.push_back(std::move(bucket));
  }
  if (!opts.trajectory_dump.empty()) write_trajectories(opts.trajectory_dump, dump);
  run.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return run;
}

MeanStd mean_std(std::span<const double> xs) {
  MeanStd out;
  if (xs.empty()) return out;
  for (const double x : xs) out.mean += x;
  out.mean /= static_cast<double>(xs.size());
  double var = 0.0;
  for (const double x : xs) var += (x - out.mean) * (x - out.mean);
  out.std = std::sqrt(var / static_cast<double>(xs.size()));
  return out;
}

json summarize_d0(std::span<const D0Run> runs, bool include_timing) {
  std::vector<std::string> models;
  for (const auto& r : runs) {
    if (std::find(models.begin(), models.end(), r.model) == models.end()) models.push_back(r.model);
  }
  json out = json::array();
  for (const auto& model : models) {
    std::vector<const D0Run*> mine;
    for (const auto& r : runs) {
      if (r.model == model) mine.push_back(&r);
    }
    json per_d0 = json::array();
    const auto& first = *mine.front();
    for (std::size_t b = 0; b < first.buckets.size(); ++b) {
      std::vector<double> recalls;
      std::vector<double> curve(static_cast<std::size_t>(first.t_max), 0.0);
      std::size_t sessions = 0, skipped = 0;
      for (const D0Run* r : mine) {
        const auto& bucket = r->buckets.at(b);
        recalls.push_back(bucket.recall());
        const auto c = stepwise_recall(bucket.success_steps, r->t_max);
        for (std::size_t t = 0; t < curve.size(); ++t) curve[t] += c[t] / static_cast<double>(mine.size());
        sessions += bucket.sessions;
        skipped += bucket.skipped;
      }
      const MeanStd ms = mean_std(recalls);
      per_d0.push_back(json{{"d0", first.buckets[b].d0},
                            {"recall_mean", ms.mean},
                            {"recall_std", ms.std},
                            {"per_seed", recalls},
                            {"stepwise_mean", curve},
                            {"sessions", sessions},
                            {"skipped", skipped}});
    }
    std::vector<std::uint64_t> seeds;
    for (const D0Run* r : mine) seeds.push_back(r->seed);
    json row{{"model", model}, {"seeds", seeds}, {"d0", per_d0}};
    if (include_timing) {
      double secs = 0.0;
      std::size_t steps = 0;
      for (const D0Run* r : mine) {
        secs += r->wall_seconds;
        steps += r->steps;
      }
      row["seconds_per_step"] = steps ? secs / static_cast<double>(steps) : 0.0;
    }
    out.push_back(row);
  }
  return out;
}

std::string d0_runs_csv(std::span<const D0Run> runs) {
  std::ostringstream os;
  os << "model,seed,d0,sessions,successes,skipped,recall\n";
  for (const auto& r : runs) {
    for (const auto& b : r.buckets) {
      os << r.model << ',' << r.seed << ',' << b.d0 << ',' << b.sessions << ',' << b.successes << ',' << b.skipped
         << ',' << b.recall() << '\n';
    }
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Engine

void EngineConfig::validate() const {
  if (!(noise_min >= 0.0 && noise_max >= noise_min)) throw ConfigError("engine: need 0 <= noise_min <= noise_max");
}

void to_json(json& j, const EngineConfig& c) {
  j = json{{"noise_min", c.noise_min}, {"noise_max", c.noise_max}, {"seed", c.seed}};
}

void from_json(const json& j, EngineConfig& c) {
  const EngineConfig d;
  c.noise_min = j.value("noise_min", d.noise_min);
  c.noise_max = j.value("noise_max", d.noise_max);
  c.seed = j.value("seed", d.seed);
}

std::vector<MomentId> engine_order(const Corpus& corpus, const QuerySpec& query, const EngineConfig& cfg) {
  cfg.validate();
  const std::size_t v = corpus.vocab().size();
  Vec bag(v, 0.0);
  for (const auto& c : query.concept_bag) {
    if (c.concept_id >= v) throw ArgumentError("query concept out of range");
    bag[c.concept_id] += c.weight;
  }
  Rng rng(derive_seed(cfg.seed, {query.id}));
  double sigma = cfg.noise_min;
  if (cfg.noise_max > cfg.noise_min) {
    if (cfg.noise_min > 0.0) {
      sigma = cfg.noise_min * std::pow(cfg.noise_max / cfg.noise_min, rng.uniform());
    } else {
      sigma = rng.uniform(cfg.noise_min, cfg.noise_max);
    }
  }
  const std::size_t n = corpus.size();
  Vec score(n);
  for (MomentId m = 0; m < n; ++m) {
    score[m] = cosine(bag, corpus.dense_profile(m)) + (sigma > 0.0 ? rng.normal(0.0, sigma) : 0.0);
  }
  std::vector<MomentId> order(n);
  std::iota(order.begin(), order.end(), MomentId{0});
  std::stable_sort(order.begin(), order.end(), [&](MomentId a, MomentId b) { return score[a] > score[b]; });
  return order;
}

EngineRanking engine_rank(const Corpus& corpus, const QuerySpec& query, const EngineConfig& cfg) {
  EngineRanking out;
  out.order = engine_order(corpus, query, cfg);
  const auto it = std::find(out.order.begin(), out.order.end(), query.target);
  if (it == out.order.end()) throw ArgumentError("query target not in corpus");
  out.target_rank = static_cast<std::size_t>(it - out.order.begin()) + 1;
  return out;
}

std::vector<RankBucket> default_rank_buckets() {
  return {{"(10,50]", 10, 50}, {"(50,100]", 50, 100}, {"(100,200]", 100, 200}, {">200", 200, 0}};
}

RankedRun eval_ranked(const EvalAgent& agent, const NavGraph& graph, const Corpus& corpus,
                      std::span<const QuerySpec> queries, const EngineConfig& engine, std::uint64_t seed,
                      const EvalOptions& opts) {
  const RolloutOptions ro = agent_options(agent, opts);
  RankedRun run;
  run.model = agent.name;
  run.buckets = default_rank_buckets();
  DistanceOracle oracle(graph);
  std::optional<MomentEmbeddings> embeddings;
  if (agent.params) embeddings.emplace(*agent.params, corpus, true);
  std::vector<Trajectory> dump;

  for (const auto& q : queries) {
    const EngineRanking ranking = engine_rank(corpus, q, engine);
    if (ranking.target_rank <= 10) {
      ++run.skipped_top10;
      continue;
    }
    Rng rng(derive_seed(seed, {q.id, 0xe9e}));
    Trajectory traj = rollout_episode(agent.params, graph, corpus, q, ranking.order.front(), ro, rng, oracle,
                                      embeddings ? &*embeddings : nullptr);
    const int steps = traj.success_step();
    for (auto& b : run.buckets) {
      if (b.contains(ranking.target_rank)) {
        ++b.queries;
        if (steps > 0) ++b.found;
      }
    }
    run.points.push_back({q.id, ranking.target_rank, steps});
    if (!opts.trajectory_dump.empty()) dump.push_back(std::move(traj));
  }
  if (!opts.trajectory_dump.empty()) write_trajectories(opts.trajectory_dump, dump);
  return run;
}

json to_json_value(const RankedRun& r) {
  json buckets = json::array();
  for (const auto& b : r.buckets) {
    buckets.push_back(
        json{{"bucket", b.label}, {"queries", b.queries}, {"found", b.found}, {"found_fraction", b.found_fraction()}});
  }
  std::size_t deep_found = 0;
  for (const auto& p : r.points) {
    if (p.rank > 100 && p.steps > 0) ++deep_found;
  }
  return json{{"model", r.model},
              {"buckets", buckets},
              {"skipped_top10", r.skipped_top10},
              {"evaluated", r.points.size()},
              {"found_rank_above_100", deep_found}};
}

std::string rank_points_csv(const RankedRun& r) {
  std::ostringstream os;
  os << "query_id,rank,steps,found\n";
  for (const auto& p : r.points) os << p.query_id << ',' << p.rank << ',' << p.steps << ',' << (p.steps > 0) << '\n';
  return os.str();
}

// ---------------------------------------------------------------------------
// Sweep

double mean_window_size(const NavGraph& graph, int k) {
  if (graph.size() == 0) return 0.0;
  double sum = 0.0;
  for (MomentId v = 0; v < graph.size(); ++v) sum += static_cast<double>(observation_window(graph, v, k).members.size());
  return sum / static_cast<double>(graph.size());
}

std::vector<SweepEntry> sweep_k(const Corpus& corpus, const NavGraph& graph, std::span<const QuerySpec> train_queries,
                                std::span<const QuerySpec> eval_queries, const TrainConfig& train_cfg,
                                std::span<const int> ks, std::span<const std::uint64_t> seeds,
                                const EvalOptions& opts) {
  std::vector<SweepEntry> out;
  for (const int k : ks) {
    SweepEntry entry;
    entry.k = k;
    entry.mean_window = mean_window_size(graph, k);
    for (const std::uint64_t seed : seeds) {
      TrainConfig cfg = train_cfg;
      cfg.seed = seed;
      cfg.rollout.k = k;
      const TrainResult trained = train(corpus, graph, train_queries, cfg);
      EvalOptions eo = opts;
      eo.rollout.k = k;
      EvalAgent agent{"k=" + std::to_string(k), PolicyKind::learned, &trained.params,
                      cfg.mode != TrainMode::no_feedback};
      entry.runs.push_back(eval_d0(agent, graph, corpus, eval_queries, seed, eo));
    }
    out.push_back(std::move(entry));
  }
  return out;
}

json to_json_value(const std::vector<SweepEntry>& sweep) {
  json out = json::array();
  for (const auto& e : sweep) {
    json per_d0 = json::array();
    if (!e.runs.empty()) {
      for (std::size_t b = 0; b < e.runs.front().buckets.size(); ++b) {
        std::vector<double> recalls;
        std::size_t successes = 0, sessions = 0;
        for (const auto& r : e.runs) {
          recalls.push_back(r.buckets[b].recall());
          successes += r.buckets[b].successes;
          sessions += r.buckets[b].sessions;
        }
        const MeanStd ms = mean_std(recalls);
        per_d0.push_back(json{{"d0", e.runs.front().buckets[b].d0},
                              {"successes", successes},
                              {"sessions", sessions},
                              {"recall_mean", ms.mean},
                              {"recall_std", ms.std}});
      }
    }
    out.push_back(json{{"k", e.k}, {"mean_window", e.mean_window}, {"d0", per_d0}});
  }
  return out;
}

}  // namespace momentnav
