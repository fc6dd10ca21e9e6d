// Acceptance run: one PASS/FAIL line per criterion, details in <out>/acceptance.json.
// Exit status is 0 when the run completes; --strict makes any FAIL non-zero.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "momentnav/checkpoint.hpp"
#include "momentnav/environment.hpp"
#include "momentnav/evalharness.hpp"
#include "momentnav/gradsuite.hpp"
#include "momentnav/trainer.hpp"

namespace fs = std::filesystem;
using namespace momentnav;
using Clock = std::chrono::steady_clock;

namespace {

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  int id;
  std::string name;
  bool pass;
  std::string detail;
  json data;
};

std::vector<Outcome> outcomes;
std::vector<int> only;  // empty = all criteria

void report(int id, const std::string& name, bool pass, const std::string& detail, json data = json::object()) {
  if (!only.empty() && !std::count(only.begin(), only.end(), id)) return;
  std::cout << (pass ? "PASS" : "FAIL") << " [" << id << "] " << name << ": " << detail << std::endl;
  outcomes.push_back({id, name, pass, detail, std::move(data)});
}

std::string fmt(double x, int prec = 3) {
  std::ostringstream o;
  o << std::fixed << std::setprecision(prec) << x;
  return o.str();
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// ---------------------------------------------------------------- graphs

NavGraph from_edges(std::size_t n, const std::vector<std::pair<MomentId, MomentId>>& edges) {
  std::vector<std::set<MomentId>> adj(n);
  for (auto [a, b] : edges) {
    adj[a].insert(b);
    adj[b].insert(a);
  }
  std::vector<std::vector<MomentId>> lists(n);
  std::vector<std::vector<EdgeKind>> kinds(n);
  for (std::size_t i = 0; i < n; ++i) {
    lists[i].assign(adj[i].begin(), adj[i].end());
    kinds[i].assign(lists[i].size(), EdgeKind::inter);
  }
  return NavGraph(std::move(lists), std::move(kinds));
}

NavGraph random_graph(Rng& rng, std::size_t n, double p) {
  std::vector<std::pair<MomentId, MomentId>> e;
  for (MomentId i = 0; i < n; ++i)
    for (MomentId j = i + 1; j < n; ++j)
      if (rng.bernoulli(p)) e.push_back({i, j});
  return from_edges(n, e);
}

std::vector<std::vector<int>> floyd_warshall(const NavGraph& g) {
  const std::size_t n = g.size();
  const int inf = kUnreachable / 2;
  std::vector<std::vector<int>> d(n, std::vector<int>(n, inf));
  for (std::size_t i = 0; i < n; ++i) {
    d[i][i] = 0;
    for (MomentId j : g.neighbors(static_cast<MomentId>(i))) d[i][j] = 1;
  }
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (d[i][k] + d[k][j] < d[i][j]) d[i][j] = d[i][k] + d[k][j];
  for (auto& row : d)
    for (int& v : row)
      if (v >= inf) v = kUnreachable;
  return d;
}

// coarse probabilities so equal deviations are common
ConceptProfile random_profile(Rng& rng, std::uint32_t vocab, std::size_t k) {
  std::vector<ConceptId> ids(vocab);
  for (ConceptId i = 0; i < vocab; ++i) ids[i] = i;
  for (std::size_t i = 0; i < k; ++i) std::swap(ids[i], ids[i + rng.uniform_int(vocab - i)]);
  std::vector<ConceptEntry> e;
  for (std::size_t i = 0; i < k; ++i) e.push_back({ids[i], 0.1 * static_cast<double>(1 + rng.uniform_int(9))});
  std::stable_sort(e.begin(), e.end(), [](const ConceptEntry& a, const ConceptEntry& b) { return a.prob > b.prob; });
  return ConceptProfile{std::move(e)};
}

// ---------------------------------------------------------------- criteria

void c1_gradcheck(std::uint64_t seed) {
  const auto t0 = Clock::now();
  const GradSuiteReport r = run_gradcheck_suite(100, seed);
  const double secs = since(t0);
  std::ostringstream d;
  d << r.cases.size() << " configs, max rel error " << std::scientific << std::setprecision(2) << r.max_rel_error
    << " (fixed 1e-8 floor: " << r.max_rel_error_fixed_floor << "), " << std::fixed << std::setprecision(1) << secs
    << " s";
  report(1, "gradient check", r.cases.size() >= 100 && r.passed(1e-4) && secs < 60.0, d.str(),
         json{{"configs", r.cases.size()},
              {"max_rel_error", r.max_rel_error},
              {"max_rel_error_fixed_floor", r.max_rel_error_fixed_floor},
              {"seconds", secs}});
}

void c2_reward_returns() {
  RewardConfig cfg;
  Rng rng(2);
  double worst_reward = 0.0;
  int branches[3] = {0, 0, 0};
  for (int i = 0; i < 30000; ++i) {
    const int dt = static_cast<int>(rng.uniform_int(10));
    const int dn = static_cast<int>(rng.uniform_int(10));
    const int t = static_cast<int>(1 + rng.uniform_int(7));
    double want;
    if (dn < dt) {
      want = 1.0 / std::pow(2.0, dn) - cfg.phi * t;
      ++branches[0];
    } else if (dn == dt) {
      want = -cfg.phi * t;
      ++branches[1];
    } else {
      want = -0.5 - cfg.phi * t;
      ++branches[2];
    }
    worst_reward = std::max(worst_reward, std::abs(step_reward(cfg, dt, dn, t) - want));
  }
  double worst_return = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.uniform_int(7);
    std::vector<double> rw(n);
    for (double& x : rw) x = rng.uniform(-1.5, 1.0);
    const double gamma = cfg.gamma;
    std::optional<double> boot;
    if (rng.bernoulli(0.5)) boot = rng.normal();
    const auto got = discounted_returns(rw, gamma, boot);
    for (std::size_t t = 0; t < n; ++t) {
      double want = 0.0;
      for (std::size_t j = t; j < n; ++j) want += std::pow(gamma, static_cast<double>(j - t)) * rw[j];
      if (boot) want += std::pow(gamma, static_cast<double>(n - t)) * *boot;
      worst_return = std::max(worst_return, std::abs(got[t] - want));
    }
  }
  const bool pass = worst_reward <= 1e-15 && worst_return <= 1e-12 && branches[0] && branches[1] && branches[2];
  std::ostringstream d;
  d << std::scientific << std::setprecision(1) << "reward max err " << worst_reward << " over 30000 (branches "
    << branches[0] << "/" << branches[1] << "/" << branches[2] << "), returns max err " << worst_return
    << " over 1000 trajectories";
  report(2, "reward and returns", pass, d.str(), json{{"reward_max_error", worst_reward}, {"return_max_error", worst_return}});
}

void c3_distances_windows() {
  Rng rng(3);
  int bfs_mismatch = 0, window_mismatch = 0, not_monotone = 0;
  std::size_t windows = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + rng.uniform_int(199);
    const NavGraph g = random_graph(rng, n, rng.uniform(0.5, 4.0) / static_cast<double>(n));
    const auto fw = floyd_warshall(g);
    for (MomentId s = 0; s < n; ++s) bfs_mismatch += bfs_distances(g, s) != fw[s];
    for (int s = 0; s < 10; ++s) {
      const MomentId c = static_cast<MomentId>(rng.uniform_int(n));
      std::vector<MomentId> excl;
      for (int e = 0; e < 3; ++e) excl.push_back(static_cast<MomentId>(rng.uniform_int(n)));
      std::size_t prev = 0;
      for (int k = 1; k <= 6; ++k) {
        std::vector<MomentId> want;
        for (MomentId v = 0; v < n; ++v) {
          if (v == c || std::count(excl.begin(), excl.end(), v)) continue;
          if (fw[c][v] >= 1 && fw[c][v] <= k) want.push_back(v);
        }
        const auto w = observation_window(g, c, k, excl);
        window_mismatch += w.members != want;
        not_monotone += w.members.size() < prev;
        prev = w.members.size();
        ++windows;
      }
    }
  }
  report(3, "distances and windows", bfs_mismatch == 0 && window_mismatch == 0 && not_monotone == 0,
         "50 graphs: BFS vs Floyd-Warshall mismatches " + std::to_string(bfs_mismatch) + ", window mismatches " +
             std::to_string(window_mismatch) + "/" + std::to_string(windows) + ", non-monotone " +
             std::to_string(not_monotone));
}

void c4_graph_stats(const Corpus& corpus, const NavGraph& graph) {
  const GraphStats s = graph_stats(graph, corpus);
  const bool pass = std::abs(s.inter_fraction - 0.60) <= 0.05 && std::abs(s.avg_degree - 4.0) <= 0.5;
  json j;
  to_json(j, s);
  report(4, "default graph statistics", pass,
         "inter-video fraction " + fmt(s.inter_fraction) + ", average degree " + fmt(s.avg_degree), j);
}

void c5_explore_rates(const Corpus& corpus) {
  ActionScores s;
  s.candidates = {0, 1, 2, 3};
  s.scores = {0.1, 0.9, 0.3, -0.2};
  Rng rng(5);
  int agent_explored = 0;
  for (int i = 0; i < 10000; ++i) agent_explored += select_action(s, 0.1, rng).explored;
  int sim_explored = 0, sim_decisions = 0;
  while (sim_decisions < 10000) {
    const MomentId a = static_cast<MomentId>(rng.uniform_int(corpus.size()));
    const MomentId b = static_cast<MomentId>(rng.uniform_int(corpus.size()));
    if (a == b) continue;
    const auto fb = simulate_feedback(corpus, a, b, 0.1, rng);
    if (!fb) continue;
    ++sim_decisions;
    sim_explored += fb->explored;
  }
  const double ra = agent_explored / 10000.0, rs = sim_explored / 10000.0;
  report(5, "epsilon-greedy explore rate", std::abs(ra - 0.1) <= 0.02 && std::abs(rs - 0.1) <= 0.02,
         "agent " + fmt(ra, 4) + ", simulator " + fmt(rs, 4) + " over 10000 decisions each");
}

void c6_exploit_oracle() {
  Rng rng(6);
  const std::uint32_t V = 12;
  int mismatches = 0, ties = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto rec = random_profile(rng, V, 1 + rng.uniform_int(6));
    const auto tgt = random_profile(rng, V, 1 + rng.uniform_int(6));
    std::optional<Feedback> want;
    double best = 0.0;
    int n_best = 0;
    for (ConceptId c = 0; c < V; ++c) {
      const double dev = tgt.prob(c) - rec.prob(c);
      if (std::abs(dev) > best) {
        best = std::abs(dev);
        want = Feedback{c, dev > 0 ? 1 : -1};
        n_best = 1;
      } else if (std::abs(dev) == best && best > 0.0) {
        ++n_best;
      }
    }
    ties += n_best > 1;
    mismatches += exploit_feedback(rec, tgt) != want;
  }
  report(6, "simulator exploit branch", mismatches == 0 && ties > 0,
         std::to_string(mismatches) + " mismatches vs exhaustive scan over 1000 pairs (" + std::to_string(ties) +
             " with ties)");
}

// ---------------------------------------------------------------- experiments

struct Experiment {
  Corpus corpus;
  NavGraph graph;
  QuerySplit split;
};

struct SeedModels {
  std::uint64_t seed;
  PolicyParams full;
  PolicyParams no_feedback;
  double seconds;  // train both + eval all three
};

// Reference recall (TVR, d0 = 1..4), printed next to ours for orientation only.
const std::map<std::string, std::vector<double>> kReference = {
    {"random", {0.058, 0.044, 0.024, 0.007}},
    {"no_feedback", {0.489, 0.475, 0.442, 0.204}},
    {"full", {0.534, 0.495, 0.446, 0.216}},
};

std::vector<double> recall_means(const json& summary, const std::string& model) {
  for (const auto& m : summary)
    if (m["model"] == model) {
      std::vector<double> out;
      for (const auto& row : m["d0"]) out.push_back(row["recall_mean"]);
      return out;
    }
  throw std::runtime_error("model missing from summary: " + model);
}

std::vector<double> final_curve_gap(const json& summary, std::size_t d0_index) {
  std::vector<double> full, nf;
  for (const auto& m : summary) {
    if (m["model"] == "full") full = m["d0"][d0_index]["stepwise_mean"].get<std::vector<double>>();
    if (m["model"] == "no_feedback") nf = m["d0"][d0_index]["stepwise_mean"].get<std::vector<double>>();
  }
  std::vector<double> gap;
  for (std::size_t i = 0; i < full.size(); ++i) gap.push_back(full[i] - nf[i]);
  return gap;
}

void c7_c8_table(const Experiment& ex, const std::vector<std::uint64_t>& seeds, const TrainConfig& base,
                 const fs::path& out, std::vector<SeedModels>& models) {
  EvalOptions opts;
  std::vector<D0Run> runs;
  double worst_seed_seconds = 0.0;
  for (const auto seed : seeds) {
    const auto t0 = Clock::now();
    TrainConfig full = base;
    full.seed = seed;
    full.mode = TrainMode::full;
    TrainConfig nf = full;
    nf.mode = TrainMode::no_feedback;
    TrainResult rf = train(ex.corpus, ex.graph, ex.split.train, full);
    TrainResult rn = train(ex.corpus, ex.graph, ex.split.train, nf);
    const EvalAgent agents[] = {{"random", PolicyKind::random, nullptr, false},
                                {"no_feedback", PolicyKind::learned, &rn.params, false},
                                {"full", PolicyKind::learned, &rf.params, true}};
    for (const auto& a : agents) runs.push_back(eval_d0(a, ex.graph, ex.corpus, ex.split.eval, seed, opts));
    const double secs = since(t0);
    worst_seed_seconds = std::max(worst_seed_seconds, secs);
    std::cout << "  seed " << seed << ": trained and evaluated in " << fmt(secs, 1) << " s" << std::endl;
    models.push_back({seed, std::move(rf.params), std::move(rn.params), secs});
  }
  const json summary = summarize_d0(runs, false);
  write_text_file(out / "table_d0.json", summary.dump(2) + "\n");
  write_text_file(out / "table_d0.csv", d0_runs_csv(runs));

  std::cout << "  recall@d0 (mean +- std over " << seeds.size() << " seeds; reference in brackets)\n";
  for (const auto& m : summary) {
    const std::string name = m["model"];
    std::cout << "    " << std::left << std::setw(12) << name;
    for (std::size_t i = 0; i < m["d0"].size(); ++i) {
      const auto& row = m["d0"][i];
      std::cout << "  d0=" << row["d0"].get<int>() << " " << fmt(row["recall_mean"]) << "+-" << fmt(row["recall_std"])
                << " [" << fmt(kReference.at(name)[i]) << "]";
    }
    std::cout << "\n";
  }

  const auto r = recall_means(summary, "random");
  const auto n = recall_means(summary, "no_feedback");
  const auto f = recall_means(summary, "full");
  bool order = true, doubled = true;
  for (std::size_t i = 0; i < 3; ++i) {
    order = order && r[i] < n[i] && n[i] <= f[i];
    doubled = doubled && f[i] >= 2.0 * r[i];
  }
  bool decreasing = true;
  for (const auto* v : {&r, &n, &f})
    for (std::size_t i = 1; i < v->size(); ++i) decreasing = decreasing && (*v)[i] <= (*v)[i - 1];
  const bool fast = worst_seed_seconds < 15.0 * 60.0;
  std::ostringstream d;
  d << "Random<NoFeedback<=Full at d0 1-3: " << (order ? "yes" : "no") << "; Full>=2xRandom: "
    << (doubled ? "yes" : "no") << "; non-increasing in d0: " << (decreasing ? "yes" : "no")
    << "; slowest seed " << fmt(worst_seed_seconds, 1) << " s";
  report(7, "recall by start distance", order && doubled && decreasing && fast, d.str(),
         json{{"order", order}, {"full_vs_random", doubled}, {"non_increasing", decreasing},
              {"slowest_seed_seconds", worst_seed_seconds}, {"summary", summary}});

  bool curves_ok = true;
  std::vector<double> final_gap;
  for (const auto& m : summary)
    for (const auto& row : m["d0"]) {
      const auto c = row["stepwise_mean"].get<std::vector<double>>();
      for (std::size_t i = 1; i < c.size(); ++i) curves_ok = curves_ok && c[i] >= c[i - 1];
    }
  bool gap_ok = true;
  std::ostringstream g;
  for (std::size_t i = 0; i < summary[0]["d0"].size(); ++i) {
    const auto gap = final_curve_gap(summary, i);
    final_gap.push_back(gap.back());
    gap_ok = gap_ok && gap.back() >= 0.0;
    g << (i ? ", " : "") << "d0=" << summary[0]["d0"][i]["d0"].get<int>() << " " << fmt(gap.back());
  }
  report(8, "stepwise recall curves", curves_ok && gap_ok,
         std::string("curves non-decreasing: ") + (curves_ok ? "yes" : "no") + "; final Full-NoFeedback gap " + g.str(),
         json{{"final_gap", final_gap}});
}

void c9_ranked(const Experiment& ex, const std::vector<SeedModels>& models, const fs::path& out) {
  // counts pooled over the seed models; the engine ranking itself is fixed
  EvalOptions opts;
  std::vector<RankBucket> pooled = default_rank_buckets();
  json runs = json::array();
  std::size_t skipped = 0;
  for (const auto& m : models) {
    EvalAgent agent{"full", PolicyKind::learned, &m.full, true};
    const RankedRun run = eval_ranked(agent, ex.graph, ex.corpus, ex.split.eval, EngineConfig{}, m.seed, opts);
    for (std::size_t b = 0; b < pooled.size(); ++b) {
      pooled[b].queries += run.buckets[b].queries;
      pooled[b].found += run.buckets[b].found;
    }
    skipped = run.skipped_top10;
    json j = to_json_value(run);
    j["seed"] = m.seed;
    runs.push_back(j);
    write_text_file(out / ("rank_points_seed" + std::to_string(m.seed) + ".csv"), rank_points_csv(run));
  }
  write_text_file(out / "table_ranked.json", runs.dump(2) + "\n");
  bool non_increasing = true;
  double prev = 2.0;
  std::size_t found_beyond_100 = 0;
  std::ostringstream d;
  json buckets = json::array();
  for (const auto& b : pooled) {
    if (b.lo >= 100) found_beyond_100 += b.found;
    buckets.push_back({{"bucket", b.label}, {"queries", b.queries}, {"found", b.found}, {"found_fraction", b.found_fraction()}});
    if (b.queries == 0) continue;
    non_increasing = non_increasing && b.found_fraction() <= prev;
    prev = b.found_fraction();
    d << b.label << " " << fmt(100.0 * b.found_fraction(), 1) << "% (" << b.found << "/" << b.queries << ") ";
  }
  d << "over " << models.size() << " seeds; " << skipped << " targets already in the top 10";
  report(9, "found rate by engine rank", non_increasing && found_beyond_100 > 0, d.str(),
         json{{"non_increasing", non_increasing}, {"found_beyond_100", found_beyond_100}, {"buckets", buckets}});
}

void c10_sweep(const Experiment& ex, const std::vector<std::uint64_t>& seeds, TrainConfig base, int epochs,
               const fs::path& out) {
  base.epochs = epochs;
  EvalOptions opts;
  const int ks[] = {3, 4, 5, 6};
  const auto t0 = Clock::now();
  const auto sweep = sweep_k(ex.corpus, ex.graph, ex.split.train, ex.split.eval, base, ks, seeds, opts);
  const json j = to_json_value(sweep);
  write_text_file(out / "sweep_k.json", j.dump(2) + "\n");

  bool windows_up = true;
  for (std::size_t i = 1; i < sweep.size(); ++i) windows_up = windows_up && sweep[i].mean_window > sweep[i - 1].mean_window;
  // largest d0 with sessions under every k
  std::size_t far = 0;
  for (std::size_t b = 0; b < opts.d0s.size(); ++b) {
    bool feasible = true;
    for (const auto& e : sweep)
      for (const auto& r : e.runs) feasible = feasible && r.buckets[b].sessions > 0;
    if (feasible) far = b;
  }
  auto mean_recall = [&](const SweepEntry& e, std::size_t b) {
    std::vector<double> xs;
    for (const auto& r : e.runs) xs.push_back(r.buckets[b].recall());
    return mean_std(xs).mean;
  };
  const SweepEntry& k3 = sweep.front();
  const SweepEntry& k6 = sweep.back();
  const bool near_ok = mean_recall(k3, 0) >= mean_recall(k6, 0);
  const bool far_ok = mean_recall(k6, far) >= mean_recall(k3, far);
  std::ostringstream d;
  d << "mean window";
  for (const auto& e : sweep) d << " k" << e.k << "=" << fmt(e.mean_window, 1);
  d << "; d0=1 k3 " << fmt(mean_recall(k3, 0)) << " vs k6 " << fmt(mean_recall(k6, 0)) << "; d0=" << opts.d0s[far]
    << " k6 " << fmt(mean_recall(k6, far)) << " vs k3 " << fmt(mean_recall(k3, far)) << "; " << seeds.size()
    << " seeds, " << epochs << " epochs, " << fmt(since(t0), 0) << " s";
  report(10, "observation range sweep", windows_up && near_ok && far_ok && seeds.size() >= 5, d.str(), j);
}

void c11_determinism(const CorpusConfig& cc, const fs::path& out) {
  const fs::path dir = out / "determinism";
  bool same = true;
  std::vector<std::string> differing;
  std::string report_text[2];
  for (int run = 0; run < 2; ++run) {
    const fs::path d = dir / (run ? "b" : "a");
    fs::create_directories(d);
    const Corpus corpus = gen_corpus(cc);
    save_corpus(corpus, d / "corpus.jsonl");
    const NavGraph graph = build_graph(corpus, GraphBuildConfig{});
    save_graph(graph, d / "graph.json");
    const QuerySplit split = split_queries(corpus, 200, 200, cc.seed + 1);
    TrainConfig tc;
    tc.epochs = 2;
    tc.seed = 4;
    const TrainResult tr = train(corpus, graph, split.train, tc);
    save_policy(tr.params, d / "model.ckpt", checkpoint_meta(tc, corpus, graph));
    write_text_file(d / "train.json", to_json_value(tr.report, false).dump(2));
    EvalAgent agent{"full", PolicyKind::learned, &tr.params, true};
    const D0Run r = eval_d0(agent, graph, corpus, split.eval, 4, EvalOptions{});
    const std::vector<D0Run> runs{r};
    write_text_file(d / "eval.json", summarize_d0(runs).dump(2));
    write_text_file(d / "eval.csv", d0_runs_csv(runs));
  }
  std::size_t files = 0;
  for (const auto& entry : fs::directory_iterator(dir / "a")) {
    const auto name = entry.path().filename();
    ++files;
    if (read_bytes(entry.path()) != read_bytes(dir / "b" / name)) {
      same = false;
      differing.push_back(name.string());
    }
  }
  std::string d = std::to_string(files) + " artifact files compared byte for byte";
  if (!same) {
    d += "; differ:";
    for (const auto& n : differing) d += " " + n;
  }
  report(11, "seeded determinism", same && files >= 7, d);
}

void c12_latency(const Experiment& ex, const PolicyParams& params) {
  // One greedy step from cold: window, scoring (no embedding cache), argmax,
  // simulated feedback and the query update.
  Rng rng(12);
  std::vector<double> ms;
  volatile double sink = 0.0;
  const int k = 3;
  for (int i = 0; i < 300; ++i) {
    const QuerySpec& q = ex.split.eval[i % ex.split.eval.size()];
    const MomentId cur = static_cast<MomentId>(rng.uniform_int(ex.corpus.size()));
    const Vec q0 = encode_query(params, q);
    const auto t0 = Clock::now();
    const MomentId excl[] = {cur};
    const auto window = observation_window(ex.graph, cur, k, excl);
    if (window.members.empty()) continue;
    const ActionScores scores = score_actions(params, q0, window, ex.corpus);
    const SelectedAction sel = select_action(scores, 0.0, rng);
    std::vector<Feedback> fb;
    if (sel.moment != q.target)
      if (auto s = simulate_feedback(ex.corpus, sel.moment, q.target, 0.1, rng)) fb.push_back(s->feedback);
    const Vec q1 = update_query(params, q0, q0, fb);
    ms.push_back(1000.0 * since(t0));
    sink = sink + q1[0];
  }
  std::sort(ms.begin(), ms.end());
  const double p50 = ms[ms.size() / 2], worst = ms.back();
  report(12, "greedy step latency", worst < 50.0,
         "k=3, " + std::to_string(ms.size()) + " steps: median " + fmt(p50, 3) + " ms, max " + fmt(worst, 3) + " ms");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"momentnav acceptance run"};
  std::string out = "acceptance_out";
  int n_seeds = 5;
  int sweep_epochs = 5;
  bool strict = false;
  app.add_option("--out", out, "output directory");
  app.add_option("--seeds", n_seeds, "protocol seeds for the experiment criteria");
  app.add_option("--sweep-epochs", sweep_epochs, "training epochs per model in the k sweep");
  app.add_option("--only", only, "run only these criteria")->delimiter(',');
  app.add_flag("--strict", strict, "exit non-zero when any criterion fails");
  CLI11_PARSE(app, argc, argv);
  auto want = [&](int id) { return only.empty() || std::count(only.begin(), only.end(), id); };

  const auto t0 = Clock::now();
  try {
    fs::create_directories(out);
    if (want(1)) c1_gradcheck(1);
    if (want(2)) c2_reward_returns();
    if (want(3)) c3_distances_windows();

    const CorpusConfig cc;
    Experiment ex{gen_corpus(cc), {}, {}};
    ex.graph = build_graph(ex.corpus, GraphBuildConfig{});
    ex.split = split_queries(ex.corpus, 1000, 1000, cc.seed + 1);
    std::cout << "corpus: " << cc.n_videos << " videos x " << cc.clips_per_video << " clips, " << ex.split.train.size()
              << " train / " << ex.split.eval.size() << " eval queries" << std::endl;

    if (want(4)) c4_graph_stats(ex.corpus, ex.graph);
    if (want(5)) c5_explore_rates(ex.corpus);
    if (want(6)) c6_exploit_oracle();

    std::vector<std::uint64_t> seeds;
    for (int s = 1; s <= n_seeds; ++s) seeds.push_back(static_cast<std::uint64_t>(s));
    const TrainConfig base;
    std::vector<SeedModels> models;
    if (want(7) || want(8) || want(9) || want(12)) c7_c8_table(ex, seeds, base, out, models);
    if (want(9)) c9_ranked(ex, models, out);
    if (want(10)) c10_sweep(ex, seeds, base, sweep_epochs, out);
    if (want(11)) c11_determinism(cc, out);
    if (want(12)) c12_latency(ex, models.front().full);
  } catch (const std::exception& e) {
    std::cout << "FAIL [run] acceptance aborted: " << e.what() << std::endl;
    return 2;
  }

  json all = json::array();
  int failed = 0;
  for (const auto& o : outcomes) {
    failed += !o.pass;
    all.push_back({{"id", o.id}, {"name", o.name}, {"pass", o.pass}, {"detail", o.detail}, {"data", o.data}});
  }
  write_text_file(fs::path(out) / "acceptance.json", all.dump(2) + "\n");
  std::cout << outcomes.size() - failed << "/" << outcomes.size() << " criteria passed in " << fmt(since(t0), 0) << " s"
            << std::endl;
  return strict && failed ? 1 : 0;
}
