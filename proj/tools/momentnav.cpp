// momentnav command line: artifact generation, training, evaluation,
// simulator traces, the HTTP service and the gradient check.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "momentnav/agent.hpp"
#include "momentnav/checkpoint.hpp"
#include "momentnav/corpus.hpp"
#include "momentnav/environment.hpp"
#include "momentnav/errors.hpp"
#include "momentnav/evalharness.hpp"
#include "momentnav/gradsuite.hpp"
#include "momentnav/json.hpp"
#include "momentnav/nav_graph.hpp"
#include "momentnav/service.hpp"
#include "momentnav/trainer.hpp"

namespace fs = std::filesystem;
using namespace momentnav;

namespace {

constexpr std::size_t kTrainQueries = 1000;
constexpr std::size_t kEvalQueries = 1000;

struct Common {
  std::optional<std::uint64_t> seed;
  std::string config;
  bool json_out = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--seed", c.seed, "random seed");
  cmd->add_option("--config", c.config, "JSON config file")->check(CLI::ExistingFile);
  cmd->add_flag("--json", c.json_out, "machine-readable output");
}

// Section `name` of the config file, or an empty object.
json config_section(const Common& c, const std::string& name) {
  if (c.config.empty()) return json::object();
  const json doc = read_json_file(c.config);
  if (doc.contains(name)) return doc.at(name);
  return json::object();
}

template <typename T>
T from_section(const Common& c, const std::string& name) {
  return config_section(c, name).get<T>();
}

void emit(const Common& c, const json& j, const std::string& text) {
  if (c.json_out) {
    std::cout << j.dump(2) << '\n';
  } else {
    std::cout << text;
  }
}

std::vector<std::uint64_t> parse_seed_list(const std::string& s) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    out.push_back(std::stoull(item));
  }
  if (out.empty()) throw ArgumentError("empty seed list");
  return out;
}

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(std::stoi(item));
  }
  if (out.empty()) throw ArgumentError("empty list: " + s);
  return out;
}

// Train/eval queries: an explicit file, or the default split drawn from the corpus.
// The default split is only drawn when a needed side has no file.
QuerySplit resolve_queries(const Corpus& corpus, const std::string& train_path, const std::string& eval_path,
                           bool need_train = true, bool need_eval = true) {
  QuerySplit split;
  if ((need_train && train_path.empty()) || (need_eval && eval_path.empty())) {
    split = split_queries(corpus, kTrainQueries, kEvalQueries, corpus.config().seed + 1);
  }
  if (!train_path.empty()) split.train = load_queries(train_path, corpus);
  if (!eval_path.empty()) split.eval = load_queries(eval_path, corpus);
  return split;
}

std::string model_name(const json& meta, const fs::path& path) {
  if (meta.contains("train") && meta["train"].contains("mode")) return meta["train"]["mode"].get<std::string>();
  return path.stem().string();
}

void write_listed(std::vector<std::string>& listed, const fs::path& path, const std::string& text) {
  write_text_file(path, text);
  listed.push_back(path.string());
}

// ---------------------------------------------------------------------------

int cmd_gen_corpus(const Common& c, const std::string& out, std::optional<std::uint32_t> videos,
                   std::optional<std::uint32_t> clips) {
  CorpusConfig cfg = from_section<CorpusConfig>(c, "corpus");
  if (c.seed) cfg.seed = *c.seed;
  if (videos) cfg.n_videos = *videos;
  if (clips) cfg.clips_per_video = *clips;
  const Corpus corpus = gen_corpus(cfg);
  save_corpus(corpus, out);
  const json j{{"path", out}, {"moments", corpus.size()}, {"fingerprint", corpus_fingerprint(corpus)}};
  emit(c, j, "wrote " + out + " (" + std::to_string(corpus.size()) + " moments, " + corpus_fingerprint(corpus) + ")\n");
  return 0;
}

int cmd_gen_queries(const Common& c, const std::string& corpus_path, const std::string& out, std::size_t count,
                    std::optional<double> dropout) {
  const Corpus corpus = load_corpus(corpus_path);
  const std::uint64_t seed = c.seed.value_or(corpus.config().seed + 1);
  const auto queries = gen_queries(corpus, count, dropout.value_or(corpus.config().query_concept_dropout), seed,
                                   corpus.config().query_top_concepts);
  save_queries(queries, out);
  emit(c, json{{"path", out}, {"queries", queries.size()}}, "wrote " + out + " (" + std::to_string(queries.size()) + " queries)\n");
  return 0;
}

int cmd_build_graph(const Common& c, const std::string& corpus_path, const std::string& out,
                    std::optional<double> avg_degree, std::optional<double> cross_ratio) {
  GraphBuildConfig cfg = from_section<GraphBuildConfig>(c, "graph");
  if (avg_degree) cfg.target_avg_degree = *avg_degree;
  if (cross_ratio) cfg.cross_ratio = *cross_ratio;
  const Corpus corpus = load_corpus(corpus_path);
  const NavGraph g = build_graph(corpus, cfg);
  save_graph(g, out);
  const GraphStats st = graph_stats(g, corpus);
  std::ostringstream os;
  os << "wrote " << out << "\n  nodes " << st.nodes << ", edges " << st.edges << ", avg degree " << st.avg_degree
     << "\n  inter-video " << st.inter_fraction << ", intra " << st.intra_fraction << ", temporal "
     << st.temporal_fraction << "\n";
  emit(c, json{{"path", out}, {"stats", st}}, os.str());
  return 0;
}

struct TrainArgs {
  std::string corpus, graph, queries, out, report, mode;
  std::optional<int> epochs, batch_size, k;
  std::optional<double> lr;
};

int cmd_train(const Common& c, const TrainArgs& a) {
  TrainConfig cfg = from_section<TrainConfig>(c, "train");
  if (!a.mode.empty()) cfg.mode = train_mode_from_string(a.mode);
  if (c.seed) cfg.seed = *c.seed;
  if (a.epochs) cfg.epochs = *a.epochs;
  if (a.batch_size) cfg.batch_size = *a.batch_size;
  if (a.lr) cfg.lr = *a.lr;
  if (a.k) cfg.rollout.k = *a.k;
  const Corpus corpus = load_corpus(a.corpus);
  const NavGraph graph = load_graph(a.graph);
  if (const auto bad = artifact_mismatch(corpus, graph, json::object()); !bad.empty()) throw ConfigError(bad);
  const QuerySplit split = resolve_queries(corpus, a.queries, "", true, false);
  TrainResult res = train(corpus, graph, split.train, cfg);
  cfg.agent = res.params.config;
  save_policy(res.params, a.out, checkpoint_meta(cfg, corpus, graph));
  std::vector<std::string> files{a.out};
  if (!a.report.empty()) {
    write_json_file(a.report, to_json_value(res.report, false));
    files.push_back(a.report);
    const fs::path timing = fs::path(a.report).replace_extension(".timing.json");
    write_json_file(timing, to_json_value(res.report, true));
    files.push_back(timing.string());
  }
  std::ostringstream os;
  for (const auto& e : res.report.epochs) {
    os << "epoch " << e.epoch << "  loss " << e.loss.total << "  return " << e.mean_return << "  train recall "
       << e.train_recall << "\n";
  }
  for (const auto& f : files) os << "wrote " << f << "\n";
  emit(c, json{{"files", files}, {"report", to_json_value(res.report, true)}}, os.str());
  return 0;
}

struct EvalArgs {
  std::string mode = "d0";
  std::vector<std::string> models;
  std::string corpus, graph, train_queries, eval_queries, report_dir;
  std::string seeds = "1";
  std::string d0s;
  std::string ks = "3,4,5,6";
  bool baselines = false;
  bool dump = false;
  std::optional<int> epochs;
};

int cmd_eval(const Common& c, const EvalArgs& a) {
  const Corpus corpus = load_corpus(a.corpus);
  const NavGraph graph = load_graph(a.graph);
  const QuerySplit split = resolve_queries(corpus, a.train_queries, a.eval_queries, a.mode == "sweep-k", true);
  const json eval_cfg = config_section(c, "eval");
  std::vector<std::uint64_t> seeds = parse_seed_list(a.seeds);
  if (c.seed && a.seeds == "1") seeds = {*c.seed};
  EvalOptions opts;
  if (eval_cfg.contains("rollout")) opts.rollout = eval_cfg.at("rollout").get<RolloutOptions>();
  if (!a.d0s.empty()) opts.d0s = parse_int_list(a.d0s);
  fs::create_directories(a.report_dir);
  const fs::path dir(a.report_dir);

  std::vector<PolicyParams> params;
  std::vector<std::string> names;
  std::vector<json> metas;
  for (const auto& m : a.models) {
    json meta;
    params.push_back(load_policy(m, &meta));
    if (const auto bad = artifact_mismatch(corpus, graph, meta); !bad.empty()) throw ConfigError(m + ": " + bad);
    names.push_back(model_name(meta, m));
    metas.push_back(meta);
  }
  std::vector<EvalAgent> agents;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const bool fb = !(metas[i].contains("train") && metas[i]["train"].value("mode", "") == "no_feedback");
    agents.push_back({names[i], PolicyKind::learned, &params[i], fb});
  }
  if (a.baselines) {
    agents.push_back({"random", PolicyKind::random, nullptr, false});
    agents.push_back({"oracle", PolicyKind::oracle, nullptr, false});
  }

  std::vector<std::string> listed;
  json summary;
  if (a.mode == "d0") {
    if (agents.empty()) throw ArgumentError("eval --mode d0 needs --model or --baselines");
    std::vector<D0Run> runs;
    for (const auto& agent : agents) {
      for (const auto seed : seeds) {
        EvalOptions o = opts;
        if (a.dump) o.trajectory_dump = dir / ("trajectories_" + agent.name + "_" + std::to_string(seed) + ".jsonl");
        runs.push_back(eval_d0(agent, graph, corpus, split.eval, seed, o));
        if (a.dump) listed.push_back(o.trajectory_dump.string());
      }
    }
    summary = summarize_d0(runs, false);
    write_listed(listed, dir / "d0.json", summary.dump(2) + "\n");
    write_listed(listed, dir / "d0.csv", d0_runs_csv(runs));
    write_listed(listed, dir / "d0.timing.json", summarize_d0(runs, true).dump(2) + "\n");
  } else if (a.mode == "ranked") {
    if (agents.empty()) throw ArgumentError("eval --mode ranked needs --model or --baselines");
    EngineConfig engine = eval_cfg.contains("engine") ? eval_cfg.at("engine").get<EngineConfig>() : EngineConfig{};
    summary = json::array();
    for (const auto& agent : agents) {
      EvalOptions o = opts;
      if (a.dump) o.trajectory_dump = dir / ("trajectories_ranked_" + agent.name + ".jsonl");
      const RankedRun run = eval_ranked(agent, graph, corpus, split.eval, engine, seeds.front(), o);
      if (a.dump) listed.push_back(o.trajectory_dump.string());
      summary.push_back(to_json_value(run));
      write_listed(listed, dir / ("rank_points_" + agent.name + ".csv"), rank_points_csv(run));
    }
    write_listed(listed, dir / "ranked.json", summary.dump(2) + "\n");
  } else if (a.mode == "sweep-k") {
    TrainConfig tc = from_section<TrainConfig>(c, "train");
    if (!metas.empty() && metas.front().contains("train")) tc = metas.front()["train"].get<TrainConfig>();
    if (a.epochs) tc.epochs = *a.epochs;
    const auto ks = parse_int_list(a.ks);
    const auto sweep = sweep_k(corpus, graph, split.train, split.eval, tc, ks, seeds, opts);
    summary = to_json_value(sweep);
    std::vector<D0Run> runs;
    for (const auto& e : sweep) {
      for (auto r : e.runs) {
        r.model = "k" + std::to_string(e.k);
        runs.push_back(std::move(r));
      }
    }
    write_listed(listed, dir / "sweep.json", summary.dump(2) + "\n");
    write_listed(listed, dir / "sweep.csv", d0_runs_csv(runs));
  } else {
    throw ArgumentError("unknown eval mode " + a.mode + " (d0, ranked, sweep-k)");
  }
  std::string text;
  for (const auto& f : listed) text += f + "\n";
  emit(c, json{{"files", listed}, {"summary", summary}}, text);
  return 0;
}

struct SimArgs {
  std::string corpus, graph, model, queries;
  std::uint32_t query_id = 0;
  std::optional<int> d0;
  std::optional<MomentId> m0;
  bool verbose = false;
  std::string dump;
};

std::string feedback_text(const Corpus& corpus, const std::vector<Feedback>& fbs) {
  std::string s;
  for (const auto& f : fbs) {
    if (!s.empty()) s += ' ';
    s += (f.sign > 0 ? "+" : "-") + corpus.vocab().name(f.concept_id);
  }
  return s.empty() ? "(none)" : s;
}

int cmd_simulate(const Common& c, const SimArgs& a) {
  const Corpus corpus = load_corpus(a.corpus);
  const NavGraph graph = load_graph(a.graph);
  json meta;
  const PolicyParams params = load_policy(a.model, &meta);
  if (const auto bad = artifact_mismatch(corpus, graph, meta); !bad.empty()) throw ConfigError(bad);
  std::vector<QuerySpec> pool;
  if (!a.queries.empty()) {
    pool = load_queries(a.queries, corpus);
  } else {
    const QuerySplit split = resolve_queries(corpus, "", "");
    pool = split.train;
    pool.insert(pool.end(), split.eval.begin(), split.eval.end());
  }
  auto it = std::find_if(pool.begin(), pool.end(), [&](const QuerySpec& q) { return q.id == a.query_id; });
  if (it == pool.end()) throw ArgumentError("no query with id " + std::to_string(a.query_id));
  const QuerySpec& q = *it;

  const std::uint64_t seed = c.seed.value_or(1);
  RolloutOptions ro;
  const json sim_cfg = config_section(c, "simulate");
  if (sim_cfg.contains("rollout")) ro = sim_cfg.at("rollout").get<RolloutOptions>();
  ro.policy = PolicyKind::learned;
  ro.agent_epsilon = 0.0;
  if (meta.contains("train") && meta["train"].value("mode", "") == "no_feedback") ro.use_feedback = false;

  DistanceOracle oracle(graph);
  Rng start_rng(derive_seed(seed, {q.id, 0x51a7}));
  MomentId m0;
  std::string origin;
  if (a.m0) {
    if (!corpus.contains(*a.m0)) throw ArgumentError("m0 out of range");
    m0 = *a.m0;
    origin = "given";
  } else if (a.d0) {
    auto s = sample_start(oracle, graph, q.target, *a.d0, start_rng);
    if (!s) throw ArgumentError("no moment at distance " + std::to_string(*a.d0) + " from the target");
    m0 = *s;
    origin = "d0=" + std::to_string(*a.d0);
  } else {
    m0 = engine_order(corpus, q, EngineConfig{}).front();
    origin = "engine top-1";
  }
  Rng rng(derive_seed(seed, {q.id, 0x5e55}));
  const Trajectory traj = rollout_episode(&params, graph, corpus, q, m0, ro, rng, oracle);
  if (!a.dump.empty()) write_trajectories(a.dump, std::span<const Trajectory>(&traj, 1));

  std::ostringstream os;
  auto describe = [&](MomentId m) {
    const Moment& mo = corpus.moment(m);
    std::string s = "m" + std::to_string(m) + " (video " + std::to_string(mo.video_id) + " clip " +
                    std::to_string(mo.clip_index) + ")";
    return s;
  };
  os << "query " << q.id << ": ";
  for (const auto& w : q.concept_bag) os << corpus.vocab().name(w.concept_id) << ' ';
  os << "\ntarget " << describe(q.target) << "\nstart  " << describe(m0) << " [" << origin << "], distance "
     << oracle.distance(m0, q.target) << "\n";
  for (const auto& st : traj.steps) {
    os << "t=" << st.t << "  window " << st.window.size() << "  recommend " << describe(st.chosen) << "  d " << st.d_t
       << " -> " << st.d_next << "  reward " << st.reward;
    if (!st.feedback.empty()) os << "  feedback " << feedback_text(corpus, st.feedback) << (st.feedback_explored ? " (explore)" : "");
    os << "\n";
    if (a.verbose) {
      const Moment& mo = corpus.moment(st.chosen);
      os << "      top concepts:";
      for (std::size_t i = 0; i < std::min<std::size_t>(5, mo.profile.entries.size()); ++i) {
        os << ' ' << corpus.vocab().name(mo.profile.entries[i].concept_id) << '(' << mo.profile.entries[i].prob << ')';
      }
      os << "\n      return " << st.ret << (st.target_in_window(q.target) ? "  target in window" : "") << "\n";
    }
  }
  os << "status " << to_string(traj.status);
  if (traj.success_step() > 0) os << " after " << traj.success_step() << " round(s)";
  os << "\n";
  emit(c, trajectory_to_json(traj), os.str());
  return 0;
}

struct ServeArgs {
  std::optional<int> port;
  std::string corpus, graph, model, queries;
};

int cmd_serve(const Common& c, const ServeArgs& a) {
  ApiConfig cfg;
  if (!c.config.empty()) {
    const json doc = read_json_file(c.config);
    cfg = (doc.contains("service") ? doc.at("service") : doc).get<ApiConfig>();
  }
  apply_env_overrides(cfg);
  if (a.port) cfg.port = *a.port;
  if (!a.corpus.empty()) cfg.corpus_path = a.corpus;
  if (!a.graph.empty()) cfg.graph_path = a.graph;
  if (!a.model.empty()) cfg.checkpoint_path = a.model;
  if (!a.queries.empty()) cfg.queries_path = a.queries;
  if (c.seed) cfg.seed = *c.seed;
  cfg.validate();
  ServiceArtifacts art = load_artifacts(cfg);
  if (!art.mismatch.empty()) throw ConfigError("artifact mismatch: " + art.mismatch);
  Service service(cfg, std::move(art));
  service.set_log(&std::cerr);
  std::cerr << json{{"event", "listening"}, {"host", cfg.host}, {"port", cfg.port}}.dump() << std::endl;
  run_http_server(service);
  return 0;
}

int cmd_gradcheck(const Common& c, std::size_t configs) {
  const GradSuiteReport r = run_gradcheck_suite(configs, c.seed.value_or(1));
  const bool ok = r.passed(1e-4);
  const auto& w = r.cases.at(r.worst_case);
  std::ostringstream os;
  os << "gradcheck: " << r.cases.size() << " configurations, worst relative error " << r.max_rel_error << " ("
     << w.kind << ", " << w.report.worst_param << ") in " << r.seconds << " s: " << (ok ? "PASS" : "FAIL") << "\n";
  emit(c, to_json_value(r), os.str());
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"momentnav: interactive video moment navigation"};
  app.require_subcommand(1);

  Common common;

  std::string out, corpus, graph, queries;
  std::optional<std::uint32_t> videos, clips;
  auto* gc = app.add_subcommand("gen-corpus", "generate a synthetic corpus");
  add_common(gc, common);
  gc->add_option("--out", out, "corpus file")->required();
  gc->add_option("--videos", videos);
  gc->add_option("--clips", clips);

  std::size_t count = 2000;
  std::optional<double> dropout;
  auto* gq = app.add_subcommand("gen-queries", "generate queries with known targets");
  add_common(gq, common);
  gq->add_option("--corpus", corpus)->required()->check(CLI::ExistingFile);
  gq->add_option("--out", out)->required();
  gq->add_option("--count", count);
  gq->add_option("--dropout", dropout);

  std::optional<double> avg_degree, cross_ratio;
  auto* bg = app.add_subcommand("build-graph", "build the navigation graph");
  add_common(bg, common);
  bg->add_option("--corpus", corpus)->required()->check(CLI::ExistingFile);
  bg->add_option("--out", out)->required();
  bg->add_option("--avg-degree", avg_degree);
  bg->add_option("--cross-ratio", cross_ratio);

  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "train a navigator");
  add_common(tr, common);
  tr->add_option("--corpus", ta.corpus)->required()->check(CLI::ExistingFile);
  tr->add_option("--graph", ta.graph)->required()->check(CLI::ExistingFile);
  tr->add_option("--queries", ta.queries, "training queries (default: built-in split)");
  tr->add_option("--mode", ta.mode, "full | imitation | no-feedback");
  tr->add_option("--epochs", ta.epochs);
  tr->add_option("--batch-size", ta.batch_size);
  tr->add_option("--lr", ta.lr);
  tr->add_option("--k", ta.k);
  tr->add_option("--out", ta.out, "checkpoint path")->required();
  tr->add_option("--report", ta.report, "training report (JSON)");

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "evaluate checkpoints");
  add_common(ev, common);
  ev->add_option("--mode", ea.mode, "d0 | ranked | sweep-k");
  ev->add_option("--model", ea.models, "checkpoint (repeatable)");
  ev->add_option("--corpus", ea.corpus)->required()->check(CLI::ExistingFile);
  ev->add_option("--graph", ea.graph)->required()->check(CLI::ExistingFile);
  ev->add_option("--train-queries", ea.train_queries);
  ev->add_option("--queries", ea.eval_queries, "evaluation queries (default: built-in split)");
  ev->add_option("--report", ea.report_dir, "output directory")->required();
  ev->add_option("--seeds", ea.seeds, "comma-separated protocol seeds");
  ev->add_option("--d0", ea.d0s, "comma-separated d0 values");
  ev->add_option("--ks", ea.ks, "sweep-k: comma-separated k values");
  ev->add_option("--epochs", ea.epochs, "sweep-k: training epochs");
  ev->add_flag("--baselines", ea.baselines, "also evaluate the random and oracle agents");
  ev->add_flag("--dump-trajectories", ea.dump);

  SimArgs sa;
  auto* sim = app.add_subcommand("simulate", "print one simulator-driven session");
  add_common(sim, common);
  sim->add_option("--corpus", sa.corpus)->required()->check(CLI::ExistingFile);
  sim->add_option("--graph", sa.graph)->required()->check(CLI::ExistingFile);
  sim->add_option("--model", sa.model)->required()->check(CLI::ExistingFile);
  sim->add_option("--queries", sa.queries);
  sim->add_option("--query-id", sa.query_id)->required();
  sim->add_option("--d0", sa.d0, "start at this distance from the target");
  sim->add_option("--m0", sa.m0, "start moment (default: engine top-1)");
  sim->add_option("--dump", sa.dump, "write the trajectory as JSON lines");
  sim->add_flag("--verbose", sa.verbose);

  ServeArgs sv;
  auto* serve = app.add_subcommand("serve", "run the HTTP session service");
  add_common(serve, common);
  serve->add_option("--port", sv.port);
  serve->add_option("--corpus", sv.corpus);
  serve->add_option("--graph", sv.graph);
  serve->add_option("--model", sv.model);
  serve->add_option("--queries", sv.queries);

  std::size_t configs = 100;
  auto* gck = app.add_subcommand("gradcheck", "finite-difference check of every backward pass");
  add_common(gck, common);
  gck->add_option("--configs", configs);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gc->parsed()) return cmd_gen_corpus(common, out, videos, clips);
    if (gq->parsed()) return cmd_gen_queries(common, corpus, out, count, dropout);
    if (bg->parsed()) return cmd_build_graph(common, corpus, out, avg_degree, cross_ratio);
    if (tr->parsed()) return cmd_train(common, ta);
    if (ev->parsed()) return cmd_eval(common, ea);
    if (sim->parsed()) return cmd_simulate(common, sa);
    if (serve->parsed()) return cmd_serve(common, sv);
    if (gck->parsed()) return cmd_gradcheck(common, configs);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
