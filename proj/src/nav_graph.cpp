#include "momentnav/nav_graph.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <set>
#include <unordered_set>

#include "momentnav/checkpoint.hpp"
#include "momentnav/errors.hpp"

namespace momentnav {

namespace {

std::uint64_t pair_key(MomentId a, MomentId b) {
  if (a > b) std::swap(a, b);
  return (std::uint64_t{a} << 32) | b;
}

struct Candidate {
  double sim;
  MomentId a;
  MomentId b;
  EdgeKind kind;
};

bool by_similarity(const Candidate& x, const Candidate& y) {
  if (x.sim != y.sim) return x.sim > y.sim;
  if (x.a != y.a) return x.a < y.a;
  return x.b < y.b;
}

// floor((i+1) * rate) - floor(i * rate): spreads a fractional per-node quota
// over consecutive nodes so that the running total tracks rate * n.
int diffused_quota(std::size_t i, double rate) {
  return static_cast<int>(std::floor((i + 1) * rate + 1e-9) - std::floor(i * rate + 1e-9));
}

class EdgeBuilder {
 public:
  explicit EdgeBuilder(std::size_t n) : adjacency_(n), kinds_(n) {}

  bool has(MomentId a, MomentId b) const { return keys_.contains(pair_key(a, b)); }

  void add(MomentId a, MomentId b, EdgeKind kind) {
    if (a == b || !keys_.insert(pair_key(a, b)).second) return;
    adjacency_[a].push_back(b);
    kinds_[a].push_back(kind);
    adjacency_[b].push_back(a);
    kinds_[b].push_back(kind);
  }

  NavGraph finish() {
    for (std::size_t i = 0; i < adjacency_.size(); ++i) {
      std::vector<std::size_t> order(adjacency_[i].size());
      for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
      std::sort(order.begin(), order.end(),
                [&](std::size_t x, std::size_t y) { return adjacency_[i][x] < adjacency_[i][y]; });
      std::vector<MomentId> adj;
      std::vector<EdgeKind> kinds;
      for (const std::size_t k : order) {
        adj.push_back(adjacency_[i][k]);
        kinds.push_back(kinds_[i][k]);
      }
      adjacency_[i] = std::move(adj);
      kinds_[i] = std::move(kinds);
    }
    return NavGraph(std::move(adjacency_), std::move(kinds_));
  }

 private:
  std::vector<std::vector<MomentId>> adjacency_;
  std::vector<std::vector<EdgeKind>> kinds_;
  std::unordered_set<std::uint64_t> keys_;
};

}  // namespace

std::string to_string(EdgeKind kind) {
  switch (kind) {
    case EdgeKind::temporal: return "temporal";
    case EdgeKind::intra: return "intra";
    case EdgeKind::inter: return "inter";
  }
  return "unknown";
}

EdgeKind edge_kind_from_string(const std::string& s) {
  if (s == "temporal") return EdgeKind::temporal;
  if (s == "intra") return EdgeKind::intra;
  if (s == "inter") return EdgeKind::inter;
  throw ValidationError("unknown edge kind '" + s + "'");
}

void GraphBuildConfig::validate() const {
  if (!(cross_ratio > 0.0 && cross_ratio < 1.0)) throw ConfigError("graph config: cross_ratio must lie in (0,1)");
  if (!(target_avg_degree >= 2.0)) throw ConfigError("graph config: target_avg_degree must be >= 2");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("graph config: alpha must lie in [0,1]");
  if (candidate_pool == 0) throw ConfigError("graph config: candidate_pool must be positive");
}

void to_json(json& j, const GraphBuildConfig& c) {
  j = json{{"target_avg_degree", c.target_avg_degree},
           {"cross_ratio", c.cross_ratio},
           {"temporal_edges", c.temporal_edges},
           {"similarity_edges", c.similarity_edges},
           {"alpha", c.alpha},
           {"candidate_pool", c.candidate_pool}};
}

void from_json(const json& j, GraphBuildConfig& c) {
  const GraphBuildConfig d;
  c.target_avg_degree = j.value("target_avg_degree", d.target_avg_degree);
  c.cross_ratio = j.value("cross_ratio", d.cross_ratio);
  c.temporal_edges = j.value("temporal_edges", d.temporal_edges);
  c.similarity_edges = j.value("similarity_edges", d.similarity_edges);
  c.alpha = j.value("alpha", d.alpha);
  c.candidate_pool = j.value("candidate_pool", d.candidate_pool);
}

NavGraph::NavGraph(std::vector<std::vector<MomentId>> adjacency, std::vector<std::vector<EdgeKind>> kinds)
    : adjacency_(std::move(adjacency)), kinds_(std::move(kinds)) {
  if (adjacency_.size() != kinds_.size()) throw ValidationError("graph: adjacency/kind size mismatch");
  const std::size_t n = adjacency_.size();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& adj = adjacency_[i];
    if (adj.size() != kinds_[i].size()) throw ValidationError("graph: adjacency/kind length mismatch");
    for (std::size_t k = 0; k < adj.size(); ++k) {
      if (adj[k] >= n) throw ValidationError("graph: neighbor id out of range at node " + std::to_string(i));
      if (adj[k] == i) throw ValidationError("graph: self-loop at node " + std::to_string(i));
      if (k > 0 && adj[k] <= adj[k - 1]) {
        throw ValidationError("graph: neighbor list not strictly ascending at node " + std::to_string(i));
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < adjacency_[i].size(); ++k) {
      const auto back = edge_kind(adjacency_[i][k], static_cast<MomentId>(i));
      if (!back || *back != kinds_[i][k]) {
        throw ValidationError("graph: asymmetric edge at node " + std::to_string(i));
      }
    }
  }
}

std::optional<EdgeKind> NavGraph::edge_kind(MomentId a, MomentId b) const {
  const auto& adj = adjacency_.at(a);
  const auto it = std::lower_bound(adj.begin(), adj.end(), b);
  if (it == adj.end() || *it != b) return std::nullopt;
  return kinds_[a][static_cast<std::size_t>(it - adj.begin())];
}

std::size_t NavGraph::edge_count() const {
  std::size_t total = 0;
  for (const auto& adj : adjacency_) total += adj.size();
  return total / 2;
}

double moment_similarity(const Corpus& corpus, MomentId a, MomentId b, double alpha) {
  const double feature_cos = cosine(corpus.moment(a).feature, corpus.moment(b).feature);
  const auto pa = corpus.dense_profile(a);
  const auto pb = corpus.dense_profile(b);
  double lo = 0.0, hi = 0.0;
  for (std::size_t c = 0; c < pa.size(); ++c) {
    lo += std::min(pa[c], pb[c]);
    hi += std::max(pa[c], pb[c]);
  }
  const double jaccard = hi > 0.0 ? lo / hi : 0.0;
  return alpha * feature_cos + (1.0 - alpha) * jaccard;
}

NavGraph build_graph(const Corpus& corpus, const GraphBuildConfig& cfg) {
  cfg.validate();
  const std::size_t n = corpus.size();
  if (n == 0) throw BuildError("cannot build a graph over an empty corpus");
  EdgeBuilder builder(n);

  std::vector<int> temporal_degree(n, 0);
  if (cfg.temporal_edges) {
    for (std::size_t i = 0; i + 1 < n; ++i) {
      if (corpus.moment(i).video_id == corpus.moment(i + 1).video_id) {
        builder.add(static_cast<MomentId>(i), static_cast<MomentId>(i + 1), EdgeKind::temporal);
        ++temporal_degree[i];
        ++temporal_degree[i + 1];
      }
    }
  }

  if (cfg.similarity_edges) {
    // Quotas come from a global budget of target_avg_degree * n / 2 edges:
    // cross_ratio of it is inter-video, temporal edges are fixed, and
    // intra-video similarity edges take whatever budget remains.
    std::size_t temporal_total = 0;
    for (const int d : temporal_degree) temporal_total += static_cast<std::size_t>(d);
    const double budget = cfg.target_avg_degree * static_cast<double>(n);  // in edge endpoints
    const double inter_endpoints = cfg.cross_ratio * budget;
    const double intra_endpoints =
        std::max(0.0, budget - inter_endpoints - static_cast<double>(temporal_total));
    std::vector<int> inter_cap(n), intra_cap(n);
    for (std::size_t i = 0; i < n; ++i) {
      inter_cap[i] = diffused_quota(i, inter_endpoints / static_cast<double>(n));
      intra_cap[i] = diffused_quota(i, intra_endpoints / static_cast<double>(n));
    }

    std::vector<double> sim(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        const double s = moment_similarity(corpus, static_cast<MomentId>(i), static_cast<MomentId>(j), cfg.alpha);
        sim[i * n + j] = s;
        sim[j * n + i] = s;
      }
    }

    auto ranked_candidates = [&](std::size_t i, EdgeKind kind) {
      std::vector<Candidate> out;
      const auto video = corpus.moment(i).video_id;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        const bool same_video = corpus.moment(j).video_id == video;
        if ((kind == EdgeKind::inter) == same_video) continue;
        if (builder.has(static_cast<MomentId>(i), static_cast<MomentId>(j))) continue;
        out.push_back({sim[i * n + j], static_cast<MomentId>(std::min(i, j)),
                       static_cast<MomentId>(std::max(i, j)), kind});
      }
      std::sort(out.begin(), out.end(), [i](const Candidate& x, const Candidate& y) {
        if (x.sim != y.sim) return x.sim > y.sim;
        const MomentId ox = x.a == i ? x.b : x.a;
        const MomentId oy = y.a == i ? y.b : y.a;
        return ox < oy;
      });
      return out;
    };

    // Greedy matching over the pooled top candidates of every node.
    std::vector<Candidate> pool;
    std::set<std::pair<std::uint64_t, EdgeKind>> pooled;
    for (std::size_t i = 0; i < n; ++i) {
      for (const EdgeKind kind : {EdgeKind::inter, EdgeKind::intra}) {
        const int cap = kind == EdgeKind::inter ? inter_cap[i] : intra_cap[i];
        if (cap <= 0) continue;
        auto ranked = ranked_candidates(i, kind);
        if (ranked.empty() && kind == EdgeKind::inter) {
          throw BuildError("node " + std::to_string(i) + " needs " + std::to_string(cap) +
                           " cross-video edges but no other video exists");
        }
        ranked.resize(std::min<std::size_t>(ranked.size(), cfg.candidate_pool));
        for (const auto& c : ranked) {
          if (pooled.insert({pair_key(c.a, c.b), kind}).second) pool.push_back(c);
        }
      }
    }
    std::sort(pool.begin(), pool.end(), by_similarity);

    auto cap_of = [&](MomentId v, EdgeKind kind) -> int& {
      return kind == EdgeKind::inter ? inter_cap[v] : intra_cap[v];
    };
    for (const auto& c : pool) {
      if (cap_of(c.a, c.kind) > 0 && cap_of(c.b, c.kind) > 0 && !builder.has(c.a, c.b)) {
        builder.add(c.a, c.b, c.kind);
        --cap_of(c.a, c.kind);
        --cap_of(c.b, c.kind);
      }
    }

    // Leftover quota: prefer partners that still have room, otherwise take the
    // best remaining candidate and let that partner exceed its quota.
    for (std::size_t i = 0; i < n; ++i) {
      for (const EdgeKind kind : {EdgeKind::inter, EdgeKind::intra}) {
        const auto v = static_cast<MomentId>(i);
        if (cap_of(v, kind) <= 0) continue;
        const auto ranked = ranked_candidates(i, kind);
        for (int pass = 0; pass < 2 && cap_of(v, kind) > 0; ++pass) {
          for (const auto& c : ranked) {
            if (cap_of(v, kind) <= 0) break;
            const MomentId other = c.a == v ? c.b : c.a;
            if (builder.has(v, other)) continue;
            if (pass == 0 && cap_of(other, kind) <= 0) continue;
            builder.add(v, other, kind);
            --cap_of(v, kind);
            if (cap_of(other, kind) > 0) --cap_of(other, kind);
          }
        }
        // Same-video budget that cannot be met (short videos) is dropped silently;
        // a missing cross-video partner was already rejected above.
        if (kind == EdgeKind::intra) cap_of(v, kind) = 0;
      }
    }
  }

  NavGraph g = builder.finish();
  g.build_config = cfg;
  g.corpus_hash = corpus_fingerprint(corpus);
  return g;
}

std::vector<int> bfs_distances(const NavGraph& g, MomentId source) {
  if (source >= g.size()) throw ArgumentError("unknown node id " + std::to_string(source));
  std::vector<int> dist(g.size(), kUnreachable);
  std::vector<MomentId> frontier{source};
  dist[source] = 0;
  for (std::size_t head = 0; head < frontier.size(); ++head) {
    const MomentId u = frontier[head];
    for (const MomentId v : g.neighbors(u)) {
      if (dist[v] == kUnreachable) {
        dist[v] = dist[u] + 1;
        frontier.push_back(v);
      }
    }
  }
  return dist;
}

int shortest_distance(const NavGraph& g, MomentId from, MomentId to) {
  if (from >= g.size() || to >= g.size()) throw ArgumentError("unknown node id");
  if (from == to) return 0;
  std::vector<int> dist(g.size(), kUnreachable);
  std::vector<MomentId> frontier{from};
  dist[from] = 0;
  for (std::size_t head = 0; head < frontier.size(); ++head) {
    const MomentId u = frontier[head];
    for (const MomentId v : g.neighbors(u)) {
      if (dist[v] != kUnreachable) continue;
      dist[v] = dist[u] + 1;
      if (v == to) return dist[v];
      frontier.push_back(v);
    }
  }
  return kUnreachable;
}

ObservationWindow observation_window(const NavGraph& g, MomentId center, int k,
                                     std::span<const MomentId> excluded) {
  if (center >= g.size()) throw ArgumentError("unknown node id " + std::to_string(center));
  if (k < 1) throw ArgumentError("observation window needs k >= 1");
  ObservationWindow window{center, k, {}};
  std::vector<int> depth(g.size(), -1);
  std::vector<MomentId> frontier{center};
  depth[center] = 0;
  for (std::size_t head = 0; head < frontier.size(); ++head) {
    const MomentId u = frontier[head];
    if (depth[u] == k) continue;
    for (const MomentId v : g.neighbors(u)) {
      if (depth[v] >= 0) continue;
      depth[v] = depth[u] + 1;
      frontier.push_back(v);
    }
  }
  for (std::size_t i = 1; i < frontier.size(); ++i) {
    const MomentId v = frontier[i];
    if (std::find(excluded.begin(), excluded.end(), v) == excluded.end()) window.members.push_back(v);
  }
  std::sort(window.members.begin(), window.members.end());
  return window;
}

GraphStats graph_stats(const NavGraph& g, const Corpus& corpus) {
  GraphStats s;
  s.nodes = g.size();
  s.edges = g.edge_count();
  std::size_t temporal = 0, intra = 0, inter = 0;
  double distinct_total = 0.0;
  for (MomentId i = 0; i < g.size(); ++i) {
    const auto adj = g.neighbors(i);
    const auto kinds = g.neighbor_kinds(i);
    if (adj.empty()) ++s.isolated_nodes;
    std::set<std::uint32_t> videos;
    for (std::size_t k = 0; k < adj.size(); ++k) {
      videos.insert(corpus.moment(adj[k]).video_id);
      if (adj[k] < i) continue;  // count each edge once
      switch (kinds[k]) {
        case EdgeKind::temporal: ++temporal; break;
        case EdgeKind::intra: ++intra; break;
        case EdgeKind::inter: ++inter; break;
      }
    }
    distinct_total += static_cast<double>(videos.size());
  }
  if (s.nodes > 0) {
    s.avg_degree = 2.0 * static_cast<double>(s.edges) / static_cast<double>(s.nodes);
    s.avg_distinct_neighbor_videos = distinct_total / static_cast<double>(s.nodes);
  }
  if (s.edges > 0) {
    const double e = static_cast<double>(s.edges);
    s.temporal_fraction = temporal / e;
    s.intra_fraction = intra / e;
    s.inter_fraction = inter / e;
  }
  return s;
}

void to_json(json& j, const GraphStats& s) {
  j = json{{"nodes", s.nodes},
           {"edges", s.edges},
           {"avg_degree", s.avg_degree},
           {"temporal_fraction", s.temporal_fraction},
           {"intra_fraction", s.intra_fraction},
           {"inter_fraction", s.inter_fraction},
           {"avg_distinct_neighbor_videos", s.avg_distinct_neighbor_videos},
           {"isolated_nodes", s.isolated_nodes}};
}

json graph_to_json(const NavGraph& g) {
  json adjacency = json::array();
  json kinds = json::array();
  for (MomentId i = 0; i < g.size(); ++i) {
    adjacency.push_back(std::vector<MomentId>(g.neighbors(i).begin(), g.neighbors(i).end()));
    json row = json::array();
    for (const EdgeKind k : g.neighbor_kinds(i)) row.push_back(to_string(k));
    kinds.push_back(std::move(row));
  }
  return {{"format_version", kGraphFormatVersion},
          {"n_nodes", g.size()},
          {"corpus_hash", g.corpus_hash},
          {"config", g.build_config},
          {"adjacency", adjacency},
          {"edge_kinds", kinds}};
}

NavGraph graph_from_json(const json& j) {
  try {
    if (j.at("format_version").get<int>() != kGraphFormatVersion) {
      throw ValidationError("unsupported graph format_version");
    }
    auto adjacency = j.at("adjacency").get<std::vector<std::vector<MomentId>>>();
    std::vector<std::vector<EdgeKind>> kinds;
    for (const json& row : j.at("edge_kinds")) {
      std::vector<EdgeKind> r;
      for (const json& k : row) r.push_back(edge_kind_from_string(k.get<std::string>()));
      kinds.push_back(std::move(r));
    }
    if (adjacency.size() != j.at("n_nodes").get<std::size_t>()) {
      throw ValidationError("graph n_nodes does not match adjacency");
    }
    NavGraph g(std::move(adjacency), std::move(kinds));
    g.build_config = j.at("config").get<GraphBuildConfig>();
    g.corpus_hash = j.at("corpus_hash").get<std::string>();
    return g;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("bad graph document: ") + e.what());
  }
}

void save_graph(const NavGraph& g, const std::filesystem::path& path) {
  write_text_file(path, graph_to_json(g).dump() + "\n");
}

NavGraph load_graph(const std::filesystem::path& path) { return graph_from_json(read_json_file(path)); }

std::string graph_fingerprint(const NavGraph& g) { return hex64(fnv1a64(graph_to_json(g).dump())); }

const std::vector<int>& DistanceOracle::from_target(MomentId target) {
  if (tables_.empty()) tables_.resize(graph_->size());
  auto& table = tables_.at(target);
  if (table.empty()) table = bfs_distances(*graph_, target);
  return table;
}

int DistanceOracle::distance(MomentId from, MomentId target) { return from_target(target).at(from); }

}  // namespace momentnav
