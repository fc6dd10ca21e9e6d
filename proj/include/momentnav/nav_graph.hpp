#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "momentnav/corpus.hpp"
#include "momentnav/json.hpp"

namespace momentnav {

enum class EdgeKind : std::uint8_t { temporal, intra, inter };

std::string to_string(EdgeKind kind);
EdgeKind edge_kind_from_string(const std::string& s);

struct GraphBuildConfig {
  double target_avg_degree = 4.0;
  double cross_ratio = 0.6;
  bool temporal_edges = true;
  bool similarity_edges = true;
  /// Weight of feature cosine vs weighted-Jaccard profile overlap.
  double alpha = 0.5;
  /// Per-node candidate list length used for the greedy edge matching.
  std::uint32_t candidate_pool = 32;

  void validate() const;
};

void to_json(json& j, const GraphBuildConfig& c);
void from_json(const json& j, GraphBuildConfig& c);

/// Undirected clip graph. Neighbor lists are sorted ascending; no self-loops.
class NavGraph {
 public:
  NavGraph() = default;
  NavGraph(std::vector<std::vector<MomentId>> adjacency, std::vector<std::vector<EdgeKind>> kinds);

  std::size_t size() const { return adjacency_.size(); }
  std::span<const MomentId> neighbors(MomentId id) const { return adjacency_.at(id); }
  std::span<const EdgeKind> neighbor_kinds(MomentId id) const { return kinds_.at(id); }
  std::optional<EdgeKind> edge_kind(MomentId a, MomentId b) const;
  std::size_t edge_count() const;

  GraphBuildConfig build_config;
  std::string corpus_hash;

  friend bool operator==(const NavGraph& a, const NavGraph& b) {
    return a.adjacency_ == b.adjacency_ && a.kinds_ == b.kinds_;
  }

 private:
  std::vector<std::vector<MomentId>> adjacency_;
  std::vector<std::vector<EdgeKind>> kinds_;
};

/// Edge between two clips, ranked by alpha * cosine(features) + (1 - alpha) * weighted Jaccard.
double moment_similarity(const Corpus& corpus, MomentId a, MomentId b, double alpha);

NavGraph build_graph(const Corpus& corpus, const GraphBuildConfig& cfg);

constexpr int kUnreachable = std::numeric_limits<int>::max();

/// Hop distances from `source` to every node (kUnreachable where disconnected).
std::vector<int> bfs_distances(const NavGraph& g, MomentId source);

/// Hop count, or kUnreachable. Throws ArgumentError for invalid ids.
int shortest_distance(const NavGraph& g, MomentId from, MomentId to);

struct ObservationWindow {
  MomentId center = 0;
  int k = 0;
  std::vector<MomentId> members;  // sorted ascending
};

/// Nodes within 1..k hops of `center`, minus center and `excluded`.
ObservationWindow observation_window(const NavGraph& g, MomentId center, int k,
                                     std::span<const MomentId> excluded = {});

struct GraphStats {
  std::size_t nodes = 0;
  std::size_t edges = 0;
  double avg_degree = 0.0;
  double temporal_fraction = 0.0;
  double intra_fraction = 0.0;
  double inter_fraction = 0.0;
  double avg_distinct_neighbor_videos = 0.0;
  std::size_t isolated_nodes = 0;
};

GraphStats graph_stats(const NavGraph& g, const Corpus& corpus);
void to_json(json& j, const GraphStats& s);

constexpr int kGraphFormatVersion = 1;

json graph_to_json(const NavGraph& g);
NavGraph graph_from_json(const json& j);
void save_graph(const NavGraph& g, const std::filesystem::path& path);
NavGraph load_graph(const std::filesystem::path& path);
/// Hex FNV-1a of the canonical JSON form.
std::string graph_fingerprint(const NavGraph& g);

/// Per-target BFS distance tables, computed on first use.
class DistanceOracle {
 public:
  explicit DistanceOracle(const NavGraph& graph) : graph_(&graph) {}

  int distance(MomentId from, MomentId target);
  const std::vector<int>& from_target(MomentId target);

 private:
  const NavGraph* graph_;
  std::vector<std::vector<int>> tables_;
};

}  // namespace momentnav
