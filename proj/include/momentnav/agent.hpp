#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "momentnav/corpus.hpp"
#include "momentnav/json.hpp"
#include "momentnav/mathcore.hpp"
#include "momentnav/nav_graph.hpp"

namespace momentnav {

struct AgentConfig {
  std::uint32_t feature_dim = 64;   // d_m, must match the corpus
  std::uint32_t vocab_size = 200;   // V_c, must match the corpus
  std::uint32_t query_dim = 64;     // d_q
  std::uint32_t feedback_dim = 32;  // d_f
  std::uint32_t joint_dim = 64;     // d_j
  std::uint32_t hidden_dim = 64;
  std::uint32_t fc_layers = 2;
  double temperature = 0.1;  // softmax temperature over cosine scores
  std::uint64_t init_seed = 7;

  void validate() const;
  std::vector<std::size_t> widths(std::size_t in, std::size_t out) const;
};

void to_json(json& j, const AgentConfig& c);
void from_json(const json& j, AgentConfig& c);

/// Signed concept keyword: +1 asks to add the concept, -1 to remove it.
struct Feedback {
  ConceptId concept_id = 0;
  int sign = +1;

  friend bool operator==(const Feedback&, const Feedback&) = default;
};

/// Every learnable parameter of the navigator.
///   FC_m: d_m -> d_j, FC_q: d_q -> d_j, FC_w: 2 d_j -> 1,
///   gru: d_f -> d_q, feedback.W1/b1: V -> d_f,
///   query.concept_embed (V x d_q) + query.proj (d_q -> d_q).
class PolicyParams {
 public:
  explicit PolicyParams(const AgentConfig& config);

  void init(Rng& rng);
  void init() {
    Rng rng(config.init_seed);
    init(rng);
  }

  ParamRefs params();
  std::vector<const Param*> params() const;
  void zero_grad();

  AgentConfig config;
  FcNet fc_m;
  FcNet fc_q;
  FcNet fc_w;
  GruCell gru;
  Param W1;
  Param b1;
  Param concept_embed;
  Linear query_proj;
};

void save_policy(const PolicyParams& params, const std::filesystem::path& path, const json& meta = json::object());
/// Reads the agent config stored in the checkpoint meta, then the parameter values.
PolicyParams load_policy(const std::filesystem::path& path, json* meta_out = nullptr);

// ---------------------------------------------------------------------------
// Query encoding and update

struct QueryEncodeCache {
  Vec pooled;  // weighted sum of concept embeddings
  bool ready = false;
};

/// q0 = proj(sum_c w_c * embed[c]).
Vec encode_query(const PolicyParams& p, const QuerySpec& q, QueryEncodeCache* cache = nullptr);
void encode_query_backward(PolicyParams& p, const QuerySpec& q, const QueryEncodeCache& cache,
                           std::span<const double> dq0);

/// f = W1 * onehot_signed + b1.
Vec embed_feedback(const PolicyParams& p, const Feedback& fb);

struct QueryUpdateCache {
  std::vector<Feedback> feedback;
  std::vector<GruCache> steps;
  bool ready = false;
};

/// Folds the keywords through the GRU in order, then adds q0 once.
/// An empty list returns q_t unchanged.
Vec update_query(const PolicyParams& p, std::span<const double> q_t, std::span<const double> q0,
                 std::span<const Feedback> feedback, QueryUpdateCache* cache = nullptr);

struct QueryUpdateGrads {
  Vec dq_t;
  Vec dq0;
};

QueryUpdateGrads update_query_backward(PolicyParams& p, const QueryUpdateCache& cache,
                                       std::span<const double> dq_next);

// ---------------------------------------------------------------------------
// Moment projections

/// Lazily computed FC_m projections of corpus moments for one parameter
/// snapshot, with per-moment gradient accumulation so each moment is
/// back-propagated through FC_m once per optimisation step.
class MomentEmbeddings {
 public:
  MomentEmbeddings(const PolicyParams& params, const Corpus& corpus, bool precompute_all = false);

  const Vec& get(MomentId id);
  /// Only valid when every needed moment was computed (precompute_all).
  const Vec& get(MomentId id) const;
  void add_grad(MomentId id, std::span<const double> grad);
  /// Pushes accumulated gradients through FC_m into `params`, then clears them.
  void backward(PolicyParams& params);
  std::size_t computed() const { return computed_; }

 private:
  struct Entry {
    Vec out;
    FcCache cache;
    Vec grad;
    bool has_grad = false;
  };

  const PolicyParams* params_;
  const Corpus* corpus_;
  std::vector<std::optional<Entry>> entries_;
  std::vector<MomentId> touched_;
  std::size_t computed_ = 0;
};

// ---------------------------------------------------------------------------
// Policy and value

struct ActionScores {
  std::vector<MomentId> candidates;
  Vec scores;         // cosine(FC_m(m_i), FC_q(q))
  Vec probabilities;  // softmax(scores / temperature)

  std::size_t argmax() const;
};

ActionScores score_actions(const PolicyParams& p, std::span<const double> q_t,
                           std::span<const MomentId> candidates, const Corpus& corpus,
                           MomentEmbeddings* embeddings = nullptr);

/// Throws StateError on an empty window (dead end).
ActionScores score_actions(const PolicyParams& p, std::span<const double> q_t,
                           const ObservationWindow& window, const Corpus& corpus,
                           MomentEmbeddings* embeddings = nullptr);

struct SelectedAction {
  std::size_t index = 0;
  MomentId moment = 0;
  bool explored = false;
};

/// With probability epsilon a uniform candidate, otherwise the arg-max score
/// (ties go to the lowest candidate id).
SelectedAction select_action(const ActionScores& scores, double epsilon, Rng& rng);

/// Q_w(s) = FC_w([FC_m(m); FC_q(q)]).
double value(const PolicyParams& p, std::span<const double> moment_feature, std::span<const double> q);
double value_from_projections(const PolicyParams& p, std::span<const double> moment_proj,
                              std::span<const double> query_proj, FcCache* cache = nullptr);

}  // namespace momentnav
