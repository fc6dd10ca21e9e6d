#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "momentnav/json.hpp"
#include "momentnav/mathcore.hpp"

namespace momentnav {

using MomentId = std::uint32_t;
using ConceptId = std::uint32_t;

struct ConceptEntry {
  ConceptId concept_id = 0;
  double prob = 0.0;

  friend bool operator==(const ConceptEntry&, const ConceptEntry&) = default;
};

/// Top-K concepts of a clip, sorted by descending probability (ties: lower id first).
struct ConceptProfile {
  std::vector<ConceptEntry> entries;

  /// Probability of `concept_id`, 0 when absent.
  double prob(ConceptId concept_id) const;
  friend bool operator==(const ConceptProfile&, const ConceptProfile&) = default;
};

class ConceptVocab {
 public:
  ConceptVocab() = default;
  explicit ConceptVocab(std::vector<std::string> names);

  std::size_t size() const { return names_.size(); }
  const std::string& name(ConceptId id) const { return names_.at(id); }
  std::optional<ConceptId> find(const std::string& name) const;
  const std::vector<std::string>& names() const { return names_; }

  friend bool operator==(const ConceptVocab& a, const ConceptVocab& b) { return a.names_ == b.names_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, ConceptId> index_;
};

struct Moment {
  MomentId id = 0;
  std::uint32_t video_id = 0;
  std::uint32_t clip_index = 0;
  Vec feature;
  ConceptProfile profile;
  double start_s = 0.0;
  double end_s = 0.0;

  friend bool operator==(const Moment&, const Moment&) = default;
};

struct WeightedConcept {
  ConceptId concept_id = 0;
  double weight = 0.0;

  friend bool operator==(const WeightedConcept&, const WeightedConcept&) = default;
};

struct QuerySpec {
  std::uint32_t id = 0;
  MomentId target = 0;
  std::vector<WeightedConcept> concept_bag;
  std::string text;

  friend bool operator==(const QuerySpec&, const QuerySpec&) = default;
};

struct CorpusConfig {
  std::uint32_t n_videos = 200;
  std::uint32_t clips_per_video = 10;
  std::uint32_t vocab_size = 200;
  std::uint32_t concepts_per_clip = 50;
  std::uint32_t feature_dim = 64;
  double query_concept_dropout = 0.3;
  std::uint32_t query_top_concepts = 10;
  double noise_sigma = 0.05;
  // Generative knobs for the synthetic videos.
  std::uint32_t topic_concepts = 20;
  std::uint32_t events_per_clip = 3;
  double topic_boost_min = 2.0;
  double topic_boost_max = 4.5;
  double event_boost = 3.5;
  double drift = 0.35;
  double clip_seconds = 5.0;
  std::uint64_t seed = 42;

  void validate() const;
  friend bool operator==(const CorpusConfig&, const CorpusConfig&) = default;
};

void to_json(json& j, const CorpusConfig& c);
void from_json(const json& j, CorpusConfig& c);

/// Immutable after construction. Dense profile rows are derived on build.
class Corpus {
 public:
  Corpus() = default;
  Corpus(CorpusConfig config, ConceptVocab vocab, std::vector<Moment> moments);

  const CorpusConfig& config() const { return config_; }
  const ConceptVocab& vocab() const { return vocab_; }
  std::size_t size() const { return moments_.size(); }
  const Moment& moment(MomentId id) const;
  const std::vector<Moment>& moments() const { return moments_; }
  /// Probabilities over the whole vocabulary (0 for concepts outside the profile).
  std::span<const double> dense_profile(MomentId id) const;
  bool contains(MomentId id) const { return id < moments_.size(); }

  friend bool operator==(const Corpus& a, const Corpus& b) {
    return a.config_ == b.config_ && a.vocab_ == b.vocab_ && a.moments_ == b.moments_;
  }

 private:
  CorpusConfig config_;
  ConceptVocab vocab_;
  std::vector<Moment> moments_;
  std::vector<double> dense_;
};

Corpus gen_corpus(const CorpusConfig& cfg);

/// `count` distinct target moments; each query keeps the target's top
/// `top_concepts` concepts, each dropped independently with probability `dropout`.
std::vector<QuerySpec> gen_queries(const Corpus& corpus, std::size_t count, double dropout,
                                   std::uint64_t seed, std::size_t top_concepts);
/// Same, using the corpus config's dropout and top-concept count.
std::vector<QuerySpec> gen_queries(const Corpus& corpus, std::size_t count, std::uint64_t seed);

struct QuerySplit {
  std::vector<QuerySpec> train;
  std::vector<QuerySpec> eval;
};

/// One gen_queries draw of n_train + n_eval distinct targets, cut in two.
QuerySplit split_queries(const Corpus& corpus, std::size_t n_train, std::size_t n_eval, std::uint64_t seed);

constexpr int kCorpusFormatVersion = 1;

std::string serialize_corpus(const Corpus& corpus);
Corpus parse_corpus(const std::string& text);
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);
Corpus load_corpus(const std::filesystem::path& path);
/// Hex FNV-1a of the canonical serialization; equals file_hash() of a saved corpus.
std::string corpus_fingerprint(const Corpus& corpus);

void save_queries(const std::vector<QuerySpec>& queries, const std::filesystem::path& path);
std::vector<QuerySpec> load_queries(const std::filesystem::path& path, const Corpus& corpus);

json query_to_json(const QuerySpec& q);

}  // namespace momentnav
