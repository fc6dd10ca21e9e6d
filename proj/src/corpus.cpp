#include "momentnav/corpus.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <sstream>

#include "momentnav/checkpoint.hpp"
#include "momentnav/errors.hpp"

namespace momentnav {

namespace {

constexpr const char* kConceptWords[] = {
    "person",   "man",       "woman",     "child",     "crowd",     "face",      "hand",
    "hair",     "glasses",   "hat",       "suit",      "shirt",     "dress",     "jacket",
    "uniform",  "kitchen",   "office",    "hospital",  "street",    "car",       "bus",
    "truck",    "bicycle",   "road",      "bridge",    "building",  "house",     "window",
    "door",     "stairs",    "table",     "chair",     "sofa",      "bed",       "lamp",
    "computer", "phone",     "screen",    "book",      "paper",     "pen",       "cup",
    "bottle",   "glass",     "plate",     "food",      "bread",     "fruit",     "cake",
    "coffee",   "wine",      "tree",      "leaf",      "flower",    "grass",     "garden",
    "park",     "forest",    "mountain",  "river",     "lake",      "beach",     "ocean",
    "sky",      "cloud",     "sun",       "night",     "rain",      "snow",      "dog",
    "cat",      "bird",      "horse",     "squirrel",  "fish",      "box",       "bag",
    "ball",     "sword",     "gun",       "knife",     "rope",      "flag",      "sign",
    "light",    "fire",      "smoke",     "water",     "ice",       "stone",     "sand",
    "wall",     "floor",     "ceiling",   "mirror",    "painting",  "camera",    "guitar",
    "piano",    "drum",      "microphone", "stage",    "audience",  "dance",     "run",
    "walk",     "jump",      "sit",       "stand",     "talk",      "laugh",     "cry",
    "hug",      "kiss",      "fight",     "eat",       "drink",     "read",      "write",
    "drive",    "swim",      "climb",     "throw",     "catch",     "carry",     "open",
    "close",    "point",     "wave",      "shake",     "smile",     "shout",     "sleep",
    "cook",     "clean",     "play",      "watch",     "listen",    "indoor",    "outdoor",
    "classroom", "restaurant", "bar",     "shop",      "market",    "station",   "airport",
    "train",    "boat",      "plane",     "helicopter", "police",   "doctor",    "nurse",
    "teacher",  "student",   "soldier",   "chef",      "baby",      "couple",    "family",
    "friend",   "party",     "wedding",   "meeting",   "game",      "sport",     "football",
    "basketball", "tennis",  "toy",       "gift",      "balloon",   "candle",    "clock",
    "watch_face", "key",     "money",     "card",      "letter",    "map",       "tv",
    "radio",    "poster",    "curtain",   "pillow",    "blanket",   "towel",     "sink",
    "shower",   "bathroom",  "corridor",  "elevator",  "parking",   "fence",     "tent",
    "creature", "robot",     "costume",   "mask",
};

std::vector<std::string> make_vocab_names(std::size_t n) {
  std::vector<std::string> names;
  names.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (i < std::size(kConceptWords)) {
      names.emplace_back(kConceptWords[i]);
    } else {
      names.push_back("concept_" + std::to_string(i));
    }
  }
  return names;
}

void check_profile(const ConceptProfile& profile, std::size_t vocab_size, std::size_t max_k,
                   const std::string& where) {
  if (profile.entries.size() > max_k) throw ValidationError(where + ": profile exceeds K");
  std::vector<bool> seen(vocab_size, false);
  for (std::size_t i = 0; i < profile.entries.size(); ++i) {
    const auto& e = profile.entries[i];
    if (e.concept_id >= vocab_size) throw ValidationError(where + ": concept id out of range");
    if (seen[e.concept_id]) throw ValidationError(where + ": duplicate concept in profile");
    seen[e.concept_id] = true;
    if (!(e.prob > 0.0 && e.prob <= 1.0)) throw ValidationError(where + ": probability outside (0,1]");
    if (i > 0 && e.prob > profile.entries[i - 1].prob) {
      throw ValidationError(where + ": profile not sorted by descending probability");
    }
  }
}

double sigmoid_prob(double logit) {
  // Clamp keeps probabilities strictly positive and at most 1.
  const double p = 1.0 / (1.0 + std::exp(-logit));
  return std::clamp(p, 1e-12, 1.0);
}

}  // namespace

double ConceptProfile::prob(ConceptId concept_id) const {
  for (const auto& e : entries) {
    if (e.concept_id == concept_id) return e.prob;
  }
  return 0.0;
}

ConceptVocab::ConceptVocab(std::vector<std::string> names) : names_(std::move(names)) {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (!index_.emplace(names_[i], static_cast<ConceptId>(i)).second) {
      throw ValidationError("duplicate concept name '" + names_[i] + "'");
    }
  }
}

std::optional<ConceptId> ConceptVocab::find(const std::string& name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

void CorpusConfig::validate() const {
  if (n_videos == 0 || clips_per_video == 0 || vocab_size == 0 || concepts_per_clip == 0 ||
      feature_dim == 0 || query_top_concepts == 0) {
    throw ConfigError("corpus config: counts and dimensions must be positive");
  }
  if (concepts_per_clip > vocab_size) throw ConfigError("corpus config: K exceeds vocabulary size");
  if (topic_concepts > vocab_size) throw ConfigError("corpus config: topic concepts exceed vocabulary");
  if (!(query_concept_dropout >= 0.0 && query_concept_dropout < 1.0)) {
    throw ConfigError("corpus config: query dropout must lie in [0,1)");
  }
  if (!(noise_sigma >= 0.0) || !(drift >= 0.0) || !(clip_seconds > 0.0)) {
    throw ConfigError("corpus config: noise, drift and clip length must be non-negative");
  }
}

void to_json(json& j, const CorpusConfig& c) {
  j = json{{"n_videos", c.n_videos},
           {"clips_per_video", c.clips_per_video},
           {"vocab_size", c.vocab_size},
           {"concepts_per_clip", c.concepts_per_clip},
           {"feature_dim", c.feature_dim},
           {"query_concept_dropout", c.query_concept_dropout},
           {"query_top_concepts", c.query_top_concepts},
           {"noise_sigma", c.noise_sigma},
           {"topic_concepts", c.topic_concepts},
           {"events_per_clip", c.events_per_clip},
           {"topic_boost_min", c.topic_boost_min},
           {"topic_boost_max", c.topic_boost_max},
           {"event_boost", c.event_boost},
           {"drift", c.drift},
           {"clip_seconds", c.clip_seconds},
           {"seed", c.seed}};
}

void from_json(const json& j, CorpusConfig& c) {
  const CorpusConfig d;
  c.n_videos = j.value("n_videos", d.n_videos);
  c.clips_per_video = j.value("clips_per_video", d.clips_per_video);
  c.vocab_size = j.value("vocab_size", d.vocab_size);
  c.concepts_per_clip = j.value("concepts_per_clip", d.concepts_per_clip);
  c.feature_dim = j.value("feature_dim", d.feature_dim);
  c.query_concept_dropout = j.value("query_concept_dropout", d.query_concept_dropout);
  c.query_top_concepts = j.value("query_top_concepts", d.query_top_concepts);
  c.noise_sigma = j.value("noise_sigma", d.noise_sigma);
  c.topic_concepts = j.value("topic_concepts", d.topic_concepts);
  c.events_per_clip = j.value("events_per_clip", d.events_per_clip);
  c.topic_boost_min = j.value("topic_boost_min", d.topic_boost_min);
  c.topic_boost_max = j.value("topic_boost_max", d.topic_boost_max);
  c.event_boost = j.value("event_boost", d.event_boost);
  c.drift = j.value("drift", d.drift);
  c.clip_seconds = j.value("clip_seconds", d.clip_seconds);
  c.seed = j.value("seed", d.seed);
}

Corpus::Corpus(CorpusConfig config, ConceptVocab vocab, std::vector<Moment> moments)
    : config_(std::move(config)), vocab_(std::move(vocab)), moments_(std::move(moments)) {
  config_.validate();
  if (vocab_.size() != config_.vocab_size) throw ValidationError("vocabulary size does not match config");
  const std::size_t expected = std::size_t{config_.n_videos} * config_.clips_per_video;
  if (moments_.size() != expected) {
    throw ValidationError("corpus has " + std::to_string(moments_.size()) + " moments, config implies " +
                          std::to_string(expected));
  }
  dense_.assign(moments_.size() * vocab_.size(), 0.0);
  for (std::size_t i = 0; i < moments_.size(); ++i) {
    const Moment& m = moments_[i];
    const std::string where = "moment " + std::to_string(i);
    if (m.id != i) throw ValidationError(where + ": id out of order");
    if (m.video_id != i / config_.clips_per_video || m.clip_index != i % config_.clips_per_video) {
      throw ValidationError(where + ": video/clip position inconsistent with config");
    }
    if (m.feature.size() != config_.feature_dim) throw ValidationError(where + ": feature dimension");
    if (!std::all_of(m.feature.begin(), m.feature.end(), [](double v) { return std::isfinite(v); })) {
      throw ValidationError(where + ": non-finite feature");
    }
    check_profile(m.profile, vocab_.size(), config_.concepts_per_clip, where);
    for (const auto& e : m.profile.entries) dense_[i * vocab_.size() + e.concept_id] = e.prob;
  }
}

const Moment& Corpus::moment(MomentId id) const {
  if (id >= moments_.size()) throw ArgumentError("unknown moment id " + std::to_string(id));
  return moments_[id];
}

std::span<const double> Corpus::dense_profile(MomentId id) const {
  if (id >= moments_.size()) throw ArgumentError("unknown moment id " + std::to_string(id));
  return std::span<const double>(dense_).subspan(std::size_t{id} * vocab_.size(), vocab_.size());
}

Corpus gen_corpus(const CorpusConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  const std::size_t V = cfg.vocab_size, D = cfg.feature_dim, C = cfg.clips_per_video;

  // Fixed random projection from concept space to feature space.
  std::vector<double> projection(V * D);
  const double scale = 1.0 / std::sqrt(static_cast<double>(D));
  for (double& w : projection) w = rng.normal() * scale;

  std::vector<ConceptId> all_concepts(V);
  std::iota(all_concepts.begin(), all_concepts.end(), ConceptId{0});

  std::vector<Moment> moments;
  moments.reserve(std::size_t{cfg.n_videos} * C);
  for (std::uint32_t v = 0; v < cfg.n_videos; ++v) {
    std::vector<double> base(V);
    for (double& b : base) b = -3.0 + 0.7 * rng.normal();
    rng.shuffle(std::span<ConceptId>(all_concepts));
    for (std::uint32_t i = 0; i < cfg.topic_concepts; ++i) {
      base[all_concepts[i]] += rng.uniform(cfg.topic_boost_min, cfg.topic_boost_max);
    }

    std::vector<std::vector<ConceptId>> events(C);
    for (auto& ev : events) {
      for (std::uint32_t e = 0; e < cfg.events_per_clip; ++e) {
        ev.push_back(static_cast<ConceptId>(rng.uniform_int(V)));
      }
    }

    std::vector<double> walk(V, 0.0);
    for (std::uint32_t c = 0; c < C; ++c) {
      if (c > 0) {
        for (double& w : walk) w += cfg.drift * rng.normal();
      }
      std::vector<double> logit(V);
      for (std::size_t k = 0; k < V; ++k) logit[k] = base[k] + walk[k];
      for (const ConceptId e : events[c]) logit[e] += cfg.event_boost;
      if (c > 0) {
        for (const ConceptId e : events[c - 1]) logit[e] += 0.5 * cfg.event_boost;
      }
      if (c + 1 < C) {
        for (const ConceptId e : events[c + 1]) logit[e] += 0.5 * cfg.event_boost;
      }

      std::vector<ConceptEntry> ranked(V);
      for (std::size_t k = 0; k < V; ++k) {
        ranked[k] = {static_cast<ConceptId>(k), sigmoid_prob(logit[k])};
      }
      std::stable_sort(ranked.begin(), ranked.end(),
                       [](const ConceptEntry& a, const ConceptEntry& b) { return a.prob > b.prob; });
      ranked.resize(cfg.concepts_per_clip);

      Moment m;
      m.id = static_cast<MomentId>(moments.size());
      m.video_id = v;
      m.clip_index = c;
      m.profile.entries = std::move(ranked);
      m.feature.assign(D, 0.0);
      for (const auto& e : m.profile.entries) {
        axpy(e.prob, std::span<const double>(projection).subspan(std::size_t{e.concept_id} * D, D), m.feature);
      }
      for (double& f : m.feature) f += cfg.noise_sigma * rng.normal();
      m.start_s = c * cfg.clip_seconds;
      m.end_s = (c + 1) * cfg.clip_seconds;
      moments.push_back(std::move(m));
    }
  }
  return Corpus(cfg, ConceptVocab(make_vocab_names(V)), std::move(moments));
}

std::vector<QuerySpec> gen_queries(const Corpus& corpus, std::size_t count, double dropout,
                                   std::uint64_t seed, std::size_t top_concepts) {
  if (count > corpus.size()) {
    throw ArgumentError("requested " + std::to_string(count) + " queries but corpus has only " +
                        std::to_string(corpus.size()) + " moments");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ArgumentError("query dropout must lie in [0,1)");
  if (top_concepts == 0) throw ArgumentError("queries need at least one concept");

  Rng rng(seed);
  std::vector<MomentId> targets(corpus.size());
  std::iota(targets.begin(), targets.end(), MomentId{0});
  rng.shuffle(std::span<MomentId>(targets));
  targets.resize(count);

  std::vector<QuerySpec> queries;
  queries.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const Moment& m = corpus.moment(targets[i]);
    QuerySpec q;
    q.id = static_cast<std::uint32_t>(i);
    q.target = m.id;
    const std::size_t n = std::min(top_concepts, m.profile.entries.size());
    for (std::size_t k = 0; k < n; ++k) {
      const bool dropped = rng.bernoulli(dropout);
      if (!dropped) q.concept_bag.push_back({m.profile.entries[k].concept_id, m.profile.entries[k].prob});
    }
    if (q.concept_bag.empty()) {
      // A query must mention something; fall back to the strongest concept_id.
      q.concept_bag.push_back({m.profile.entries[0].concept_id, m.profile.entries[0].prob});
    }
    std::ostringstream text;
    for (std::size_t k = 0; k < q.concept_bag.size(); ++k) {
      if (k) text << ' ';
      text << corpus.vocab().name(q.concept_bag[k].concept_id);
    }
    q.text = text.str();
    queries.push_back(std::move(q));
  }
  return queries;
}

std::vector<QuerySpec> gen_queries(const Corpus& corpus, std::size_t count, std::uint64_t seed) {
  return gen_queries(corpus, count, corpus.config().query_concept_dropout, seed,
                     corpus.config().query_top_concepts);
}

// ---------------------------------------------------------------------------
// Serialization

std::string serialize_corpus(const Corpus& corpus) {
  std::string out;
  json header = {{"format_version", kCorpusFormatVersion},
                 {"kind", "corpus_header"},
                 {"config", corpus.config()},
                 {"vocab", corpus.vocab().names()},
                 {"n_moments", corpus.size()}};
  out += header.dump();
  out += '\n';
  for (const Moment& m : corpus.moments()) {
    json profile = json::array();
    for (const auto& e : m.profile.entries) profile.push_back(json::array({e.concept_id, e.prob}));
    json line = {{"id", m.id},
                 {"video_id", m.video_id},
                 {"clip_index", m.clip_index},
                 {"time_span", json::array({m.start_s, m.end_s})},
                 {"feature", m.feature},
                 {"profile", profile}};
    out += line.dump();
    out += '\n';
  }
  return out;
}

Corpus parse_corpus(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;

  auto parse_line = [&](const std::string& s) {
    try {
      return json::parse(s);
    } catch (const json::parse_error& e) {
      throw ParseError(std::string("malformed corpus line: ") + e.what(), line_no);
    }
  };

  if (!std::getline(in, line)) throw ParseError("empty corpus file", 1);
  ++line_no;
  const json header = parse_line(line);
  CorpusConfig cfg;
  std::vector<std::string> vocab;
  std::size_t n_moments = 0;
  try {
    if (header.at("kind") != "corpus_header") throw ParseError("first line is not a corpus header", 1);
    if (header.at("format_version").get<int>() != kCorpusFormatVersion) {
      throw ValidationError("unsupported corpus format_version");
    }
    cfg = header.at("config").get<CorpusConfig>();
    vocab = header.at("vocab").get<std::vector<std::string>>();
    n_moments = header.at("n_moments").get<std::size_t>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad corpus header: ") + e.what(), 1);
  }

  std::vector<Moment> moments;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const json j = parse_line(line);
    Moment m;
    try {
      m.id = j.at("id").get<MomentId>();
      m.video_id = j.at("video_id").get<std::uint32_t>();
      m.clip_index = j.at("clip_index").get<std::uint32_t>();
      const auto span = j.at("time_span").get<std::vector<double>>();
      if (span.size() != 2) throw ParseError("time_span must have two entries", line_no);
      m.start_s = span[0];
      m.end_s = span[1];
      m.feature = j.at("feature").get<Vec>();
      for (const json& e : j.at("profile")) {
        m.profile.entries.push_back({e.at(0).get<ConceptId>(), e.at(1).get<double>()});
      }
    } catch (const json::exception& e) {
      throw ParseError(std::string("bad moment record: ") + e.what(), line_no);
    }
    moments.push_back(std::move(m));
  }
  if (moments.size() != n_moments) {
    throw ValidationError("corpus header announces " + std::to_string(n_moments) + " moments, body has " +
                          std::to_string(moments.size()));
  }
  return Corpus(cfg, ConceptVocab(std::move(vocab)), std::move(moments));
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  write_text_file(path, serialize_corpus(corpus));
}

Corpus load_corpus(const std::filesystem::path& path) { return parse_corpus(read_text_file(path)); }

std::string corpus_fingerprint(const Corpus& corpus) { return hex64(fnv1a64(serialize_corpus(corpus))); }

QuerySplit split_queries(const Corpus& corpus, std::size_t n_train, std::size_t n_eval, std::uint64_t seed) {
  auto all = gen_queries(corpus, n_train + n_eval, seed);
  QuerySplit out;
  out.train.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n_train));
  out.eval.assign(all.begin() + static_cast<std::ptrdiff_t>(n_train), all.end());
  return out;
}

json query_to_json(const QuerySpec& q) {
  json bag = json::array();
  for (const auto& c : q.concept_bag) bag.push_back(json::array({c.concept_id, c.weight}));
  return {{"id", q.id}, {"target", q.target}, {"concept_bag", bag}, {"text", q.text}};
}

void save_queries(const std::vector<QuerySpec>& queries, const std::filesystem::path& path) {
  std::string out;
  out += json({{"format_version", kCorpusFormatVersion}, {"kind", "queries_header"}, {"n_queries", queries.size()}})
             .dump();
  out += '\n';
  for (const auto& q : queries) {
    out += query_to_json(q).dump();
    out += '\n';
  }
  write_text_file(path, out);
}

std::vector<QuerySpec> load_queries(const std::filesystem::path& path, const Corpus& corpus) {
  std::istringstream in(read_text_file(path));
  std::string line;
  std::size_t line_no = 0;
  std::vector<QuerySpec> queries;
  std::size_t announced = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(std::string("malformed query line: ") + e.what(), line_no);
    }
    try {
      if (line_no == 1) {
        if (j.at("kind") != "queries_header") throw ParseError("missing queries header", 1);
        announced = j.at("n_queries").get<std::size_t>();
        continue;
      }
      QuerySpec q;
      q.id = j.at("id").get<std::uint32_t>();
      q.target = j.at("target").get<MomentId>();
      for (const json& e : j.at("concept_bag")) {
        q.concept_bag.push_back({e.at(0).get<ConceptId>(), e.at(1).get<double>()});
      }
      q.text = j.value("text", "");
      if (!corpus.contains(q.target)) throw ValidationError("query target not in corpus");
      if (q.concept_bag.empty()) throw ValidationError("query with empty concept bag");
      for (const auto& c : q.concept_bag) {
        if (c.concept_id >= corpus.vocab().size()) throw ValidationError("query concept out of range");
      }
      queries.push_back(std::move(q));
    } catch (const json::exception& e) {
      throw ParseError(std::string("bad query record: ") + e.what(), line_no);
    }
  }
  if (queries.size() != announced) throw ValidationError("query count does not match header");
  return queries;
}

}  // namespace momentnav
