#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "rome/error.hpp"
#include "rome/graph.hpp"
#include "rome/kv.hpp"
#include "rome/rng.hpp"

namespace rome {

/// Pre-extracted per-clip expert features. Values are 32-bit on disk
/// (9 significant decimal digits round-trip them exactly).
struct ClipRecord {
  std::string clip_id;
  std::vector<float> f2d;
  std::vector<float> f3d;
  std::optional<std::vector<float>> froi;
};

struct CorpusManifest {
  std::string split = "train";
  int64_t n_clips = 0;
  int64_t n_captions = 0;
  int64_t d2 = 0;
  int64_t d3 = 0;
  int64_t droi = 0;  // 0 when RoI features are absent
  std::vector<std::string> role_vocab = default_role_vocab();
  int64_t seed = -1;  // -1 when not synthetic

  KvFile to_kv() const {
    KvFile kv;
    kv.set("split", split);
    kv.set_i64("clips", n_clips);
    kv.set_i64("captions", n_captions);
    kv.set_i64("d2", d2);
    kv.set_i64("d3", d3);
    kv.set_i64("droi", droi);
    kv.set("roles", KvFile::join_csv(role_vocab));
    if (seed >= 0) kv.set_i64("seed", seed);
    return kv;
  }

  static CorpusManifest from_kv(const KvFile& kv) {
    CorpusManifest m;
    m.split = kv.get("split");
    m.n_clips = kv.get_i64("clips");
    m.n_captions = kv.get_i64("captions");
    m.d2 = kv.get_i64("d2");
    m.d3 = kv.get_i64("d3");
    m.droi = kv.get_i64("droi");
    m.role_vocab = KvFile::split_csv(kv.get("roles"));
    if (m.role_vocab.empty()) throw ConfigError("manifest: empty role vocabulary");
    if (kv.has("seed")) m.seed = kv.get_i64("seed");
    return m;
  }
};

namespace detail {

inline nlohmann::json parse_json_line(const std::string& line, const std::string& origin,
                                      int64_t lineno) {
  try {
    return nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(origin + ":" + std::to_string(lineno) + ": " + e.what());
  }
}

inline std::vector<float> json_float_vec(const nlohmann::json& j, const std::string& origin,
                                         int64_t lineno, const char* field) {
  if (!j.is_array())
    throw ParseError(origin + ":" + std::to_string(lineno) + ": '" + field + "' must be an array");
  std::vector<float> out;
  out.reserve(j.size());
  for (const auto& v : j) {
    if (!v.is_number())
      throw ParseError(origin + ":" + std::to_string(lineno) + ": non-numeric entry in '" +
                       field + "'");
    const double d = v.get<double>();
    if (!std::isfinite(d))
      throw ParseError(origin + ":" + std::to_string(lineno) + ": non-finite value in '" + field +
                       "'");
    out.push_back(static_cast<float>(d));
  }
  return out;
}

inline std::string float_g9(float v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(v));
  return buf;
}

inline std::string json_float_array(const std::vector<float>& v) {
  std::string out = "[";
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += float_g9(v[i]);
  }
  out += "]";
  return out;
}

}  // namespace detail

inline std::vector<ClipRecord> load_features(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<ClipRecord> records;
  std::set<std::string> seen;
  std::string line;
  int64_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (KvFile::trim(line).empty()) continue;
    auto j = detail::parse_json_line(line, path, lineno);
    ClipRecord r;
    if (!j.contains("clip_id") || !j["clip_id"].is_string())
      throw ParseError(path + ":" + std::to_string(lineno) + ": missing string 'clip_id'");
    r.clip_id = j["clip_id"].get<std::string>();
    if (!seen.insert(r.clip_id).second)
      throw ParseError(path + ":" + std::to_string(lineno) + ": duplicate clip_id '" + r.clip_id +
                       "'");
    if (!j.contains("f2d") || !j.contains("f3d"))
      throw ParseError(path + ":" + std::to_string(lineno) + ": missing 'f2d' or 'f3d'");
    r.f2d = detail::json_float_vec(j["f2d"], path, lineno, "f2d");
    r.f3d = detail::json_float_vec(j["f3d"], path, lineno, "f3d");
    if (j.contains("froi") && !j["froi"].is_null())
      r.froi = detail::json_float_vec(j["froi"], path, lineno, "froi");
    if (r.f2d.empty() || r.f3d.empty())
      throw ParseError(path + ":" + std::to_string(lineno) + ": empty feature vector");
    if (!records.empty()) {
      const auto& first = records.front();
      const bool roi_mismatch = first.froi.has_value() != r.froi.has_value() ||
                                (r.froi && r.froi->size() != first.froi->size());
      if (r.f2d.size() != first.f2d.size() || r.f3d.size() != first.f3d.size() || roi_mismatch)
        throw ParseError(path + ":" + std::to_string(lineno) +
                         ": feature dimensions differ from first record");
    }
    records.push_back(std::move(r));
  }
  if (records.empty()) throw ParseError(path + ": no feature records");
  return records;
}

inline std::vector<CaptionGraph> load_caption_graphs(const std::string& path,
                                                     int64_t role_vocab_size) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<CaptionGraph> graphs;
  std::set<std::string> seen;
  std::string line;
  int64_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (KvFile::trim(line).empty()) continue;
    auto j = detail::parse_json_line(line, path, lineno);
    CaptionGraph g;
    try {
      g.caption_id = j.at("caption_id").get<std::string>();
      g.clip_id = j.at("clip_id").get<std::string>();
      for (const auto& t : j.at("tokens")) g.tokens.push_back(t.get<std::string>());
      for (const auto& n : j.at("nodes")) {
        GraphNode node;
        node.id = n.at("id").get<int64_t>();
        node.kind = kind_from_name(n.at("kind").get<std::string>());
        const auto& span = n.at("span");
        if (!span.is_array() || span.size() != 2)
          throw ValueError("node span must be a [begin, end) pair");
        node.span_begin = span[0].get<int64_t>();
        node.span_end = span[1].get<int64_t>();
        g.nodes.push_back(node);
      }
      for (const auto& e : j.at("edges"))
        g.edges.push_back({e.at("src").get<int64_t>(), e.at("dst").get<int64_t>(),
                           e.at("role").get<int64_t>()});
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const Error& e) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    if (!seen.insert(g.caption_id).second)
      throw ParseError(path + ":" + std::to_string(lineno) + ": duplicate caption_id '" +
                       g.caption_id + "'");
    try {
      g.validate(role_vocab_size);
    } catch (const Error& e) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    graphs.push_back(std::move(g));
  }
  if (graphs.empty()) throw ParseError(path + ": no caption records");
  return graphs;
}

/// Raw word vectors as loaded from a GloVe-style text file; the trainable
/// embedding table is built from these downstream.
struct WordVectors {
  int64_t dim = 0;
  std::vector<std::string> tokens;
  std::vector<std::vector<float>> rows;
};

inline WordVectors load_word_embeddings(const std::string& path, int64_t dim = 300) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  WordVectors wv;
  wv.dim = dim;
  std::map<std::string, size_t> index;
  std::string line;
  int64_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (KvFile::trim(line).empty()) continue;
    std::istringstream ls(line);
    std::string token;
    ls >> token;
    std::vector<float> row;
    double v;
    while (ls >> v) row.push_back(static_cast<float>(v));
    if (token.empty() || static_cast<int64_t>(row.size()) != dim)
      throw ParseError(path + ":" + std::to_string(lineno) + ": expected token + " +
                       std::to_string(dim) + " floats, got " + std::to_string(row.size()));
    auto it = index.find(token);
    if (it != index.end()) {
      std::cerr << "warning: " << path << ":" << lineno << ": duplicate token '" << token
                << "', keeping the last occurrence\n";
      wv.rows[it->second] = std::move(row);
    } else {
      index[token] = wv.tokens.size();
      wv.tokens.push_back(token);
      wv.rows.push_back(std::move(row));
    }
  }
  if (wv.tokens.empty()) throw ParseError(path + ": no embedding rows");
  return wv;
}

/// A loaded corpus: immutable after construction, every caption resolved.
struct Corpus {
  CorpusManifest manifest;
  std::vector<ClipRecord> clips;
  std::vector<CaptionGraph> captions;
  std::map<std::string, int64_t> clip_index;

  int64_t clip_of_caption(int64_t caption_idx) const {
    return clip_index.at(captions[static_cast<size_t>(caption_idx)].clip_id);
  }

  /// Sorted unique caption tokens; the closed vocabulary for embeddings.
  std::vector<std::string> vocabulary() const {
    std::set<std::string> v;
    for (const auto& g : captions)
      for (const auto& t : g.tokens) v.insert(t);
    return {v.begin(), v.end()};
  }
};

inline Corpus load_corpus(const std::string& dir) {
  namespace fs = std::filesystem;
  Corpus c;
  c.manifest = CorpusManifest::from_kv(KvFile::load((fs::path(dir) / "manifest.txt").string()));
  c.clips = load_features((fs::path(dir) / "features.jsonl").string());
  c.captions = load_caption_graphs((fs::path(dir) / "captions.jsonl").string(),
                                   static_cast<int64_t>(c.manifest.role_vocab.size()));
  if (static_cast<int64_t>(c.clips.size()) != c.manifest.n_clips)
    throw ValueError(dir + ": manifest says " + std::to_string(c.manifest.n_clips) +
                     " clips, found " + std::to_string(c.clips.size()));
  if (static_cast<int64_t>(c.captions.size()) != c.manifest.n_captions)
    throw ValueError(dir + ": manifest says " + std::to_string(c.manifest.n_captions) +
                     " captions, found " + std::to_string(c.captions.size()));
  const auto& first = c.clips.front();
  if (static_cast<int64_t>(first.f2d.size()) != c.manifest.d2 ||
      static_cast<int64_t>(first.f3d.size()) != c.manifest.d3 ||
      static_cast<int64_t>(first.froi ? first.froi->size() : 0) != c.manifest.droi)
    throw ValueError(dir + ": feature dimensions disagree with the manifest");
  for (size_t i = 0; i < c.clips.size(); ++i) c.clip_index[c.clips[i].clip_id] = static_cast<int64_t>(i);
  for (const auto& g : c.captions)
    if (!c.clip_index.count(g.clip_id))
      throw ValueError(dir + ": caption '" + g.caption_id + "' references unknown clip '" +
                       g.clip_id + "'");
  return c;
}

/// Parameters of the synthetic corpus generator.
struct SynthSpec {
  int64_t seed = 7;
  int64_t n_clips = 64;
  int64_t n_classes = 8;
  int64_t d2 = 32;
  int64_t d3 = 32;
  int64_t droi = 32;
  int64_t vocab_size = 0;  // 0: smallest vocabulary that fits n_clips
  int64_t captions_per_clip = 1;
  double noise = 0.1;
  std::string split = "train";
};

/// Generates a planted-structure corpus: every clip belongs to a latent
/// class (one verb per class), its features are the class centroid plus
/// seeded noise, and its caption pairs the class verb with a clip-specific
/// noun, so each (verb, noun) combination names exactly one clip.
///
/// Draw order from the single generator, fixed for reproducibility: per
/// class the d2+d3+droi centroid values, then per clip the d2+d3+droi
/// noise values. All uniform(-1, 1), noise scaled afterwards.
inline CorpusManifest synth_corpus(const std::string& dir, const SynthSpec& spec) {
  namespace fs = std::filesystem;
  if (spec.n_clips < 2) throw ValueError("synth_corpus: need at least 2 clips");
  if (spec.n_classes < 1 || spec.n_classes > spec.n_clips)
    throw ValueError("synth_corpus: classes must lie in [1, n_clips]");
  if (spec.captions_per_clip < 1 || spec.captions_per_clip > 4)
    throw ValueError("synth_corpus: captions_per_clip must lie in [1, 4]");
  if (spec.d2 < 1 || spec.d3 < 1 || spec.droi < 1)
    throw ValueError("synth_corpus: feature dimensions must be positive");

  static const std::vector<std::vector<std::string>> kPrefixes = {
      {"a", "person"}, {"the", "person"}, {"one", "person"}, {"some", "person"}};
  static const std::vector<std::string> kArticles = {"the", "a", "one", "some"};

  const int64_t n_nouns_needed = (spec.n_clips + spec.n_classes - 1) / spec.n_classes;
  int64_t n_nouns = n_nouns_needed;
  if (spec.vocab_size > 0) {
    const int64_t fillers = 4;  // a, the, one, some share "person"
    n_nouns = spec.vocab_size - (fillers + 1) - spec.n_classes;
    if (n_nouns < 1 || spec.n_clips > spec.n_classes * n_nouns)
      throw ValueError("synth_corpus: vocabulary of " + std::to_string(spec.vocab_size) +
                       " supports at most " +
                       std::to_string(std::max<int64_t>(0, n_nouns) * spec.n_classes) +
                       " clips with " + std::to_string(spec.n_classes) + " classes");
  }

  fs::create_directories(dir);
  Rng rng(static_cast<uint64_t>(spec.seed));

  std::vector<std::vector<float>> cent2, cent3, centroi;
  for (int64_t c = 0; c < spec.n_classes; ++c) {
    auto draw = [&rng](int64_t n) {
      std::vector<float> v(static_cast<size_t>(n));
      for (auto& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
      return v;
    };
    cent2.push_back(draw(spec.d2));
    cent3.push_back(draw(spec.d3));
    centroi.push_back(draw(spec.droi));
  }

  std::ofstream feat(fs::path(dir) / "features.jsonl");
  std::ofstream caps(fs::path(dir) / "captions.jsonl");
  if (!feat || !caps) throw IoError("cannot write corpus files under " + dir);

  std::set<std::string> verb_lexicon;
  for (int64_t c = 0; c < spec.n_classes; ++c) verb_lexicon.insert("verb" + std::to_string(c));

  int64_t n_captions = 0;
  for (int64_t i = 0; i < spec.n_clips; ++i) {
    const int64_t cls = i % spec.n_classes;
    const int64_t noun = i / spec.n_classes;
    const std::string clip_id = "clip" + std::to_string(i);

    auto noisy = [&rng, &spec](const std::vector<float>& centroid) {
      std::vector<float> v(centroid.size());
      for (size_t k = 0; k < v.size(); ++k)
        v[k] = centroid[k] + static_cast<float>(spec.noise * rng.uniform(-1.0, 1.0));
      return v;
    };
    const auto f2 = noisy(cent2[static_cast<size_t>(cls)]);
    const auto f3 = noisy(cent3[static_cast<size_t>(cls)]);
    const auto fr = noisy(centroi[static_cast<size_t>(cls)]);
    feat << "{\"clip_id\":\"" << clip_id << "\",\"f2d\":" << detail::json_float_array(f2)
         << ",\"f3d\":" << detail::json_float_array(f3)
         << ",\"froi\":" << detail::json_float_array(fr) << "}\n";

    for (int64_t k = 0; k < spec.captions_per_clip; ++k) {
      std::vector<std::string> tokens = kPrefixes[static_cast<size_t>(k)];
      tokens.push_back("verb" + std::to_string(cls));
      tokens.push_back(kArticles[static_cast<size_t>(k)]);
      tokens.push_back("noun" + std::to_string(noun));
      CaptionGraph g = rule_parse_caption(tokens, verb_lexicon);
      g.caption_id = "cap" + std::to_string(i) + "_" + std::to_string(k);
      g.clip_id = clip_id;
      nlohmann::ordered_json j;
      j["caption_id"] = g.caption_id;
      j["clip_id"] = g.clip_id;
      j["tokens"] = g.tokens;
      j["nodes"] = nlohmann::ordered_json::array();
      for (const auto& n : g.nodes)
        j["nodes"].push_back({{"id", n.id},
                              {"kind", kind_name(n.kind)},
                              {"span", {n.span_begin, n.span_end}}});
      j["edges"] = nlohmann::ordered_json::array();
      for (const auto& e : g.edges)
        j["edges"].push_back({{"src", e.src}, {"dst", e.dst}, {"role", e.role}});
      caps << j.dump() << "\n";
      ++n_captions;
    }
  }
  feat.close();
  caps.close();
  if (feat.fail() || caps.fail()) throw IoError("write failed under " + dir);

  CorpusManifest m;
  m.split = spec.split;
  m.n_clips = spec.n_clips;
  m.n_captions = n_captions;
  m.d2 = spec.d2;
  m.d3 = spec.d3;
  m.droi = spec.droi;
  m.seed = spec.seed;
  m.to_kv().save((fs::path(dir) / "manifest.txt").string());
  return m;
}

}  // namespace rome
