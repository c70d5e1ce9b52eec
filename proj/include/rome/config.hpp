#pragma once

// Run configuration shared by the command-line tools: training settings plus
// data paths, evaluation options, and synthesis parameters, stored as one
// flat key=value file. Unknown keys are rejected so typos fail loudly.

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "rome/data_io.hpp"
#include "rome/error.hpp"
#include "rome/eval.hpp"
#include "rome/kv.hpp"
#include "rome/trainer.hpp"

namespace rome {

struct RunConfig {
  TrainConfig train;
  std::string data;        // corpus directory
  std::string out;         // output directory
  std::string ckpt;        // checkpoint read by eval
  std::string resume;      // checkpoint a training run continues from
  std::string embeddings;  // optional pretrained word vector file
  Direction direction = Direction::text_to_video;
  int64_t split_gallery = 0;  // rank against the first N clips only, 0 keeps all
  std::vector<std::string> axes;  // ablation axes
  int64_t bits = 64;              // scalar width, 32 or 64
  int64_t clips = 64;             // synthesis: gallery size
  int64_t classes = 8;            // synthesis: latent classes
  int64_t captions_per_clip = 1;  // synthesis
  int64_t vocab_size = 0;         // synthesis: 0 picks the smallest that fits
  double noise = 0.1;             // synthesis: feature jitter

  void validate() const {
    if (bits != 32 && bits != 64)
      throw ConfigError("bits must be 32 or 64, got " + std::to_string(bits));
    if (split_gallery < 0) throw ConfigError("split_gallery must be nonnegative");
    if (!(noise >= 0.0)) throw ConfigError("noise must be nonnegative");
    train.validate();
  }

  static const std::set<std::string>& known_keys() {
    static const std::set<std::string> keys = [] {
      std::set<std::string> k = TrainConfig::known_keys();
      k.insert({"data", "out", "ckpt", "resume", "embeddings", "direction", "split_gallery",
                "axes", "bits", "clips", "classes", "captions_per_clip", "vocab_size", "noise"});
      return k;
    }();
    return keys;
  }

  /// Fully resolved echo; loading it back reproduces the run.
  KvFile to_kv() const {
    KvFile kv = train.to_kv();
    kv.set("data", data);
    kv.set("out", out);
    kv.set("ckpt", ckpt);
    kv.set("resume", resume);
    kv.set("embeddings", embeddings);
    kv.set("direction", direction_name(direction));
    kv.set_i64("split_gallery", split_gallery);
    kv.set("axes", KvFile::join_csv(axes));
    kv.set_i64("bits", bits);
    kv.set_i64("clips", clips);
    kv.set_i64("classes", classes);
    kv.set_i64("captions_per_clip", captions_per_clip);
    kv.set_i64("vocab_size", vocab_size);
    kv.set_f64("noise", noise);
    return kv;
  }

  /// Applies kv on top of the current values, so callers can layer defaults,
  /// then a config file, then command-line flags. Missing keys keep what is
  /// already there.
  void apply_kv(const KvFile& kv) {
    for (const auto& [k, v] : kv.items())
      if (!known_keys().count(k)) throw ConfigError("unknown config key '" + k + "'");
    if (kv.has("batch_size")) train.batch_size = kv.get_i64("batch_size");
    if (kv.has("epochs")) train.epochs = kv.get_i64("epochs");
    if (kv.has("margin")) train.margin = kv.get_f64("margin");
    if (kv.has("lr")) train.lr = kv.get_f64("lr");
    if (kv.has("seed")) train.seed = kv.get_i64("seed");
    if (kv.has("val_every")) train.val_every = kv.get_i64("val_every");
    if (kv.has("mode")) train.mode = weighting_mode_from_name(kv.get("mode"));
    if (kv.has("design")) train.model.design = design_from_name(kv.get("design"));
    if (kv.has("features")) train.model.features = feature_setting_from_name(kv.get("features"));
    if (kv.has("model_dim")) train.model.model_dim = kv.get_i64("model_dim");
    if (kv.has("heads")) train.model.heads = kv.get_i64("heads");
    if (kv.has("word_dim")) train.model.word_dim = kv.get_i64("word_dim");
    if (kv.has("d2")) train.model.d2 = kv.get_i64("d2");
    if (kv.has("d3")) train.model.d3 = kv.get_i64("d3");
    if (kv.has("droi")) train.model.droi = kv.get_i64("droi");
    if (kv.has("role_vocab")) train.model.role_vocab = kv.get_i64("role_vocab");
    if (kv.has("data")) data = kv.get("data");
    if (kv.has("out")) out = kv.get("out");
    if (kv.has("ckpt")) ckpt = kv.get("ckpt");
    if (kv.has("resume")) resume = kv.get("resume");
    if (kv.has("embeddings")) embeddings = kv.get("embeddings");
    if (kv.has("direction")) direction = direction_from_name(kv.get("direction"));
    if (kv.has("split_gallery")) split_gallery = kv.get_i64("split_gallery");
    if (kv.has("axes")) axes = KvFile::split_csv(kv.get("axes"));
    if (kv.has("bits")) bits = kv.get_i64("bits");
    if (kv.has("clips")) clips = kv.get_i64("clips");
    if (kv.has("classes")) classes = kv.get_i64("classes");
    if (kv.has("captions_per_clip")) captions_per_clip = kv.get_i64("captions_per_clip");
    if (kv.has("vocab_size")) vocab_size = kv.get_i64("vocab_size");
    if (kv.has("noise")) noise = kv.get_f64("noise");
  }

  static RunConfig from_kv(const KvFile& kv) {
    RunConfig c;
    c.apply_kv(kv);
    return c;
  }
};

/// Keeps the first n clips and the captions pointing at them; used to rank
/// against a smaller gallery than the corpus provides.
inline Corpus gallery_subset(const Corpus& full, int64_t n) {
  const int64_t total = static_cast<int64_t>(full.clips.size());
  if (n < 1) throw ValueError("gallery_subset: need at least 1 clip, got " + std::to_string(n));
  if (n > total)
    throw ValueError("gallery_subset: corpus has only " + std::to_string(total) + " clips, asked for " +
                     std::to_string(n));
  Corpus c;
  c.manifest = full.manifest;
  c.clips.assign(full.clips.begin(), full.clips.begin() + n);
  for (int64_t i = 0; i < n; ++i) c.clip_index[c.clips[static_cast<size_t>(i)].clip_id] = i;
  for (const auto& g : full.captions)
    if (c.clip_index.count(g.clip_id)) c.captions.push_back(g);
  if (c.captions.empty())
    throw ValueError("gallery_subset: no captions reference the first " + std::to_string(n) + " clips");
  c.manifest.n_clips = n;
  c.manifest.n_captions = static_cast<int64_t>(c.captions.size());
  return c;
}

}  // namespace rome
