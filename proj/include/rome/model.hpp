#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <type_traits>
#include <vector>

#include "rome/data_io.hpp"
#include "rome/error.hpp"
#include "rome/matching.hpp"
#include "rome/rng.hpp"
#include "rome/tensor.hpp"
#include "rome/text_encoder.hpp"
#include "rome/video_encoder.hpp"

namespace rome {

constexpr int64_t kGcnLayers = 2;

struct ModelConfig {
  int64_t model_dim = 1024;
  int64_t heads = 8;
  int64_t word_dim = 300;
  int64_t d2 = 2048;
  int64_t d3 = 2048;
  int64_t droi = 2048;
  int64_t role_vocab = 3;
  AttentionDesign design = AttentionDesign::mixed;
  FeatureSetting features = FeatureSetting::split;

  void validate() const {
    if (model_dim < 2 || model_dim % 2 != 0)
      throw ConfigError("model_dim must be even and at least 2, got " +
                        std::to_string(model_dim));
    if (heads < 1 || model_dim % heads != 0)
      throw ConfigError("model_dim " + std::to_string(model_dim) + " not divisible by heads " +
                        std::to_string(heads));
    if (word_dim < 1) throw ConfigError("word_dim must be positive");
    if (d2 < 1 || d3 < 1 || droi < 0) throw ConfigError("feature dims must be positive");
    if (role_vocab < 1) throw ConfigError("role vocabulary must be nonempty");
    if (features == FeatureSetting::split && droi == 0)
      throw ConfigError("feature setting 'split' routes the object expert to roi features, "
                        "but the corpus has none");
  }
};

// Input width of each expert's projection under the active feature setting.
struct ExpertDims {
  int64_t s, a, o;
};

inline ExpertDims expert_input_dims(const ModelConfig& c) {
  switch (c.features) {
    case FeatureSetting::two_d_only: return {c.d2, c.d2, c.d2};
    case FeatureSetting::split: return {c.d2, c.d3, c.droi};
    case FeatureSetting::concat_2d3d: return {c.d2 + c.d3, c.d2 + c.d3, c.d2 + c.d3};
  }
  throw ConfigError("bad feature setting");
}

/// The whole trainable model: one flat name->tensor map plus typed views
/// that share storage with it. Views stay valid as long as checkpoint
/// loading writes into the existing tensors instead of replacing them.
template <class S>
struct Model {
  ModelConfig cfg;
  std::map<std::string, Tensor<S>> params;
  EmbeddingTable<S> embed;
  TextParams<S> text;
  VideoParams<S> video;
  MatchParams<S> match;

  Tensor<S>& param(const std::string& name) {
    auto it = params.find(name);
    if (it == params.end()) throw ValueError("model has no parameter '" + name + "'");
    return it->second;
  }

  int64_t n_scalars() const {
    int64_t n = 0;
    for (const auto& [name, t] : params) n += static_cast<int64_t>(t.data->size());
    return n;
  }

  void zero_grad() {
    for (auto& [name, t] : params) t.zero_grad();
  }

  std::vector<std::string> vocabulary() const {
    std::vector<std::string> out(embed.vocab.size());
    for (const auto& [tok, row] : embed.vocab) out[static_cast<size_t>(row)] = tok;
    return out;
  }

  TextLevelEncodings<S> encode_caption(const CaptionGraph& g,
                                       std::type_identity_t<Tape<S>*> tape) const {
    return encode_text(g, embed, text, tape);
  }

  ExpertFeatures<S> expert_features(const ClipRecord& clip) const {
    auto row = [](const std::vector<float>& v) {
      Tensor<S> t({1, static_cast<int64_t>(v.size())});
      for (size_t i = 0; i < v.size(); ++i) (*t.data)[i] = static_cast<S>(v[i]);
      return t;
    };
    auto joined = [&] {
      std::vector<float> both = clip.f2d;
      both.insert(both.end(), clip.f3d.begin(), clip.f3d.end());
      return row(both);
    };
    ExpertFeatures<S> f;
    f.clip_id = clip.clip_id;
    switch (cfg.features) {
      case FeatureSetting::two_d_only:
        f.f_s = row(clip.f2d);
        f.f_a = row(clip.f2d);
        f.f_o = row(clip.f2d);
        break;
      case FeatureSetting::split:
        if (!clip.froi)
          throw ValueError("clip '" + clip.clip_id +
                           "' has no roi features but feature setting 'split' needs them");
        f.f_s = row(clip.f2d);
        f.f_a = row(clip.f3d);
        f.f_o = row(*clip.froi);
        break;
      case FeatureSetting::concat_2d3d:
        f.f_s = joined();
        f.f_a = joined();
        f.f_o = joined();
        break;
    }
    return f;
  }

  VideoLevelEncodings<S> encode_clip(const ClipRecord& clip,
                                     std::type_identity_t<Tape<S>*> tape) const {
    AttentionConfig ac{cfg.heads, cfg.model_dim, cfg.design};
    return encode_video(expert_features(clip), ac, video, tape);
  }
};

namespace detail {

// Shape of every parameter, keyed by canonical name. map order doubles as
// the initialization draw order.
inline std::map<std::string, std::vector<int64_t>> param_shapes(const ModelConfig& c,
                                                                int64_t vocab_size) {
  const int64_t d = c.model_dim, h = c.model_dim / 2;
  std::map<std::string, std::vector<int64_t>> out;
  out["text.embed"] = {vocab_size + 1, c.word_dim};
  for (const char* dir : {"fwd", "bwd"}) {
    std::string base = std::string("text.lstm.") + dir;
    out[base + ".w"] = {c.word_dim, 4 * h};
    out[base + ".u"] = {h, 4 * h};
    out[base + ".b"] = {4 * h};
  }
  out["text.query"] = {d};
  out["text.role_gate"] = {d, c.role_vocab};
  for (int64_t l = 0; l < kGcnLayers; ++l)
    out["text.gcn." + std::to_string(l) + ".w"] = {d, d};

  auto attn = [&](const std::string& base) {
    for (const char* m : {"wq", "wk", "wv", "wo"}) out[base + "." + m] = {d, d};
  };
  auto norm = [&](const std::string& base) {
    out[base + ".g"] = {d};
    out[base + ".b"] = {d};
  };
  auto ff = [&](const std::string& base) {
    out[base + ".w1"] = {d, 2 * d};
    out[base + ".b1"] = {2 * d};
    out[base + ".w2"] = {2 * d, d};
    out[base + ".b2"] = {d};
  };
  auto block = [&](const std::string& base) {
    attn(base + ".attn");
    norm(base + ".norm1");
    ff(base + ".ff");
    norm(base + ".norm2");
  };

  const ExpertDims din = expert_input_dims(c);
  out["video.proj.s.w"] = {din.s, d};
  out["video.proj.s.b"] = {d};
  out["video.proj.a.w"] = {din.a, d};
  out["video.proj.a.b"] = {d};
  out["video.proj.o.w"] = {din.o, d};
  out["video.proj.o.b"] = {d};
  block("video.appearance");
  for (const char* level : {"action", "object"}) {
    std::string base = std::string("video.") + level;
    attn(base + ".self");
    norm(base + ".norm_self");
    block(base + ".fuse");
    attn(base + ".cross");
    norm(base + ".norm_cross");
    ff(base + ".ff");
    norm(base + ".norm_ff");
  }

  out["match.a_video"] = {d, 3};
  out["match.a_text"] = {d, 3};
  return out;
}

template <class S>
void fill_embedding(Tensor<S>& embed, const std::map<std::string, int64_t>& vocab,
                    const WordVectors& wv) {
  const int64_t wd = embed.shape[1];
  if (wv.dim != wd)
    throw ConfigError("word embedding file has dim " + std::to_string(wv.dim) +
                      ", model expects " + std::to_string(wd));
  std::map<std::string, size_t> file_row;
  for (size_t i = 0; i < wv.tokens.size(); ++i) file_row[wv.tokens[i]] = i;

  std::vector<double> mean(static_cast<size_t>(wd), 0.0);
  std::vector<const std::string*> missing;
  int64_t found = 0;
  for (const auto& [tok, r] : vocab) {
    auto it = file_row.find(tok);
    if (it == file_row.end()) {
      missing.push_back(&tok);
      continue;
    }
    ++found;
    const std::vector<float>& src = wv.rows[it->second];
    for (int64_t j = 0; j < wd; ++j) {
      S v = static_cast<S>(src[static_cast<size_t>(j)]);
      embed.at2(r, j) = v;
      mean[static_cast<size_t>(j)] += static_cast<double>(v);
    }
  }
  if (found == 0)
    throw ConfigError("word embedding file covers none of the corpus vocabulary");
  // missing tokens and the unknown slot all get the mean of the found rows
  for (int64_t j = 0; j < wd; ++j) mean[static_cast<size_t>(j)] /= static_cast<double>(found);
  const int64_t unk = embed.shape[0] - 1;
  for (int64_t j = 0; j < wd; ++j) embed.at2(unk, j) = static_cast<S>(mean[static_cast<size_t>(j)]);
  for (const std::string* tok : missing) {
    int64_t r = vocab.at(*tok);
    for (int64_t j = 0; j < wd; ++j)
      embed.at2(r, j) = static_cast<S>(mean[static_cast<size_t>(j)]);
  }
}

}  // namespace detail

/// Builds and initializes the model. Draws happen in sorted parameter-name
/// order from the one generator: biases zero, norm gains one, the embedding
/// table uniform(-0.1, 0.1) (or copied from word_vectors when given, unknown
/// and uncovered tokens getting the mean row), every other tensor
/// uniform(+-1/sqrt(fan_in)) with fan_in its leading extent.
template <class S>
Model<S> build_model(const ModelConfig& cfg, std::vector<std::string> vocabulary, Rng& rng,
                     const WordVectors* word_vectors = nullptr) {
  cfg.validate();
  std::sort(vocabulary.begin(), vocabulary.end());
  vocabulary.erase(std::unique(vocabulary.begin(), vocabulary.end()), vocabulary.end());
  if (vocabulary.empty()) throw ConfigError("cannot build a model over an empty vocabulary");

  Model<S> m;
  m.cfg = cfg;
  for (size_t i = 0; i < vocabulary.size(); ++i)
    m.embed.vocab[vocabulary[i]] = static_cast<int64_t>(i);

  auto shapes = detail::param_shapes(cfg, static_cast<int64_t>(vocabulary.size()));
  for (const auto& [name, shape] : shapes) m.params.emplace(name, Tensor<S>(shape));

  for (auto& [name, t] : m.params) {
    if (name == "text.embed") {
      if (word_vectors) {
        detail::fill_embedding(t, m.embed.vocab, *word_vectors);
      } else {
        for (auto& v : *t.data) v = static_cast<S>(rng.uniform(-0.1, 0.1));
      }
    } else if (name.ends_with(".b") || name.ends_with(".b1") || name.ends_with(".b2")) {
      // zeros already
    } else if (name.ends_with(".g")) {
      for (auto& v : *t.data) v = S(1);
    } else {
      double bound = 1.0 / std::sqrt(static_cast<double>(t.shape[0]));
      for (auto& v : *t.data) v = static_cast<S>(rng.uniform(-bound, bound));
    }
    t.enable_grad();
  }

  auto& P = m.params;
  auto at = [&P](const std::string& n) -> Tensor<S>& { return P.at(n); };

  m.embed.vectors = at("text.embed");
  m.embed.unknown_row = static_cast<int64_t>(vocabulary.size());

  m.text.lstm_fwd_w = at("text.lstm.fwd.w");
  m.text.lstm_fwd_u = at("text.lstm.fwd.u");
  m.text.lstm_fwd_b = at("text.lstm.fwd.b");
  m.text.lstm_bwd_w = at("text.lstm.bwd.w");
  m.text.lstm_bwd_u = at("text.lstm.bwd.u");
  m.text.lstm_bwd_b = at("text.lstm.bwd.b");
  m.text.query = at("text.query");
  m.text.role_gate = at("text.role_gate");
  for (int64_t l = 0; l < kGcnLayers; ++l)
    m.text.gcn_w.push_back(at("text.gcn." + std::to_string(l) + ".w"));

  auto attn = [&](const std::string& base) {
    return AttnParams<S>{at(base + ".wq"), at(base + ".wk"), at(base + ".wv"), at(base + ".wo")};
  };
  auto norm = [&](const std::string& base) {
    return NormParams<S>{at(base + ".g"), at(base + ".b")};
  };
  auto ff = [&](const std::string& base) {
    return FeedForwardParams<S>{at(base + ".w1"), at(base + ".b1"), at(base + ".w2"),
                                at(base + ".b2")};
  };
  auto block = [&](const std::string& base) {
    return EncoderBlockParams<S>{attn(base + ".attn"), norm(base + ".norm1"), ff(base + ".ff"),
                                 norm(base + ".norm2")};
  };
  auto local = [&](const std::string& base) {
    return LocalLevelParams<S>{attn(base + ".self"),  norm(base + ".norm_self"),
                               block(base + ".fuse"), attn(base + ".cross"),
                               norm(base + ".norm_cross"), ff(base + ".ff"),
                               norm(base + ".norm_ff")};
  };

  m.video.proj_s_w = at("video.proj.s.w");
  m.video.proj_s_b = at("video.proj.s.b");
  m.video.proj_a_w = at("video.proj.a.w");
  m.video.proj_a_b = at("video.proj.a.b");
  m.video.proj_o_w = at("video.proj.o.w");
  m.video.proj_o_b = at("video.proj.o.b");
  m.video.appearance = block("video.appearance");
  m.video.action = local("video.action");
  m.video.object = local("video.object");

  m.match.a_video = at("match.a_video");
  m.match.a_text = at("match.a_text");
  return m;
}

}  // namespace rome
