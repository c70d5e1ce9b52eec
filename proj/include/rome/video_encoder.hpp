#pragma once

#include <cmath>
#include <string>
#include <type_traits>
#include <vector>

#include "rome/error.hpp"
#include "rome/tensor.hpp"

namespace rome {

enum class AttentionDesign { mixed, self_all };
enum class FeatureSetting { two_d_only, split, concat_2d3d };

inline std::string design_name(AttentionDesign d) {
  return d == AttentionDesign::mixed ? "mixed" : "self_all";
}

inline AttentionDesign design_from_name(const std::string& s) {
  if (s == "mixed") return AttentionDesign::mixed;
  if (s == "self_all") return AttentionDesign::self_all;
  throw ConfigError("unknown design '" + s + "' (valid: mixed, self_all)");
}

inline std::string feature_setting_name(FeatureSetting f) {
  switch (f) {
    case FeatureSetting::two_d_only: return "2d_only";
    case FeatureSetting::split: return "split";
    case FeatureSetting::concat_2d3d: return "concat";
  }
  return "?";
}

inline FeatureSetting feature_setting_from_name(const std::string& s) {
  if (s == "2d_only") return FeatureSetting::two_d_only;
  if (s == "split") return FeatureSetting::split;
  if (s == "concat") return FeatureSetting::concat_2d3d;
  throw ConfigError("unknown feature setting '" + s + "' (valid: 2d_only, split, concat)");
}

struct AttentionConfig {
  int64_t heads = 8;
  int64_t model_dim = 1024;
  AttentionDesign design = AttentionDesign::mixed;

  int64_t head_dim() const {
    if (heads < 1 || model_dim % heads != 0)
      throw ConfigError("model_dim " + std::to_string(model_dim) + " not divisible by " +
                        std::to_string(heads) + " heads");
    return model_dim / heads;
  }
};

template <class S>
struct AttnParams {
  Tensor<S> wq, wk, wv, wo;  // [model_dim, model_dim] each
};

template <class S>
struct NormParams {
  Tensor<S> gain, bias;  // [model_dim]
};

template <class S>
struct FeedForwardParams {
  Tensor<S> w1, b1, w2, b2;  // [d, ff_dim], [ff_dim], [ff_dim, d], [d]
};

/// Self-attention residual block followed by a feed-forward residual block,
/// each closed by its own layer norm.
template <class S>
struct EncoderBlockParams {
  AttnParams<S> self_attn;
  NormParams<S> norm_attn;
  FeedForwardParams<S> ff;
  NormParams<S> norm_ff;
};

/// Parameters of one local (action or object) level: its own self-attention,
/// the fusion block over the two context experts, the cross-modal attention,
/// and the closing feed-forward.
template <class S>
struct LocalLevelParams {
  AttnParams<S> self_attn;
  NormParams<S> norm_self;
  EncoderBlockParams<S> fuse;
  AttnParams<S> cross;
  NormParams<S> norm_cross;
  FeedForwardParams<S> ff;
  NormParams<S> norm_ff;
};

template <class S>
struct VideoParams {
  Tensor<S> proj_s_w, proj_s_b;  // expert projections into model_dim
  Tensor<S> proj_a_w, proj_a_b;
  Tensor<S> proj_o_w, proj_o_b;
  EncoderBlockParams<S> appearance;
  LocalLevelParams<S> action;
  LocalLevelParams<S> object;
};

/// Raw (pre-projection) expert feature sequences for one clip.
template <class S>
struct ExpertFeatures {
  std::string clip_id;
  Tensor<S> f_s, f_a, f_o;  // [T, d_expert]
};

template <class S>
struct VideoLevelEncodings {
  Tensor<S> appearance;  // [model_dim] each
  Tensor<S> action;
  Tensor<S> object;
};

inline constexpr double kNormEps = 1e-5;

template <class S>
Tensor<S> multi_head_attention(const Tensor<S>& Q, const Tensor<S>& K, const Tensor<S>& V,
                               const AttnParams<S>& p, int64_t heads,
                               std::type_identity_t<Tape<S>*> tape) {
  if (Q.rank() != 2 || K.rank() != 2 || V.rank() != 2)
    throw ShapeError("multi_head_attention: rank-2 inputs required");
  const int64_t d = Q.shape[1];
  if (K.shape[1] != d || V.shape[1] != d || K.shape[0] != V.shape[0])
    throw ShapeError("multi_head_attention: inconsistent shapes Q" + shape_str(Q.shape) + " K" +
                     shape_str(K.shape) + " V" + shape_str(V.shape));
  if (heads < 1 || d % heads != 0)
    throw ShapeError("multi_head_attention: dim " + std::to_string(d) + " not divisible by " +
                     std::to_string(heads) + " heads");
  const int64_t hd = d / heads;
  auto q = matmul(Q, p.wq, tape);
  auto k = matmul(K, p.wk, tape);
  auto v = matmul(V, p.wv, tape);
  const S scale = S(1) / std::sqrt(static_cast<S>(hd));
  std::vector<Tensor<S>> head_out;
  head_out.reserve(static_cast<size_t>(heads));
  for (int64_t h = 0; h < heads; ++h) {
    auto qh = slice(q, 1, h * hd, (h + 1) * hd, tape);
    auto kh = slice(k, 1, h * hd, (h + 1) * hd, tape);
    auto vh = slice(v, 1, h * hd, (h + 1) * hd, tape);
    auto scores = scalar_mul(matmul(qh, transpose(kh, tape), tape), scale, tape);
    auto weights = softmax(scores, 1, tape);  // one simplex row per query
    head_out.push_back(matmul(weights, vh, tape));
  }
  return matmul(concat(head_out, 1, tape), p.wo, tape);
}

template <class S>
Tensor<S> feed_forward(const Tensor<S>& X, const FeedForwardParams<S>& p,
                       std::type_identity_t<Tape<S>*> tape) {
  auto hidden = relu_t(add_rowvec(matmul(X, p.w1, tape), p.b1, tape), tape);
  return add_rowvec(matmul(hidden, p.w2, tape), p.b2, tape);
}

template <class S>
Tensor<S> residual_norm(const Tensor<S>& branch, const Tensor<S>& residual, const NormParams<S>& n,
                        std::type_identity_t<Tape<S>*> tape) {
  return layer_norm(add(branch, residual, tape), n.gain, n.bias, S(kNormEps), tape);
}

/// Norm(MHA(F,F,F) + F) then Norm(FF(z) + z); the appearance path and the
/// context-fusion path are both exactly this block.
template <class S>
Tensor<S> encoder_block(const Tensor<S>& F, const EncoderBlockParams<S>& p, int64_t heads,
                        std::type_identity_t<Tape<S>*> tape) {
  auto z = residual_norm(multi_head_attention(F, F, F, p.self_attn, heads, tape), F, p.norm_attn,
                         tape);
  return residual_norm(feed_forward(z, p.ff, tape), z, p.norm_ff, tape);
}

template <class S>
Tensor<S> encode_appearance(const Tensor<S>& F_s, const EncoderBlockParams<S>& p, int64_t heads,
                            std::type_identity_t<Tape<S>*> tape) {
  return encoder_block(F_s, p, heads, tape);
}

/// Context fusion: the two context expert sequences are joined along the
/// token axis and passed through one encoder block.
template <class S>
Tensor<S> fuse_context(const Tensor<S>& F_x, const Tensor<S>& F_y, const EncoderBlockParams<S>& p,
                       int64_t heads, std::type_identity_t<Tape<S>*> tape) {
  if (F_x.shape[1] != F_y.shape[1])
    throw ShapeError("fuse_context: dims " + shape_str(F_x.shape) + " vs " + shape_str(F_y.shape));
  return encoder_block(concat<S>({F_x, F_y}, 0, tape), p, heads, tape);
}

namespace detail {

// The cross block's residual joins two sequences that may have different
// lengths (queries come from the fused context, the residual from the
// target stream). Equal lengths add directly; a length-1 side broadcasts
// over the other; when one length divides the other the shorter side is
// tiled to match; anything else is a shape error.
template <class S>
Tensor<S> add_cross_residual(const Tensor<S>& u, const Tensor<S>& z, Tape<S>* tape) {
  if (u.shape[0] == z.shape[0]) return add(u, z, tape);
  if (z.shape[0] == 1) return add_rowvec(u, reshape(z, {z.shape[1]}), tape);
  if (u.shape[0] == 1) return add_rowvec(z, reshape(u, {u.shape[1]}), tape);
  auto tile = [&](const Tensor<S>& t, int64_t copies) {
    std::vector<Tensor<S>> parts(static_cast<size_t>(copies), t);
    return concat(parts, 0, tape);
  };
  if (u.shape[0] % z.shape[0] == 0) return add(u, tile(z, u.shape[0] / z.shape[0]), tape);
  if (z.shape[0] % u.shape[0] == 0) return add(tile(u, z.shape[0] / u.shape[0]), z, tape);
  throw ShapeError("cross residual: incompatible lengths " + shape_str(u.shape) + " vs " +
                   shape_str(z.shape));
}

}  // namespace detail

///// One local level: self-attend the target expert, fuse the two context
/// experts, cross-attend (queries from the fused context, keys/values from
/// the target), then feed-forward. Residuals stay on the target stream.
template <class S>
Tensor<S> encode_local_level(const Tensor<S>& F_target, const Tensor<S>& F_ctx1,
                             const Tensor<S>& F_ctx2, const LocalLevelParams<S>& p, int64_t heads,
                             std::type_identity_t<Tape<S>*> tape) {
  auto z = residual_norm(multi_head_attention(F_target, F_target, F_target, p.self_attn, heads,
                                              tape),
                         F_target, p.norm_self, tape);
  auto s = fuse_context(F_ctx1, F_ctx2, p.fuse, heads, tape);
  auto u = multi_head_attention(s, z, z, p.cross, heads, tape);
  auto c = layer_norm(detail::add_cross_residual(u, z, tape), p.norm_cross.gain, p.norm_cross.bias,
                      S(kNormEps), tape);
  return residual_norm(feed_forward(c, p.ff, tape), c, p.norm_ff, tape);
}

/// Mean over sequence rows; identity for the default length-1 sequences.
template <class S>
Tensor<S> mean_rows(const Tensor<S>& X, std::type_identity_t<Tape<S>*> tape) {
  const int64_t T = X.shape[0];
  if (T == 1) return reshape(X, {X.shape[1]});
  auto weights = Tensor<S>::full({1, T}, S(1) / static_cast<S>(T));
  return reshape(matmul(weights, X, tape), {X.shape[1]});
}

/// Full video pipeline. The appearance level sees only its own expert (the
/// intra-modality rule); under the mixed design the two local levels also
/// attend to the other experts, while self_all keeps every level self-only.
template <class S>
VideoLevelEncodings<S> encode_video(const ExpertFeatures<S>& feats, const AttentionConfig& cfg,
                                    const VideoParams<S>& p, std::type_identity_t<Tape<S>*> tape) {
  auto project = [&](const Tensor<S>& raw, const Tensor<S>& w, const Tensor<S>& b) {
    if (raw.rank() != 2 || raw.shape[1] != w.shape[0])
      throw ShapeError("encode_video: expert features " + shape_str(raw.shape) +
                       " do not match projection " + shape_str(w.shape));
    return add_rowvec(matmul(raw, w, tape), b, tape);
  };
  auto F_s = project(feats.f_s, p.proj_s_w, p.proj_s_b);
  auto F_a = project(feats.f_a, p.proj_a_w, p.proj_a_b);
  auto F_o = project(feats.f_o, p.proj_o_w, p.proj_o_b);

  VideoLevelEncodings<S> out;
  out.appearance = mean_rows(encode_appearance(F_s, p.appearance, cfg.heads, tape), tape);
  if (cfg.design == AttentionDesign::mixed) {
    out.action =
        mean_rows(encode_local_level(F_a, F_s, F_o, p.action, cfg.heads, tape), tape);
    out.object =
        mean_rows(encode_local_level(F_o, F_s, F_a, p.object, cfg.heads, tape), tape);
  } else {
    const EncoderBlockParams<S> a_block{p.action.self_attn, p.action.norm_self, p.action.ff,
                                        p.action.norm_ff};
    const EncoderBlockParams<S> o_block{p.object.self_attn, p.object.norm_self, p.object.ff,
                                        p.object.norm_ff};
    out.action = mean_rows(encoder_block(F_a, a_block, cfg.heads, tape), tape);
    out.object = mean_rows(encoder_block(F_o, o_block, cfg.heads, tape), tape);
  }
  return out;
}

}  // namespace rome
