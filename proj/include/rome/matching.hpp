#pragma once

#include <string>
#include <type_traits>
#include <vector>

#include "rome/error.hpp"
#include "rome/tensor.hpp"
#include "rome/text_encoder.hpp"
#include "rome/video_encoder.hpp"

namespace rome {

// Which side's expert-weight head drives the level mixture.
enum class WeightingMode { average, text_only, video_only, both };

inline const char* weighting_mode_name(WeightingMode m) {
  switch (m) {
    case WeightingMode::average: return "average";
    case WeightingMode::text_only: return "text";
    case WeightingMode::video_only: return "video";
    case WeightingMode::both: return "both";
  }
  throw ValueError("weighting_mode_name: bad enum value");
}

inline WeightingMode weighting_mode_from_name(const std::string& name) {
  if (name == "average") return WeightingMode::average;
  if (name == "text") return WeightingMode::text_only;
  if (name == "video") return WeightingMode::video_only;
  if (name == "both") return WeightingMode::both;
  throw ConfigError("unknown weighting mode '" + name +
                    "', expected one of: average, text, video, both");
}

/// Mixing heads for the weighted similarity: column i of each matrix scores
/// level i of its side. The text head is only read by text/both modes.
template <class S>
struct MatchParams {
  Tensor<S> a_video;  // [dim, 3]
  Tensor<S> a_text;   // [dim, 3]
  S margin = S(0.2);
};

namespace detail {

template <class S>
bool all_zero(const Tensor<S>& t) {
  for (S x : *t.data)
    if (x != S(0)) return false;
  return true;
}

}  // namespace detail

/// Cosine similarity between one video-level and one text-level encoding.
/// The level name only feeds error messages.
template <class S>
Tensor<S> level_cosine(const Tensor<S>& v, const Tensor<S>& c, const std::string& level,
                       std::type_identity_t<Tape<S>*> tape) {
  if (v.shape != c.shape)
    throw ShapeError("level_cosine: " + shape_str(v.shape) + " vs " + shape_str(c.shape) +
                     " at level '" + level + "'");
  if (detail::all_zero(v))
    throw ValueError("level_cosine: zero-norm video vector at level '" + level + "'");
  if (detail::all_zero(c))
    throw ValueError("level_cosine: zero-norm text vector at level '" + level + "'");
  auto nv = sqrt_t(reduce_sum(mul(v, v, tape), tape), tape);
  auto nc = sqrt_t(reduce_sum(mul(c, c, tape), tape), tape);
  return div(dot(v, c, tape), mul(nv, nc, tape), tape);
}

/// Softmax mixture over the three levels; logit i = encoding_i . a[:, i].
template <class S>
Tensor<S> expert_weights(const Tensor<S>& level1, const Tensor<S>& level2, const Tensor<S>& level3,
                         const Tensor<S>& a, std::type_identity_t<Tape<S>*> tape) {
  if (a.rank() != 2 || a.shape[1] != 3)
    throw ShapeError("expert_weights: mixing head must be [dim, 3], got " + shape_str(a.shape));
  const Tensor<S>* levels[3] = {&level1, &level2, &level3};
  std::vector<Tensor<S>> logits;
  for (int64_t i = 0; i < 3; ++i) {
    const Tensor<S>& l = *levels[i];
    if (l.rank() != 1 || l.shape[0] != a.shape[0])
      throw ShapeError("expert_weights: level " + std::to_string(i + 1) + " is " +
                       shape_str(l.shape) + ", head expects [" + std::to_string(a.shape[0]) + "]");
    auto col = reshape(slice(a, 1, i, i + 1, tape), {a.shape[0]});
    logits.push_back(dot(l, col, tape));
  }
  return softmax(concat(logits, 0, tape), 0, tape);
}

template <class S>
Tensor<S> expert_weights(const VideoLevelEncodings<S>& v, const Tensor<S>& a,
                         std::type_identity_t<Tape<S>*> tape) {
  return expert_weights(v.appearance, v.action, v.object, a, tape);
}

template <class S>
Tensor<S> expert_weights(const TextLevelEncodings<S>& t, const Tensor<S>& a,
                         std::type_identity_t<Tape<S>*> tape) {
  return expert_weights(t.event, t.action, t.object, a, tape);
}

/// Weighted sum of the three level cosines. average divides the plain sum
/// by three so it agrees bitwise with the arithmetic mean of the cosines.
template <class S>
Tensor<S> match_score(const VideoLevelEncodings<S>& v, const TextLevelEncodings<S>& c,
                      WeightingMode mode, const MatchParams<S>& p,
                      std::type_identity_t<Tape<S>*> tape) {
  std::vector<Tensor<S>> per_level = {
      level_cosine(v.appearance, c.event, "global", tape),
      level_cosine(v.action, c.action, "action", tape),
      level_cosine(v.object, c.object, "object", tape),
  };
  auto cosines = concat(per_level, 0, tape);
  if (mode == WeightingMode::average)
    return div(reduce_sum(cosines, tape), Tensor<S>::full({1}, S(3)), tape);
  Tensor<S> w;
  switch (mode) {
    case WeightingMode::video_only: w = expert_weights(v, p.a_video, tape); break;
    case WeightingMode::text_only: w = expert_weights(c, p.a_text, tape); break;
    default:
      w = scalar_mul(
          add(expert_weights(v, p.a_video, tape), expert_weights(c, p.a_text, tape), tape),
          S(0.5), tape);
      break;
  }
  return dot(w, cosines, tape);
}

/// Margin ranking loss over a square score matrix, scores[i][j] pairing
/// video i with caption j and the diagonal holding the positives. Every
/// off-diagonal entry contributes a hinge in both retrieval directions;
/// the result is the mean over all 2B(B-1) terms.
template <class S>
Tensor<S> contrastive_loss(const Tensor<S>& scores, S margin,
                           std::type_identity_t<Tape<S>*> tape) {
  if (scores.rank() != 2 || scores.shape[0] != scores.shape[1])
    throw ShapeError("contrastive_loss: expected a square score matrix, got " +
                     shape_str(scores.shape));
  const int64_t B = scores.shape[0];
  if (B < 2)
    throw ValueError("contrastive_loss: batch of " + std::to_string(B) + " has no negative pairs");
  if (!(margin > S(0))) throw ValueError("contrastive_loss: margin must be positive");

  auto eye = Tensor<S>::zeros({B, B});
  auto off_diag = Tensor<S>::full({B, B}, S(1));
  for (int64_t i = 0; i < B; ++i) {
    (*eye.data)[static_cast<size_t>(i * B + i)] = S(1);
    (*off_diag.data)[static_cast<size_t>(i * B + i)] = S(0);
  }
  auto ones_col = Tensor<S>::full({B, 1}, S(1));
  auto ones_row = Tensor<S>::full({1, B}, S(1));
  auto diag_col = matmul(mul(scores, eye, tape), ones_col, tape);  // [B,1] of scores[i][i]
  auto pos = matmul(diag_col, ones_row, tape);                     // row i filled with scores[i][i]
  auto marg = Tensor<S>::full({B, B}, margin);

  auto t2v = mul(relu_t(sub(add(scores, marg, tape), pos, tape), tape), off_diag, tape);
  auto v2t = mul(relu_t(sub(add(transpose(scores, tape), marg, tape), pos, tape), tape), off_diag,
                 tape);
  auto total = reduce_sum(add(t2v, v2t, tape), tape);
  return scalar_mul(total, S(1) / (S(2) * S(B) * S(B - 1)), tape);
}

}  // namespace rome
