#pragma once

#include <algorithm>
#include <array>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "rome/data_io.hpp"
#include "rome/error.hpp"
#include "rome/matching.hpp"
#include "rome/model.hpp"
#include "rome/tensor.hpp"

namespace rome {

enum class Direction { text_to_video, video_to_text };

inline const char* direction_name(Direction d) {
  return d == Direction::text_to_video ? "text_to_video" : "video_to_text";
}

inline Direction direction_from_name(const std::string& s) {
  if (s == "t2v" || s == "text_to_video") return Direction::text_to_video;
  if (s == "v2t" || s == "video_to_text") return Direction::video_to_text;
  throw ConfigError("unknown direction '" + s + "', expected t2v or v2t");
}

struct RetrievalReport {
  Direction direction = Direction::text_to_video;
  int64_t gallery_size = 0;
  int64_t query_count = 0;
  std::map<int64_t, double> recall_at;  // k -> percentage
  int64_t median_rank = 0;
  std::vector<int64_t> ranks;  // one per query, 1-based
};

/// Rank of the ground-truth item per query row. Ties are pessimistic: any
/// gallery item scoring >= the truth counts as ranked ahead of it, so a
/// row of identical scores yields rank N rather than flattering rank 1.
template <class S>
std::vector<int64_t> ranks_from_scores(const Tensor<S>& scores,
                                       const std::vector<int64_t>& truth) {
  if (scores.rank() != 2)
    throw ShapeError("ranks_from_scores: expected a [queries, gallery] matrix, got " +
                     shape_str(scores.shape));
  const int64_t q_count = scores.shape[0];
  const int64_t n = scores.shape[1];
  if (static_cast<int64_t>(truth.size()) != q_count)
    throw ValueError("ranks_from_scores: " + std::to_string(q_count) + " queries but " +
                     std::to_string(truth.size()) + " ground-truth entries");
  std::vector<int64_t> ranks(static_cast<size_t>(q_count));
  const S* p = scores.ptr();
  for (int64_t q = 0; q < q_count; ++q) {
    const int64_t t = truth[static_cast<size_t>(q)];
    if (t < 0 || t >= n)
      throw ValueError("ranks_from_scores: query " + std::to_string(q) + " has ground truth " +
                       std::to_string(t) + " outside the gallery of " + std::to_string(n));
    const S* row = p + q * n;
    const S st = row[t];
    int64_t ahead = 0;
    for (int64_t j = 0; j < n; ++j)
      if (j != t && row[j] >= st) ++ahead;
    ranks[static_cast<size_t>(q)] = 1 + ahead;
  }
  return ranks;
}

inline double recall_at_k(const std::vector<int64_t>& ranks, int64_t k) {
  if (ranks.empty()) throw ValueError("recall_at_k: empty rank list");
  if (k < 1) throw ValueError("recall_at_k: k must be at least 1");
  int64_t hits = 0;
  for (int64_t r : ranks)
    if (r <= k) ++hits;
  return 100.0 * static_cast<double>(hits) / static_cast<double>(ranks.size());
}

/// Lower median: element at 1-based position ceil(Q/2) of the sorted list,
/// so the result is always one of the observed integer ranks.
inline int64_t median_rank(const std::vector<int64_t>& ranks) {
  if (ranks.empty()) throw ValueError("median_rank: empty rank list");
  std::vector<int64_t> sorted = ranks;
  std::sort(sorted.begin(), sorted.end());
  return sorted[static_cast<size_t>((static_cast<int64_t>(sorted.size()) + 1) / 2 - 1)];
}

inline RetrievalReport make_report(Direction direction, int64_t gallery_size,
                                   std::vector<int64_t> ranks,
                                   const std::vector<int64_t>& ks = {1, 5, 10}) {
  RetrievalReport r;
  r.direction = direction;
  r.gallery_size = gallery_size;
  r.query_count = static_cast<int64_t>(ranks.size());
  for (int64_t k : ks) r.recall_at[k] = recall_at_k(ranks, k);
  r.median_rank = median_rank(ranks);
  r.ranks = std::move(ranks);
  return r;
}

namespace detail {

// Per-item scoring summary. Pair scores recompute the cosine exactly as the
// taped path does (sequential sums from zero, then one divide by the norm
// product), so a matrix entry is bitwise equal to the per-pair match score.
template <class S>
struct LevelSummary {
  std::array<std::vector<S>, 3> level;
  std::array<S, 3> norm;
  std::array<S, 3> weight;
};

template <class S>
LevelSummary<S> summarize_levels(const Tensor<S>& l1, const Tensor<S>& l2, const Tensor<S>& l3,
                                 const Tensor<S>& head, const char* side) {
  static constexpr const char* kLevelNames[3] = {"global", "action", "object"};
  LevelSummary<S> out;
  const Tensor<S>* ls[3] = {&l1, &l2, &l3};
  for (int i = 0; i < 3; ++i) {
    const Tensor<S>& t = *ls[i];
    if (t.rank() != 1)
      throw ShapeError(std::string("score_matrix: ") + side + " level '" + kLevelNames[i] +
                       "' must be a vector, got " + shape_str(t.shape));
    if (all_zero(t))
      throw ValueError(std::string("level_cosine: zero-norm ") + side + " vector at level '" +
                       kLevelNames[i] + "'");
    out.level[i].assign(t.ptr(), t.ptr() + t.numel());
    S acc = S(0);
    for (S x : out.level[i]) acc += x * x;
    out.norm[i] = std::sqrt(acc);
  }
  auto w = expert_weights(l1, l2, l3, head, nullptr);
  for (int i = 0; i < 3; ++i) out.weight[i] = w.at(i);
  return out;
}

template <class S>
S pair_score(const LevelSummary<S>& v, const LevelSummary<S>& c, WeightingMode mode) {
  S cos[3];
  for (int i = 0; i < 3; ++i) {
    const std::vector<S>& a = v.level[i];
    const std::vector<S>& b = c.level[i];
    S acc = S(0);
    for (size_t j = 0; j < a.size(); ++j) acc += a[j] * b[j];
    cos[i] = acc / (v.norm[i] * c.norm[i]);
  }
  if (mode == WeightingMode::average) {
    S acc = S(0);
    for (int i = 0; i < 3; ++i) acc += cos[i];
    return acc / S(3);
  }
  S w[3];
  switch (mode) {
    case WeightingMode::video_only:
      for (int i = 0; i < 3; ++i) w[i] = v.weight[i];
      break;
    case WeightingMode::text_only:
      for (int i = 0; i < 3; ++i) w[i] = c.weight[i];
      break;
    default:
      for (int i = 0; i < 3; ++i) w[i] = (v.weight[i] + c.weight[i]) * S(0.5);
      break;
  }
  S acc = S(0);
  for (int i = 0; i < 3; ++i) acc += w[i] * cos[i];
  return acc;
}

}  // namespace detail

/// Q x N score matrix: rows are queries, columns the gallery. text_to_video
/// queries with captions over the video gallery; video_to_text swaps roles.
template <class S>
Tensor<S> score_matrix(const std::vector<VideoLevelEncodings<S>>& videos,
                       const std::vector<TextLevelEncodings<S>>& captions,
                       const MatchParams<S>& match, WeightingMode mode, Direction direction) {
  if (videos.empty()) throw ValueError("score_matrix: no videos");
  if (captions.empty()) throw ValueError("score_matrix: no captions");
  std::vector<detail::LevelSummary<S>> vs, cs;
  vs.reserve(videos.size());
  cs.reserve(captions.size());
  for (const auto& v : videos)
    vs.push_back(detail::summarize_levels(v.appearance, v.action, v.object, match.a_video, "video"));
  for (const auto& c : captions)
    cs.push_back(detail::summarize_levels(c.event, c.action, c.object, match.a_text, "text"));
  for (int i = 0; i < 3; ++i) {
    if (vs[0].level[i].size() != cs[0].level[i].size())
      throw ShapeError("score_matrix: video level dim " + std::to_string(vs[0].level[i].size()) +
                       " vs text level dim " + std::to_string(cs[0].level[i].size()));
    for (const auto& s : vs)
      if (s.level[i].size() != vs[0].level[i].size())
        throw ShapeError("score_matrix: videos disagree on level dims");
    for (const auto& s : cs)
      if (s.level[i].size() != cs[0].level[i].size())
        throw ShapeError("score_matrix: captions disagree on level dims");
  }

  const bool t2v = direction == Direction::text_to_video;
  const int64_t q_count = static_cast<int64_t>(t2v ? cs.size() : vs.size());
  const int64_t n = static_cast<int64_t>(t2v ? vs.size() : cs.size());
  Tensor<S> scores({q_count, n});
  S* p = scores.ptr();
  for (int64_t q = 0; q < q_count; ++q)
    for (int64_t j = 0; j < n; ++j) {
      const auto& v = t2v ? vs[static_cast<size_t>(j)] : vs[static_cast<size_t>(q)];
      const auto& c = t2v ? cs[static_cast<size_t>(q)] : cs[static_cast<size_t>(j)];
      p[q * n + j] = detail::pair_score(v, c, mode);
    }
  return scores;
}

/// Ground-truth gallery index per query. Videos are galleried in corpus
/// order; a video query retrieves its first caption in corpus order.
inline std::vector<int64_t> ground_truth(const Corpus& corpus, Direction direction) {
  if (direction == Direction::text_to_video) {
    std::vector<int64_t> truth(corpus.captions.size());
    for (size_t q = 0; q < corpus.captions.size(); ++q)
      truth[q] = corpus.clip_of_caption(static_cast<int64_t>(q));
    return truth;
  }
  std::vector<int64_t> truth(corpus.clips.size(), -1);
  for (size_t c = 0; c < corpus.captions.size(); ++c) {
    const int64_t clip = corpus.clip_of_caption(static_cast<int64_t>(c));
    auto& slot = truth[static_cast<size_t>(clip)];
    if (slot < 0) slot = static_cast<int64_t>(c);
  }
  for (size_t v = 0; v < truth.size(); ++v)
    if (truth[v] < 0)
      throw ValueError("ground_truth: clip '" + corpus.clips[v].clip_id + "' has no caption");
  return truth;
}

template <class S>
RetrievalReport evaluate(const Model<S>& model, const Corpus& corpus, WeightingMode mode,
                         Direction direction, const std::vector<int64_t>& ks = {1, 5, 10}) {
  std::vector<VideoLevelEncodings<S>> vids;
  vids.reserve(corpus.clips.size());
  for (const auto& clip : corpus.clips) vids.push_back(model.encode_clip(clip, nullptr));
  std::vector<TextLevelEncodings<S>> caps;
  caps.reserve(corpus.captions.size());
  for (const auto& g : corpus.captions) caps.push_back(model.encode_caption(g, nullptr));
  auto scores = score_matrix(vids, caps, model.match, mode, direction);
  auto ranks = ranks_from_scores(scores, ground_truth(corpus, direction));
  return make_report(direction, scores.shape[1], std::move(ranks), ks);
}

inline double recall_or_throw(const RetrievalReport& r, int64_t k) {
  auto it = r.recall_at.find(k);
  if (it == r.recall_at.end())
    throw ValueError("report has no recall at k=" + std::to_string(k));
  return it->second;
}

inline std::string format_report(const RetrievalReport& r) {
  std::string out = std::string(direction_name(r.direction)) + ": " +
                    std::to_string(r.query_count) + " queries over " +
                    std::to_string(r.gallery_size) + " gallery items\n ";
  char buf[64];
  for (const auto& [k, pct] : r.recall_at) {
    std::snprintf(buf, sizeof(buf), " R@%lld %.2f", static_cast<long long>(k), pct);
    out += buf;
  }
  std::snprintf(buf, sizeof(buf), "  MedR %lld\n", static_cast<long long>(r.median_rank));
  out += buf;
  return out;
}

inline KvFile report_to_kv(const RetrievalReport& r) {
  KvFile kv;
  kv.set("direction", direction_name(r.direction));
  kv.set_i64("gallery", r.gallery_size);
  kv.set_i64("queries", r.query_count);
  for (const auto& [k, pct] : r.recall_at) kv.set_f64("r" + std::to_string(k), pct);
  kv.set_i64("medr", r.median_rank);
  return kv;
}

struct AblationChoice {
  WeightingMode mode = WeightingMode::average;
  AttentionDesign design = AttentionDesign::mixed;
  FeatureSetting features = FeatureSetting::split;
};

/// Expands the requested axes into run configurations, least significant
/// axis last, pinning unlisted axes to the base choice.
inline std::vector<AblationChoice> ablation_grid(const std::vector<std::string>& axes,
                                                 const AblationChoice& base) {
  std::vector<WeightingMode> modes = {base.mode};
  std::vector<AttentionDesign> designs = {base.design};
  std::vector<FeatureSetting> feats = {base.features};
  for (const auto& axis : axes) {
    if (axis == "weighting") {
      modes = {WeightingMode::average, WeightingMode::text_only, WeightingMode::video_only,
               WeightingMode::both};
    } else if (axis == "design") {
      designs = {AttentionDesign::mixed, AttentionDesign::self_all};
    } else if (axis == "features") {
      feats = {FeatureSetting::two_d_only, FeatureSetting::split, FeatureSetting::concat_2d3d};
    } else {
      throw ConfigError("unknown ablation axis '" + axis +
                        "', expected: weighting, design, features");
    }
  }
  std::vector<AblationChoice> grid;
  for (WeightingMode m : modes)
    for (AttentionDesign d : designs)
      for (FeatureSetting f : feats) grid.push_back({m, d, f});
  return grid;
}

struct AblationRow {
  AblationChoice choice;
  RetrievalReport report;
};

inline std::string ablation_machine_line(const AblationRow& r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "mode=%s design=%s features=%s r1=%.10g r5=%.10g r10=%.10g medr=%lld",
                weighting_mode_name(r.choice.mode), design_name(r.choice.design).c_str(),
                feature_setting_name(r.choice.features).c_str(), recall_or_throw(r.report, 1),
                recall_or_throw(r.report, 5), recall_or_throw(r.report, 10),
                static_cast<long long>(r.report.median_rank));
  return buf;
}

inline std::string ablation_table(const std::vector<AblationRow>& rows) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%-8s  %-8s  %-8s  %7s  %7s  %7s  %5s\n", "mode", "design",
                "features", "R@1", "R@5", "R@10", "MedR");
  std::string out = buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%-8s  %-8s  %-8s  %7.2f  %7.2f  %7.2f  %5lld\n",
                  weighting_mode_name(r.choice.mode), design_name(r.choice.design).c_str(),
                  feature_setting_name(r.choice.features).c_str(), recall_or_throw(r.report, 1),
                  recall_or_throw(r.report, 5), recall_or_throw(r.report, 10),
                  static_cast<long long>(r.report.median_rank));
    out += buf;
  }
  return out;
}

}  // namespace rome
