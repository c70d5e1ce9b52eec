// Acceptance gate for the retrieval model. Seven independent checks, one
// PASS/FAIL line each, tolerances pinned below. Exits nonzero if any fail.
//
// Unlike the unit tests this binary exercises whole-pipeline properties:
// analytic gradients, chance-level scoring, overfit capacity, metric
// equivalence against a sorting oracle, the intra-modal appearance rule,
// ablation grid shape, and the basic numeric invariants.

#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "metric_oracle.hpp"
#include "rome/data_io.hpp"
#include "rome/eval.hpp"
#include "rome/gradcheck.hpp"
#include "rome/model.hpp"
#include "rome/trainer.hpp"

namespace fs = std::filesystem;
using namespace rome;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

fs::path scratch_root() {
  static fs::path root = [] {
    fs::path p = fs::temp_directory_path() /
                 ("rome_acceptance_" + std::to_string(static_cast<long long>(::getpid())));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return root;
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

// Three captions over exactly twenty distinct tokens, and feature streams
// two rows tall so every attention block sees more than one key. The same
// fixture backs the command-line gradient check.
struct GradFixture {
  std::vector<CaptionGraph> captions;
  std::vector<ExpertFeatures<double>> clips;
  Model<double> model;
};

GradFixture build_grad_fixture(const ModelConfig& mc, uint64_t seed) {
  const std::set<std::string> verbs = {"runs", "holds", "opens"};
  const std::vector<std::vector<std::string>> texts = {
      {"a", "man", "runs", "across", "the", "wide", "road", "today"},
      {"a", "woman", "holds", "some", "hot", "food", "there"},
      {"the", "small", "child", "opens", "one", "door", "slowly"},
  };
  GradFixture fx;
  std::vector<std::string> vocab;
  for (size_t i = 0; i < texts.size(); ++i) {
    CaptionGraph g = rule_parse_caption(texts[i], verbs);
    g.caption_id = "cap" + std::to_string(i);
    g.clip_id = "clip" + std::to_string(i);
    fx.captions.push_back(std::move(g));
    vocab.insert(vocab.end(), texts[i].begin(), texts[i].end());
  }
  Rng rng(seed);
  const ExpertDims dims = expert_input_dims(mc);
  auto stream = [&rng](int64_t d) {
    Tensor<double> t({2, d});
    for (auto& x : *t.data) x = rng.uniform(-1.0, 1.0);
    return t;
  };
  for (size_t i = 0; i < texts.size(); ++i) {
    ExpertFeatures<double> f;
    f.clip_id = "clip" + std::to_string(i);
    f.f_s = stream(dims.s);
    f.f_a = stream(dims.a);
    f.f_o = stream(dims.o);
    fx.clips.push_back(std::move(f));
  }
  fx.model = build_model<double>(mc, vocab, rng);
  return fx;
}

// Check 1: every parameter gradient of the full three-pair pipeline
// matches central finite differences.
Outcome check_gradients() {
  const double tol = 1e-4;
  const double h = 1e-5;
  const double margin = 0.2;
  const double time_limit = 60.0;
  const auto t0 = std::chrono::steady_clock::now();

  ModelConfig mc;
  mc.model_dim = 8;
  mc.heads = 2;
  mc.word_dim = 5;
  mc.d2 = 6;
  mc.d3 = 6;
  mc.droi = 6;
  mc.role_vocab = 3;
  GradFixture fx = build_grad_fixture(mc, 7);
  fx.model.match.margin = margin;
  const AttentionConfig ac{mc.heads, mc.model_dim, mc.design};

  auto forward = [&](Tape<double>* tape) {
    std::vector<VideoLevelEncodings<double>> vids;
    std::vector<TextLevelEncodings<double>> caps;
    for (size_t i = 0; i < fx.clips.size(); ++i) {
      vids.push_back(encode_video(fx.clips[i], ac, fx.model.video, tape));
      caps.push_back(fx.model.encode_caption(fx.captions[i], tape));
    }
    std::vector<Tensor<double>> rows;
    for (size_t i = 0; i < vids.size(); ++i) {
      std::vector<Tensor<double>> cells;
      for (size_t j = 0; j < caps.size(); ++j)
        cells.push_back(
            match_score(vids[i], caps[j], WeightingMode::both, fx.model.match, tape));
      rows.push_back(concat(cells, 0, tape));
    }
    return contrastive_loss(stack_rows(rows, tape), margin, tape);
  };

  std::vector<std::pair<std::string, Tensor<double>*>> params;
  for (auto& [name, t] : fx.model.params) params.push_back({name, &t});
  GradCheckReport report = finite_diff_check<double>(forward, params, h, 8);
  const double dt = seconds_since(t0);

  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "%lld values across %zu parameters, max rel err %.3g (tol %g), %.1fs",
                static_cast<long long>(report.checked), params.size(), report.max_rel_err, tol,
                dt);
  return {report.ok(tol) && dt <= time_limit, buf};
}

// Check 2: a freshly initialized model retrieves at chance on a gallery of
// 1000 clips with two captions each. Chance: R@k = k/10 percent, median
// rank 500. Every clip is its own class so no planted structure survives.
Outcome check_chance_level() {
  const double recall_window = 0.5;
  const int64_t medr_window = 50;
  const double time_limit = 300.0;
  const auto t0 = std::chrono::steady_clock::now();

  SynthSpec spec;
  spec.seed = 19;
  spec.n_clips = 1000;
  spec.n_classes = 1000;
  spec.captions_per_clip = 2;
  spec.d2 = 8;
  spec.d3 = 8;
  spec.droi = 8;
  const std::string dir = (scratch_root() / "chance").string();
  synth_corpus(dir, spec);
  const Corpus corpus = load_corpus(dir);

  ModelConfig mc;
  mc.model_dim = 16;
  mc.heads = 2;
  mc.word_dim = 8;
  mc.d2 = 8;
  mc.d3 = 8;
  mc.droi = 8;
  mc.role_vocab = 3;
  Rng rng(11);
  Model<double> model = build_model<double>(mc, corpus.vocabulary(), rng);
  RetrievalReport r =
      evaluate(model, corpus, WeightingMode::both, Direction::text_to_video);
  const double dt = seconds_since(t0);

  const double r1 = recall_or_throw(r, 1);
  const double r5 = recall_or_throw(r, 5);
  const double r10 = recall_or_throw(r, 10);
  const bool pass = std::abs(r1 - 0.1) <= recall_window &&
                    std::abs(r5 - 0.5) <= recall_window &&
                    std::abs(r10 - 1.0) <= recall_window &&
                    std::llabs(r.median_rank - 500) <= medr_window && dt <= time_limit;
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "%lld queries, gallery %lld: R@1 %.2f R@5 %.2f R@10 %.2f MedR %lld "
                "(want 0.10/0.50/1.00 within %.1f, 500 within %lld), %.1fs",
                static_cast<long long>(r.query_count),
                static_cast<long long>(r.gallery_size), r1, r5, r10,
                static_cast<long long>(r.median_rank), recall_window,
                static_cast<long long>(medr_window), dt);
  return {pass, buf};
}

// Check 3: training memorizes a 64-pair corpus, reaching perfect text to
// video retrieval on the training set within 300 epochs.
Outcome check_overfit() {
  const double time_limit = 600.0;
  const auto t0 = std::chrono::steady_clock::now();

  SynthSpec spec;
  spec.seed = 11;
  spec.n_clips = 64;
  spec.n_classes = 8;
  spec.captions_per_clip = 1;
  spec.noise = 1.0;
  const std::string dir = (scratch_root() / "overfit").string();
  synth_corpus(dir, spec);
  const Corpus corpus = load_corpus(dir);

  TrainConfig cfg;
  cfg.model.model_dim = 64;
  cfg.model.heads = 4;
  cfg.model.word_dim = 64;
  cfg.model.d2 = 32;
  cfg.model.d3 = 32;
  cfg.model.droi = 32;
  cfg.mode = WeightingMode::both;
  cfg.batch_size = 16;
  cfg.epochs = 300;
  cfg.margin = 0.2;
  cfg.lr = 1e-4;
  cfg.seed = 7;
  cfg.val_every = 25;
  TrainRun<double> run = train<double>(corpus, cfg);
  const double dt = seconds_since(t0);

  int64_t reached_at = -1;
  for (const EpochLog& el : run.logs) {
    if (!el.val) continue;
    if (recall_or_throw(*el.val, 1) >= 100.0 && el.val->median_rank == 1) {
      reached_at = el.epoch;
      break;
    }
  }
  char buf[256];
  if (reached_at < 0) {
    const EpochLog* last = nullptr;
    for (const EpochLog& el : run.logs)
      if (el.val) last = &el;
    std::snprintf(buf, sizeof(buf),
                  "no epoch reached R@1 100 and MedR 1 (last val: R@1 %.2f MedR %lld)%s, %.1fs",
                  last ? recall_or_throw(*last->val, 1) : 0.0,
                  last ? static_cast<long long>(last->val->median_rank) : 0,
                  run.diverged ? ", run diverged" : "", dt);
    return {false, buf};
  }
  std::snprintf(buf, sizeof(buf),
                "R@1 100 and MedR 1 on the training set at epoch %lld of %lld, %.1fs",
                static_cast<long long>(reached_at), static_cast<long long>(cfg.epochs), dt);
  return {reached_at >= 0 && !run.diverged && dt <= time_limit, buf};
}

// Check 4: counting-based ranks and metrics agree exactly with a
// sort-based oracle on 200 random score matrices, half of them quantized
// to one decimal so heavy ties are guaranteed.
Outcome check_metric_oracle() {
  const int64_t n_matrices = 200;
  const int64_t q = 50, n = 50;
  Rng rng(4242);
  int64_t agreed = 0;
  int64_t tie_matrices = 0;
  std::string first_fail;
  for (int64_t m = 0; m < n_matrices; ++m) {
    Tensor<double> scores({q, n});
    for (auto& x : *scores.data) x = rng.uniform(-1.0, 1.0);
    if (m % 2 == 1) {
      for (auto& x : *scores.data) x = std::round(x * 10.0) / 10.0;
      ++tie_matrices;
    }
    std::vector<int64_t> truth(static_cast<size_t>(q));
    for (int64_t i = 0; i < q; ++i) truth[static_cast<size_t>(i)] = (i * 13 + m) % n;

    const auto ranks = ranks_from_scores(scores, truth);
    const RetrievalReport fast = make_report(Direction::text_to_video, n, ranks);
    const RetrievalReport slow = oracle_metrics(scores, truth);
    bool same = fast.ranks == slow.ranks && fast.median_rank == slow.median_rank;
    for (int64_t k : {1, 5, 10})
      same = same && recall_or_throw(fast, k) == recall_or_throw(slow, k);
    if (same) {
      ++agreed;
    } else if (first_fail.empty()) {
      first_fail = " (first mismatch at matrix " + std::to_string(m) + ")";
    }
  }
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "%lld of %lld matrices agree exactly (%lld with forced ties)%s",
                static_cast<long long>(agreed), static_cast<long long>(n_matrices),
                static_cast<long long>(tie_matrices), first_fail.c_str());
  return {agreed == n_matrices, buf};
}

// Check 5: under the mixed design the appearance encoding depends only on
// its own expert stream, while action and object react to every stream.
Outcome check_intra_modal_appearance() {
  const int64_t trials = 50;
  ModelConfig mc;
  mc.model_dim = 8;
  mc.heads = 2;
  mc.word_dim = 5;
  mc.d2 = 6;
  mc.d3 = 6;
  mc.droi = 6;
  mc.role_vocab = 3;
  const AttentionConfig ac{mc.heads, mc.model_dim, mc.design};

  auto same_bits = [](const Tensor<double>& a, const Tensor<double>& b) {
    return a.data->size() == b.data->size() &&
           std::memcmp(a.data->data(), b.data->data(),
                       a.data->size() * sizeof(double)) == 0;
  };

  int64_t ok = 0;
  std::string first_fail;
  for (int64_t trial = 0; trial < trials; ++trial) {
    Rng rng(1000 + static_cast<uint64_t>(trial));
    auto stream = [&rng](int64_t d) {
      Tensor<double> t({2, d});
      for (auto& x : *t.data) x = rng.uniform(-1.0, 1.0);
      return t;
    };
    ExpertFeatures<double> f;
    f.f_s = stream(mc.d2);
    f.f_a = stream(mc.d3);
    f.f_o = stream(mc.droi);
    Model<double> model = build_model<double>(mc, {"a", "b", "c"}, rng);
    const auto base = encode_video(f, ac, model.video, nullptr);

    // Tensor copies share storage, so clone before touching anything.
    auto clone = [](const Tensor<double>& t) {
      Tensor<double> c(t.shape);
      *c.data = *t.data;
      return c;
    };
    auto perturbed = [&](int which) {
      ExpertFeatures<double> g;
      g.f_s = clone(f.f_s);
      g.f_a = clone(f.f_a);
      g.f_o = clone(f.f_o);
      Tensor<double>& t = which == 0 ? g.f_s : which == 1 ? g.f_a : g.f_o;
      (*t.data)[static_cast<size_t>(trial) % t.data->size()] += 0.5;
      return encode_video(g, ac, model.video, nullptr);
    };
    const auto ps = perturbed(0);
    const auto pa = perturbed(1);
    const auto po = perturbed(2);

    const bool appearance_isolated =
        same_bits(pa.appearance, base.appearance) && same_bits(po.appearance, base.appearance);
    const bool locals_react =
        !same_bits(ps.action, base.action) && !same_bits(ps.object, base.object) &&
        !same_bits(pa.action, base.action) && !same_bits(pa.object, base.object) &&
        !same_bits(po.action, base.action) && !same_bits(po.object, base.object);
    const bool own_stream_counts = !same_bits(ps.appearance, base.appearance);
    if (appearance_isolated && locals_react && own_stream_counts) {
      ++ok;
    } else if (first_fail.empty()) {
      first_fail = " (first failure at trial " + std::to_string(trial) + ")";
    }
  }
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "%lld of %lld trials: appearance ignores other experts, locals react to all%s",
                static_cast<long long>(ok), static_cast<long long>(trials), first_fail.c_str());
  return {ok == trials, buf};
}

// Check 6: ablation grids enumerate the full axis in a fixed order, rerun
// bitwise identically, and average weighting equals the plain mean of the
// three level cosines.
Outcome check_ablation_grid() {
  const double mean_tol = 1e-6;
  SynthSpec spec;
  spec.seed = 5;
  spec.n_clips = 12;
  spec.n_classes = 3;
  spec.d2 = 8;
  spec.d3 = 8;
  spec.droi = 8;
  const std::string dir = (scratch_root() / "ablate").string();
  synth_corpus(dir, spec);
  const Corpus corpus = load_corpus(dir);

  ModelConfig mc;
  mc.model_dim = 16;
  mc.heads = 2;
  mc.word_dim = 8;
  mc.d2 = 8;
  mc.d3 = 8;
  mc.droi = 8;
  mc.role_vocab = 3;
  const AblationChoice base{WeightingMode::both, AttentionDesign::mixed, FeatureSetting::split};

  auto run_axis = [&](const std::string& axis) {
    std::vector<std::string> lines;
    for (const AblationChoice& choice : ablation_grid({axis}, base)) {
      ModelConfig cell = mc;
      cell.design = choice.design;
      cell.features = choice.features;
      Rng rng(7);
      Model<double> model = build_model<double>(cell, corpus.vocabulary(), rng);
      AblationRow row{choice,
                      evaluate(model, corpus, choice.mode, Direction::text_to_video)};
      lines.push_back(ablation_machine_line(row));
    }
    return lines;
  };

  const auto weighting = run_axis("weighting");
  const auto design = run_axis("design");
  const auto features = run_axis("features");
  const auto weighting_again = run_axis("weighting");

  bool shapes = weighting.size() == 4 && design.size() == 2 && features.size() == 3;
  const char* mode_order[4] = {"mode=average ", "mode=text ", "mode=video ", "mode=both "};
  bool ordered = shapes;
  for (int i = 0; ordered && i < 4; ++i)
    ordered = weighting[static_cast<size_t>(i)].rfind(mode_order[i], 0) == 0;
  ordered = ordered && design[0].find("design=mixed") != std::string::npos &&
            design[1].find("design=self_all") != std::string::npos &&
            features[0].find("features=2d_only") != std::string::npos &&
            features[1].find("features=split") != std::string::npos &&
            features[2].find("features=concat") != std::string::npos;
  const bool reproducible = weighting == weighting_again;

  Rng rng(7);
  Model<double> model = build_model<double>(mc, corpus.vocabulary(), rng);
  const auto vid = model.encode_clip(corpus.clips[0], nullptr);
  const auto cap = model.encode_caption(corpus.captions[0], nullptr);
  const double avg =
      match_score(vid, cap, WeightingMode::average, model.match, nullptr).at(0);
  const double mean =
      (level_cosine(vid.appearance, cap.event, "global", nullptr).at(0) +
       level_cosine(vid.action, cap.action, "action", nullptr).at(0) +
       level_cosine(vid.object, cap.object, "object", nullptr).at(0)) /
      3.0;
  const bool mean_ok = std::abs(avg - mean) <= mean_tol;

  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "weighting %zu rows, design %zu, features %zu, rerun %s, "
                "average vs cosine mean |diff| %.2g (tol %g)",
                weighting.size(), design.size(), features.size(),
                reproducible ? "bitwise equal" : "DIFFERS", std::abs(avg - mean), mean_tol);
  return {shapes && ordered && reproducible && mean_ok, buf};
}

// Check 7: the numeric workhorses keep their contracts: softmax rows are
// simplexes, layer norm standardizes moments, expert weights are
// simplexes, cosines stay in [-1, 1], the loss is nonnegative and exactly
// zero once every margin is satisfied, and training is deterministic.
Outcome check_invariants() {
  std::vector<std::string> fails;

  {
    Rng rng(21);
    for (int t = 0; t < 20; ++t) {
      Tensor<double> x({7, 11});
      for (auto& v : *x.data) v = rng.uniform(-5.0, 5.0);
      const auto sm = softmax(x, 1, nullptr);
      for (int64_t i = 0; i < 7; ++i) {
        double sum = 0.0;
        for (int64_t j = 0; j < 11; ++j) {
          const double v = sm.at2(i, j);
          if (v < 0.0) fails.push_back("softmax produced a negative entry");
          sum += v;
        }
        if (std::abs(sum - 1.0) > 1e-6) fails.push_back("softmax row sum off by >1e-6");
      }
    }
  }

  {
    Rng rng(22);
    const int64_t d = 64;
    Tensor<double> gain = Tensor<double>::full({d}, 1.0);
    Tensor<double> bias = Tensor<double>::zeros({d});
    for (int t = 0; t < 10; ++t) {
      Tensor<double> x({9, d});
      for (auto& v : *x.data) v = rng.uniform(-2.0, 2.0);
      const auto ln = layer_norm(x, gain, bias, kNormEps, nullptr);
      for (int64_t i = 0; i < 9; ++i) {
        double mean = 0.0, var = 0.0;
        for (int64_t j = 0; j < d; ++j) mean += ln.at2(i, j);
        mean /= static_cast<double>(d);
        for (int64_t j = 0; j < d; ++j) {
          const double c = ln.at2(i, j) - mean;
          var += c * c;
        }
        var /= static_cast<double>(d);
        if (std::abs(mean) > 1e-4) fails.push_back("layer norm row mean off by >1e-4");
        if (std::abs(var - 1.0) > 1e-4) fails.push_back("layer norm row var off by >1e-4");
      }
    }
  }

  {
    Rng rng(23);
    for (int t = 0; t < 20; ++t) {
      auto vec = [&rng](int64_t d) {
        Tensor<double> v({d});
        for (auto& x : *v.data) x = rng.uniform(-1.0, 1.0);
        return v;
      };
      Tensor<double> head({16, 3});
      for (auto& x : *head.data) x = rng.uniform(-1.0, 1.0);
      const auto w = expert_weights(vec(16), vec(16), vec(16), head, nullptr);
      if (w.numel() != 3) fails.push_back("expert weights are not three values");
      double sum = 0.0;
      for (int64_t i = 0; i < w.numel(); ++i) {
        if (w.at(i) < 0.0) fails.push_back("negative expert weight");
        sum += w.at(i);
      }
      if (std::abs(sum - 1.0) > 1e-6) fails.push_back("expert weights sum off by >1e-6");
    }
  }

  {
    Rng rng(24);
    for (int t = 0; t < 50; ++t) {
      Tensor<double> v({16}), c({16});
      for (auto& x : *v.data) x = rng.uniform(-1.0, 1.0);
      if (t % 3 == 0) {
        for (int64_t i = 0; i < 16; ++i) (*c.data)[static_cast<size_t>(i)] =
            (t % 2 ? -0.5 : 2.0) * v.at(i);
      } else {
        for (auto& x : *c.data) x = rng.uniform(-1.0, 1.0);
      }
      const double cos = level_cosine(v, c, "global", nullptr).at(0);
      if (cos > 1.0 + 1e-12 || cos < -1.0 - 1e-12)
        fails.push_back("cosine left [-1, 1]");
    }
  }

  {
    Rng rng(25);
    for (int t = 0; t < 20; ++t) {
      Tensor<double> s({6, 6});
      for (auto& x : *s.data) x = rng.uniform(-1.0, 1.0);
      if (contrastive_loss(s, 0.2, nullptr).at(0) < 0.0)
        fails.push_back("loss went negative");
    }
    Tensor<double> separated = Tensor<double>::zeros({6, 6});
    for (int64_t i = 0; i < 6; ++i) separated.at2(i, i) = 1.0;
    if (contrastive_loss(separated, 0.2, nullptr).at(0) != 0.0)
      fails.push_back("loss not exactly zero with every margin satisfied");
  }

  {
    SynthSpec spec;
    spec.seed = 3;
    spec.n_clips = 16;
    spec.n_classes = 4;
    spec.d2 = 8;
    spec.d3 = 8;
    spec.droi = 8;
    const std::string dir = (scratch_root() / "determinism").string();
    synth_corpus(dir, spec);
    const Corpus corpus = load_corpus(dir);
    TrainConfig cfg;
    cfg.model.model_dim = 16;
    cfg.model.heads = 2;
    cfg.model.word_dim = 8;
    cfg.model.d2 = 8;
    cfg.model.d3 = 8;
    cfg.model.droi = 8;
    cfg.batch_size = 4;
    cfg.epochs = 3;
    cfg.lr = 1e-3;
    cfg.seed = 9;
    cfg.val_every = 1;
    std::ostringstream log_a, log_b;
    train<double>(corpus, cfg, &log_a);
    train<double>(corpus, cfg, &log_b);
    if (log_a.str().empty() || log_a.str() != log_b.str())
      fails.push_back("two identical training runs logged different bytes");
  }

  if (fails.empty())
    return {true,
            "softmax and expert-weight simplexes, layer norm moments, cosine range, "
            "loss floor, and training determinism all hold"};
  std::string detail = std::to_string(fails.size()) + " violations, first: " + fails.front();
  return {false, detail};
}

}  // namespace

int main() {
  struct Entry {
    const char* name;
    Outcome (*fn)();
  };
  const Entry checks[] = {
      {"gradients match finite differences", check_gradients},
      {"random weights score at chance", check_chance_level},
      {"training overfits a small corpus", check_overfit},
      {"metrics match the sorting oracle", check_metric_oracle},
      {"appearance level is intra-modal", check_intra_modal_appearance},
      {"ablation grids are complete and reproducible", check_ablation_grid},
      {"numeric invariants hold", check_invariants},
  };

  int failures = 0;
  for (size_t i = 0; i < std::size(checks); ++i) {
    Outcome o;
    try {
      o = checks[i].fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("[%s] %zu/7 %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, checks[i].name,
                o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failures;
  }
  fs::remove_all(scratch_root());
  if (failures == 0) {
    std::printf("all 7 checks passed\n");
    return 0;
  }
  std::printf("%d of 7 checks failed\n", failures);
  return 1;
}
