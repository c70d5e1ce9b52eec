// Command-line driver for the retrieval model: corpus synthesis, training,
// evaluation, ablation sweeps, and a finite-difference gradient check.
//
// Exit codes: 0 success, 1 runtime or check failure, 2 usage or config error.

#include <CLI11.hpp>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <list>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "rome/config.hpp"
#include "rome/gradcheck.hpp"
#include "rome/graph.hpp"

namespace fs = std::filesystem;

namespace {

using namespace rome;

/// One subcommand's configuration surface. Flag values land in a KvFile so
/// the file layer and the flag layer share one typed parser; precedence is
/// flags over file over the subcommand's defaults.
struct SubCfg {
  CLI::App* cmd = nullptr;
  RunConfig base;
  std::string config_path;
  bool force = false;
  std::list<std::string> slots;  // stable addresses for CLI11 bindings
  std::vector<std::pair<CLI::Option*, std::pair<std::string, const std::string*>>> bound;

  void attach(CLI::App* c) {
    cmd = c;
    cmd->add_option("--config", config_path, "key = value config file");
    cmd->add_flag("--force", force, "overwrite existing outputs");
  }

  void opt(const std::string& flag, const std::string& key, const std::string& help) {
    slots.emplace_back();
    std::string* slot = &slots.back();
    CLI::Option* o = cmd->add_option(flag, *slot, help);
    o->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);  // repeats override, shell style
    bound.push_back({o, {key, slot}});
  }

  RunConfig resolve(const RunConfig* base_override = nullptr) const {
    RunConfig cfg = base_override ? *base_override : base;
    if (!config_path.empty()) cfg.apply_kv(KvFile::load(config_path));
    KvFile flags;
    for (const auto& [o, b] : bound)
      if (o->count()) flags.set(b.first, *b.second);
    cfg.apply_kv(flags);
    return cfg;
  }
};

/// Refuses to overwrite a previous run's products unless --force, then makes
/// sure the directory exists.
void claim_out_dir(const std::string& out, bool force, std::initializer_list<const char*> products) {
  if (out.empty()) throw ConfigError("an output directory is required (--out or config key 'out')");
  for (const char* p : products) {
    const fs::path f = fs::path(out) / p;
    if (fs::exists(f) && !force)
      throw ConfigError(f.string() + " already exists, pass --force to overwrite");
  }
  fs::create_directories(out);
}

void write_echo(const RunConfig& cfg, const std::string& dir) {
  cfg.to_kv().save((fs::path(dir) / "config.txt").string());
}

Corpus corpus_for(const RunConfig& cfg) {
  if (cfg.data.empty())
    throw ConfigError("a corpus directory is required (--data or config key 'data')");
  return load_corpus(cfg.data);
}

/// Projections are sized by the config and features by the corpus, so any
/// disagreement can never encode; reject it before work starts. Only the
/// dims the active feature setting reads are compared.
void check_feature_dims(const ModelConfig& m, const CorpusManifest& man) {
  auto bad = [](const char* what, int64_t cfg_v, int64_t man_v) {
    throw ConfigError(std::string(what) + " is " + std::to_string(cfg_v) +
                      " in the config but " + std::to_string(man_v) +
                      " in the corpus; drop the flag or make them match");
  };
  if (m.d2 != man.d2) bad("d2", m.d2, man.d2);
  if (m.features != FeatureSetting::two_d_only && m.d3 != man.d3) bad("d3", m.d3, man.d3);
  if (m.features == FeatureSetting::split && m.droi != man.droi) bad("droi", m.droi, man.droi);
}

/// Re-resolves a subcommand's config with the corpus manifest supplying the
/// feature-dim defaults, so plain runs never have to repeat d2/d3/droi.
RunConfig resolve_with_corpus_dims(const SubCfg& sc, const CorpusManifest& man) {
  RunConfig over = sc.base;
  over.train.model.d2 = man.d2;
  over.train.model.d3 = man.d3;
  over.train.model.droi = man.droi;
  return sc.resolve(&over);
}

template <class F>
int with_bits(int64_t bits, F&& f) {
  if (bits == 32) return f(float());
  if (bits == 64) return f(double());
  throw ConfigError("bits must be 32 or 64, got " + std::to_string(bits));
}

int cmd_synth(const SubCfg& sc) {
  RunConfig cfg = sc.resolve();
  cfg.validate();
  claim_out_dir(cfg.out, sc.force, {"config.txt", "manifest.txt", "features.jsonl", "captions.jsonl"});
  SynthSpec spec;
  spec.seed = cfg.train.seed;
  spec.n_clips = cfg.clips;
  spec.n_classes = cfg.classes;
  spec.d2 = cfg.train.model.d2;
  spec.d3 = cfg.train.model.d3;
  spec.droi = cfg.train.model.droi;
  spec.vocab_size = cfg.vocab_size;
  spec.captions_per_clip = cfg.captions_per_clip;
  spec.noise = cfg.noise;
  CorpusManifest m;
  try {
    m = synth_corpus(cfg.out, spec);
  } catch (const ValueError& e) {
    // synthesis rejects inconsistent sizes before writing anything
    throw ConfigError(e.what());
  }
  write_echo(cfg, cfg.out);
  std::cout << "wrote " << m.n_clips << " clips and " << m.n_captions << " captions to " << cfg.out
            << "\n";
  return 0;
}

template <class S>
int run_train(const RunConfig& cfg, const Corpus& corpus, bool force) {
  claim_out_dir(cfg.out, force, {"config.txt", "model.ckpt", "train_log.txt"});
  write_echo(cfg, cfg.out);
  std::optional<WordVectors> wv;
  if (!cfg.embeddings.empty()) wv = load_word_embeddings(cfg.embeddings, cfg.train.model.word_dim);
  std::optional<Checkpoint<S>> from;
  if (!cfg.resume.empty()) from = load_checkpoint<S>(cfg.resume);

  TrainRun<S> run = train<S>(corpus, cfg.train, &std::cout, from ? &*from : nullptr,
                             wv ? &*wv : nullptr);

  const std::string ckpt_path = (fs::path(cfg.out) / "model.ckpt").string();
  save_checkpoint(make_checkpoint(run, cfg.train), ckpt_path);
  std::ofstream log(fs::path(cfg.out) / "train_log.txt");
  if (!log) throw IoError("cannot write train_log.txt in " + cfg.out);
  for (const auto& el : run.logs) log << epoch_log_line(el) << "\n";
  std::cout << "saved " << ckpt_path << "\n";
  if (run.diverged) {
    std::cerr << "training diverged, the checkpoint holds the last finite state\n";
    return 1;
  }
  return 0;
}

int cmd_train(const SubCfg& sc) {
  RunConfig probe = sc.resolve();
  Corpus corpus = corpus_for(probe);
  RunConfig cfg = resolve_with_corpus_dims(sc, corpus.manifest);
  cfg.validate();
  check_feature_dims(cfg.train.model, corpus.manifest);
  return with_bits(cfg.bits,
                   [&](auto s) { return run_train<decltype(s)>(cfg, corpus, sc.force); });
}

int cmd_eval(const SubCfg& sc) {
  RunConfig probe = sc.resolve();
  if (probe.ckpt.empty())
    throw ConfigError("a checkpoint is required (--ckpt or config key 'ckpt')");
  return with_bits(probe.bits, [&](auto s) -> int {
    using S = decltype(s);
    auto ckpt = load_checkpoint<S>(probe.ckpt);
    // the checkpoint's training settings become the defaults, so weighting
    // mode and architecture follow the trained model unless overridden
    RunConfig over = sc.base;
    over.train = ckpt.cfg;
    RunConfig cfg = sc.resolve(&over);
    cfg.validate();

    Corpus corpus = corpus_for(cfg);
    if (cfg.split_gallery > 0) corpus = gallery_subset(corpus, cfg.split_gallery);
    if (!cfg.out.empty()) {
      claim_out_dir(cfg.out, sc.force, {"config.txt", "metrics.txt"});
      write_echo(cfg, cfg.out);
    }

    TrainRun<S> run = restore_checkpoint(ckpt);
    RetrievalReport report = evaluate(run.model, corpus, cfg.train.mode, cfg.direction);
    std::cout << format_report(report);
    KvFile metrics = report_to_kv(report);
    if (!cfg.out.empty())
      metrics.save((fs::path(cfg.out) / "metrics.txt").string());
    else
      std::cout << metrics.serialize();
    return 0;
  });
}

int cmd_ablate(const SubCfg& sc) {
  RunConfig probe = sc.resolve();
  Corpus corpus = corpus_for(probe);
  RunConfig cfg = resolve_with_corpus_dims(sc, corpus.manifest);
  if (cfg.axes.empty())
    throw ConfigError("at least one ablation axis is required (--axes), expected: weighting, design, features");
  const AblationChoice pin{cfg.train.mode, cfg.train.model.design, cfg.train.model.features};
  const std::vector<AblationChoice> grid = ablation_grid(cfg.axes, pin);
  return with_bits(cfg.bits, [&](auto s) -> int {
    using S = decltype(s);
    if (!cfg.out.empty()) {
      claim_out_dir(cfg.out, sc.force, {"config.txt", "ablation.txt"});
      write_echo(cfg, cfg.out);
    }

    std::vector<AblationRow> rows;
    for (const AblationChoice& choice : grid) {
      TrainConfig tc = cfg.train;
      tc.mode = choice.mode;
      tc.model.design = choice.design;
      tc.model.features = choice.features;
      check_feature_dims(tc.model, corpus.manifest);
      Model<S> model;
      if (tc.epochs > 0) {
        model = std::move(train<S>(corpus, tc, nullptr).model);
      } else {
        // epochs 0 scores freshly initialized weights, same seed per cell
        Rng rng(static_cast<uint64_t>(tc.seed));
        model = build_model<S>(tc.model, corpus.vocabulary(), rng);
      }
      rows.push_back({choice, evaluate(model, corpus, choice.mode, cfg.direction)});
    }

    std::string text = ablation_table(rows) + "\n";
    for (const AblationRow& r : rows) text += ablation_machine_line(r) + "\n";
    std::cout << text;
    if (!cfg.out.empty()) {
      std::ofstream f(fs::path(cfg.out) / "ablation.txt");
      if (!f) throw IoError("cannot write ablation.txt in " + cfg.out);
      f << text;
    }
    return 0;
  });
}

int cmd_gradcheck(const SubCfg& sc, bool corrupt) {
  RunConfig cfg = sc.resolve();
  if (cfg.bits != 64)
    throw ConfigError("the gradient check needs 64-bit scalars, float rounding drowns the h=1e-5 "
                      "signal; got bits=" +
                      std::to_string(cfg.bits));
  cfg.validate();
  using S = double;

  // Fixed three-pair fixture: captions over a 20-token vocabulary, feature
  // matrices two rows tall so every attention block sees more than one key
  // and no parameter sits outside the gradient flow.
  const std::set<std::string> verbs = {"runs", "holds", "opens"};
  const std::vector<std::vector<std::string>> texts = {
      {"a", "man", "runs", "across", "the", "wide", "road", "today"},
      {"a", "woman", "holds", "some", "hot", "food", "there"},
      {"the", "small", "child", "opens", "one", "door", "slowly"},
  };
  std::vector<CaptionGraph> captions;
  std::vector<std::string> vocab;
  for (size_t i = 0; i < texts.size(); ++i) {
    CaptionGraph g = rule_parse_caption(texts[i], verbs);
    g.caption_id = "cap" + std::to_string(i);
    g.clip_id = "clip" + std::to_string(i);
    captions.push_back(std::move(g));
    vocab.insert(vocab.end(), texts[i].begin(), texts[i].end());
  }

  Rng rng(static_cast<uint64_t>(cfg.train.seed));
  const ExpertDims dims = expert_input_dims(cfg.train.model);
  auto stream = [&](int64_t d) {
    Tensor<S> t({2, d});
    for (auto& x : *t.data) x = static_cast<S>(rng.uniform(-1.0, 1.0));
    return t;
  };
  std::vector<ExpertFeatures<S>> clips;
  for (size_t i = 0; i < texts.size(); ++i) {
    ExpertFeatures<S> f;
    f.clip_id = "clip" + std::to_string(i);
    f.f_s = stream(dims.s);
    f.f_a = stream(dims.a);
    f.f_o = stream(dims.o);
    clips.push_back(std::move(f));
  }

  Model<S> model = build_model<S>(cfg.train.model, vocab, rng);
  model.match.margin = S(cfg.train.margin);
  const AttentionConfig ac{cfg.train.model.heads, cfg.train.model.model_dim,
                           cfg.train.model.design};

  auto forward = [&](Tape<S>* tape) {
    std::vector<VideoLevelEncodings<S>> vids;
    std::vector<TextLevelEncodings<S>> caps;
    for (size_t i = 0; i < clips.size(); ++i) {
      vids.push_back(encode_video(clips[i], ac, model.video, tape));
      caps.push_back(model.encode_caption(captions[i], tape));
    }
    std::vector<Tensor<S>> rows;
    for (size_t i = 0; i < vids.size(); ++i) {
      std::vector<Tensor<S>> cells;
      for (size_t j = 0; j < caps.size(); ++j)
        cells.push_back(match_score(vids[i], caps[j], cfg.train.mode, model.match, tape));
      rows.push_back(concat(cells, 0, tape));
    }
    Tensor<S> loss = contrastive_loss(stack_rows(rows, tape), S(cfg.train.margin), tape);
    if (corrupt && tape) {
      // self-test hook: a gradient contribution the perturbed passes never see
      Tensor<S>& p = model.params.begin()->second;
      loss = add(loss, scalar_mul(reduce_sum(p, tape), S(0.01), tape), tape);
    }
    return loss;
  };

  std::vector<std::pair<std::string, Tensor<S>*>> params;
  for (auto& [name, t] : model.params) params.push_back({name, &t});

  const double tol = 1e-4;
  GradCheckReport report = finite_diff_check<S>(forward, params, S(1e-5), 8);
  std::printf("checked %lld values across %zu parameters, max relative error %.3g (tolerance %g)\n",
              static_cast<long long>(report.checked), params.size(), report.max_rel_err, tol);
  if (!cfg.out.empty()) {
    claim_out_dir(cfg.out, sc.force, {"config.txt", "gradcheck.txt"});
    write_echo(cfg, cfg.out);
    KvFile kv;
    kv.set_i64("checked", report.checked);
    kv.set_f64("max_rel_err", report.max_rel_err);
    kv.set("pass", report.ok(tol) ? "yes" : "no");
    kv.save((fs::path(cfg.out) / "gradcheck.txt").string());
  }
  if (report.ok(tol)) {
    std::cout << "analytic gradients match finite differences\n";
    return 0;
  }
  for (const GradCheckEntry& w : report.worst)
    std::printf("  %s[%lld]: analytic %.6g, finite difference %.6g, rel err %.3g\n", w.param.c_str(),
                static_cast<long long>(w.flat_index), w.analytic, w.numeric, w.rel_err);
  std::cerr << "gradient check failed\n";
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hierarchical text-to-video retrieval: synthesize corpora, train, evaluate, "
               "ablate, and check gradients"};
  app.require_subcommand(1);

  SubCfg synth;
  synth.base.train.model.d2 = 32;  // desk-scale synthesis defaults
  synth.base.train.model.d3 = 32;
  synth.base.train.model.droi = 32;
  synth.attach(app.add_subcommand("synth", "write a seeded synthetic corpus"));
  synth.opt("--out", "out", "corpus directory to create");
  synth.opt("--seed", "seed", "generator seed (default 7)");
  synth.opt("--clips", "clips", "gallery size, at least 2 (default 64)");
  synth.opt("--classes", "classes", "latent classes (default 8)");
  synth.opt("--captions-per-clip", "captions_per_clip", "captions per clip, 1 to 4 (default 1)");
  synth.opt("--vocab-size", "vocab_size", "vocabulary size, 0 picks the smallest that fits");
  synth.opt("--noise", "noise", "feature jitter (default 0.1)");
  synth.opt("--d2", "d2", "appearance feature dim (default 32)");
  synth.opt("--d3", "d3", "motion feature dim (default 32)");
  synth.opt("--droi", "droi", "region feature dim (default 32)");

  SubCfg tr;
  tr.attach(app.add_subcommand("train", "train the model on a corpus"));
  tr.opt("--data", "data", "corpus directory");
  tr.opt("--out", "out", "run directory for checkpoint, log, and config echo");
  tr.opt("--resume", "resume", "checkpoint to continue from");
  tr.opt("--embeddings", "embeddings", "pretrained word vector file");
  tr.opt("--epochs", "epochs", "total epochs including any resumed ones (default 100)");
  tr.opt("--batch-size", "batch_size", "pairs per batch (default 32)");
  tr.opt("--lr", "lr", "Adam learning rate (default 1e-4)");
  tr.opt("--margin", "margin", "ranking margin (default 0.2)");
  tr.opt("--seed", "seed", "generator seed (default 7)");
  tr.opt("--val-every", "val_every", "epochs between retrieval evals, 0 disables (default 10)");
  tr.opt("--mode", "mode", "level weighting: average, text, video, both (default both)");
  tr.opt("--design", "design", "attention design: mixed, self_all (default mixed)");
  tr.opt("--features", "features", "expert inputs: 2d_only, split, concat (default split)");
  tr.opt("--model-dim", "model_dim", "joint embedding width (default 1024)");
  tr.opt("--heads", "heads", "attention heads (default 8)");
  tr.opt("--word-dim", "word_dim", "word embedding width (default 300)");
  tr.opt("--d2", "d2", "appearance feature dim (default: the corpus value)");
  tr.opt("--d3", "d3", "motion feature dim (default: the corpus value)");
  tr.opt("--droi", "droi", "region feature dim (default: the corpus value)");
  tr.opt("--role-vocab", "role_vocab", "edge role count (default 3)");
  tr.opt("--bits", "bits", "scalar width, 32 or 64 (default 64)");

  SubCfg ev;
  ev.attach(app.add_subcommand("eval", "rank a gallery with a trained checkpoint"));
  ev.opt("--ckpt", "ckpt", "checkpoint file");
  ev.opt("--data", "data", "corpus directory");
  ev.opt("--out", "out", "directory for metrics and config echo (default: print to stdout)");
  ev.opt("--direction", "direction", "t2v or v2t (default t2v)");
  ev.opt("--split-gallery", "split_gallery", "rank against the first N clips only");
  ev.opt("--mode", "mode", "override the checkpoint's weighting mode");
  ev.opt("--bits", "bits", "scalar width, must match the checkpoint (default 64)");

  SubCfg ab;
  ab.base.train.epochs = 0;  // score fresh seeded weights unless asked to train
  ab.base.train.val_every = 0;
  ab.attach(app.add_subcommand("ablate", "sweep design axes and tabulate retrieval metrics"));
  ab.opt("--data", "data", "corpus directory");
  ab.opt("--out", "out", "directory for the table and config echo (default: stdout only)");
  ab.opt("--axes", "axes", "comma-separated: weighting, design, features");
  ab.opt("--epochs", "epochs", "train each cell this long first, 0 scores fresh weights (default 0)");
  ab.opt("--batch-size", "batch_size", "pairs per batch when training (default 32)");
  ab.opt("--lr", "lr", "Adam learning rate (default 1e-4)");
  ab.opt("--margin", "margin", "ranking margin (default 0.2)");
  ab.opt("--seed", "seed", "generator seed shared by every cell (default 7)");
  ab.opt("--direction", "direction", "t2v or v2t (default t2v)");
  ab.opt("--mode", "mode", "pinned weighting mode when 'weighting' is not swept");
  ab.opt("--design", "design", "pinned design when 'design' is not swept");
  ab.opt("--features", "features", "pinned feature setting when 'features' is not swept");
  ab.opt("--model-dim", "model_dim", "joint embedding width (default 1024)");
  ab.opt("--heads", "heads", "attention heads (default 8)");
  ab.opt("--word-dim", "word_dim", "word embedding width (default 300)");
  ab.opt("--d2", "d2", "appearance feature dim (default: the corpus value)");
  ab.opt("--d3", "d3", "motion feature dim (default: the corpus value)");
  ab.opt("--droi", "droi", "region feature dim (default: the corpus value)");
  ab.opt("--bits", "bits", "scalar width, 32 or 64 (default 64)");

  SubCfg gc;
  gc.base.train.model.model_dim = 8;  // small enough for 2 x numel forward passes
  gc.base.train.model.heads = 2;
  gc.base.train.model.word_dim = 5;
  gc.base.train.model.d2 = 6;
  gc.base.train.model.d3 = 6;
  gc.base.train.model.droi = 6;
  gc.base.train.batch_size = 3;
  bool corrupt = false;
  gc.attach(app.add_subcommand("gradcheck",
                               "compare analytic gradients against central finite differences"));
  gc.opt("--seed", "seed", "fixture and init seed (default 7)");
  gc.opt("--margin", "margin", "ranking margin (default 0.2)");
  gc.opt("--mode", "mode", "level weighting to check (default both)");
  gc.opt("--design", "design", "attention design to check (default mixed)");
  gc.opt("--features", "features", "expert inputs to check (default split)");
  gc.opt("--model-dim", "model_dim", "joint embedding width (default 8)");
  gc.opt("--heads", "heads", "attention heads (default 2)");
  gc.opt("--word-dim", "word_dim", "word embedding width (default 5)");
  gc.opt("--d2", "d2", "appearance feature dim (default 6)");
  gc.opt("--d3", "d3", "motion feature dim (default 6)");
  gc.opt("--droi", "droi", "region feature dim (default 6)");
  gc.opt("--out", "out", "directory for the report and config echo (default: stdout only)");
  gc.opt("--bits", "bits", "must be 64, the check refuses float scalars");
  gc.cmd->add_flag("--corrupt-backward", corrupt,
                   "self-test: skew one gradient so the check must fail");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (synth.cmd->parsed()) return cmd_synth(synth);
    if (tr.cmd->parsed()) return cmd_train(tr);
    if (ev.cmd->parsed()) return cmd_eval(ev);
    if (ab.cmd->parsed()) return cmd_ablate(ab);
    if (gc.cmd->parsed()) return cmd_gradcheck(gc, corrupt);
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const rome::ParseError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
