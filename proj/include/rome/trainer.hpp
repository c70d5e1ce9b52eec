#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "rome/data_io.hpp"
#include "rome/error.hpp"
#include "rome/eval.hpp"
#include "rome/matching.hpp"
#include "rome/model.hpp"
#include "rome/rng.hpp"
#include "rome/tensor.hpp"

namespace rome {

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;

struct TrainConfig {
  ModelConfig model;
  WeightingMode mode = WeightingMode::both;
  int64_t batch_size = 32;
  int64_t epochs = 100;
  double margin = 0.2;
  double lr = 1e-4;
  int64_t seed = 7;
  int64_t val_every = 10;  // epochs between retrieval evaluations, 0 disables

  void validate() const {
    if (batch_size < 2)
      throw ConfigError("batch_size must be at least 2 so the loss has negative pairs, got " +
                        std::to_string(batch_size));
    if (epochs < 1) throw ConfigError("epochs must be at least 1");
    if (!(margin > 0.0)) throw ConfigError("margin must be positive");
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("learning rate must be finite and nonnegative");
    if (seed < 0) throw ConfigError("seed must be nonnegative");
    if (val_every < 0) throw ConfigError("val_every must be nonnegative");
    model.validate();
  }

  static const std::set<std::string>& known_keys() {
    static const std::set<std::string> keys = {
        "batch_size", "epochs", "margin", "lr",      "seed", "val_every", "mode", "design",
        "features",   "model_dim", "heads", "word_dim", "d2",   "d3",        "droi", "role_vocab"};
    return keys;
  }

  KvFile to_kv() const {
    KvFile kv;
    kv.set_i64("batch_size", batch_size);
    kv.set_i64("epochs", epochs);
    kv.set_f64("margin", margin);
    kv.set_f64("lr", lr);
    kv.set_i64("seed", seed);
    kv.set_i64("val_every", val_every);
    kv.set("mode", weighting_mode_name(mode));
    kv.set("design", design_name(model.design));
    kv.set("features", feature_setting_name(model.features));
    kv.set_i64("model_dim", model.model_dim);
    kv.set_i64("heads", model.heads);
    kv.set_i64("word_dim", model.word_dim);
    kv.set_i64("d2", model.d2);
    kv.set_i64("d3", model.d3);
    kv.set_i64("droi", model.droi);
    kv.set_i64("role_vocab", model.role_vocab);
    return kv;
  }

  /// Missing keys keep their defaults; unknown keys are rejected so typos
  /// fail loudly instead of silently running the default.
  static TrainConfig from_kv(const KvFile& kv) {
    for (const auto& [k, v] : kv.items())
      if (!known_keys().count(k)) throw ConfigError("unknown config key '" + k + "'");
    TrainConfig c;
    if (kv.has("batch_size")) c.batch_size = kv.get_i64("batch_size");
    if (kv.has("epochs")) c.epochs = kv.get_i64("epochs");
    if (kv.has("margin")) c.margin = kv.get_f64("margin");
    if (kv.has("lr")) c.lr = kv.get_f64("lr");
    if (kv.has("seed")) c.seed = kv.get_i64("seed");
    if (kv.has("val_every")) c.val_every = kv.get_i64("val_every");
    if (kv.has("mode")) c.mode = weighting_mode_from_name(kv.get("mode"));
    if (kv.has("design")) c.model.design = design_from_name(kv.get("design"));
    if (kv.has("features")) c.model.features = feature_setting_from_name(kv.get("features"));
    if (kv.has("model_dim")) c.model.model_dim = kv.get_i64("model_dim");
    if (kv.has("heads")) c.model.heads = kv.get_i64("heads");
    if (kv.has("word_dim")) c.model.word_dim = kv.get_i64("word_dim");
    if (kv.has("d2")) c.model.d2 = kv.get_i64("d2");
    if (kv.has("d3")) c.model.d3 = kv.get_i64("d3");
    if (kv.has("droi")) c.model.droi = kv.get_i64("droi");
    if (kv.has("role_vocab")) c.model.role_vocab = kv.get_i64("role_vocab");
    return c;
  }
};

template <class S>
struct AdamState {
  std::map<std::string, Tensor<S>> m, v;
  int64_t step = 0;
};

template <class S>
AdamState<S> init_adam(const Model<S>& model) {
  AdamState<S> st;
  for (const auto& [name, t] : model.params) {
    st.m[name] = Tensor<S>::zeros(t.shape);
    st.v[name] = Tensor<S>::zeros(t.shape);
  }
  return st;
}

/// One bias-corrected Adam update over every model parameter, in place.
/// All gradients are validated before anything mutates, so a non-finite
/// gradient error leaves parameters and moments untouched. lr zero leaves
/// parameters bitwise unchanged while moments still decay.
template <class S>
void optimizer_step(Model<S>& model, AdamState<S>& st, S lr) {
  for (const auto& [name, p] : model.params) {
    if (!p.grad) throw ValueError("optimizer_step: parameter '" + name + "' has no gradient");
    if (!st.m.count(name) || !st.v.count(name))
      throw ValueError("optimizer_step: state missing for '" + name + "'");
    for (S g : *p.grad)
      if (!std::isfinite(g))
        throw ValueError("optimizer_step: non-finite gradient in '" + name + "'");
  }
  ++st.step;
  const S b1 = S(kAdamBeta1), b2 = S(kAdamBeta2);
  const S c1 = S(1) - std::pow(b1, S(st.step));
  const S c2 = S(1) - std::pow(b2, S(st.step));
  for (auto& [name, p] : model.params) {
    S* m = st.m.at(name).ptr();
    S* v = st.v.at(name).ptr();
    S* w = p.ptr();
    const S* g = p.grad->data();
    const int64_t n = p.numel();
    for (int64_t i = 0; i < n; ++i) {
      m[i] = b1 * m[i] + (S(1) - b1) * g[i];
      v[i] = b2 * v[i] + (S(1) - b2) * g[i] * g[i];
      w[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + S(kAdamEps));
    }
  }
}

/// Everything needed to resume or evaluate a run: parameters and Adam
/// moments under their canonical names, the config echo, the vocabulary
/// the embedding rows are keyed to, and the generator state.
template <class S>
struct Checkpoint {
  TrainConfig cfg;
  std::vector<std::string> vocab;
  int64_t epoch = 0;
  int64_t adam_step = 0;
  std::string rng_state;
  std::map<std::string, Tensor<S>> tensors;
};

struct EpochLog {
  int64_t epoch = 0;
  double loss = 0.0;
  std::optional<RetrievalReport> val;
};

template <class S>
struct TrainRun {
  Model<S> model;
  AdamState<S> adam;
  Rng rng{0};
  int64_t epoch = 0;
  std::vector<EpochLog> logs;
  bool diverged = false;
};

namespace detail {

template <class S>
Tensor<S> value_copy(const Tensor<S>& t) {
  Tensor<S> c(t.shape);
  *c.data = *t.data;
  return c;
}

inline void write_raw(std::ostream& os, const void* p, size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

template <class T>
void write_pod(std::ostream& os, T v) {
  write_raw(os, &v, sizeof v);
}

inline void write_sized(std::ostream& os, const std::string& s) {
  write_pod<uint32_t>(os, static_cast<uint32_t>(s.size()));
  write_raw(os, s.data(), s.size());
}

struct CkptReader {
  std::istream& in;
  std::string origin;

  void raw(void* p, size_t n) {
    in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<size_t>(in.gcount()) != n)
      throw IoError(origin + ": truncated checkpoint");
  }

  template <class T>
  T pod() {
    T v;
    raw(&v, sizeof v);
    return v;
  }

  std::string sized() {
    auto n = pod<uint32_t>();
    if (n > (1u << 20)) throw IoError(origin + ": implausible string length");
    std::string s(n, '\0');
    raw(s.data(), n);
    return s;
  }
};

}  // namespace detail

inline constexpr char kCkptMagic[4] = {'R', 'M', 'C', 'K'};
inline constexpr uint32_t kCkptVersion = 1;

/// Versioned binary container, little-endian payloads. Writes to a
/// temporary file and renames so a crash never leaves a half checkpoint.
template <class S>
void save_checkpoint(const Checkpoint<S>& c, const std::string& path) {
  static_assert(std::endian::native == std::endian::little || sizeof(S) == 0,
                "checkpoint payloads are little-endian");
  namespace fs = std::filesystem;
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw IoError("cannot write " + tmp);
    detail::write_raw(os, kCkptMagic, 4);
    detail::write_pod<uint32_t>(os, kCkptVersion);
    detail::write_pod<uint32_t>(os, static_cast<uint32_t>(sizeof(S)));
    const std::string cfg_text = c.cfg.to_kv().serialize();
    detail::write_pod<uint64_t>(os, cfg_text.size());
    detail::write_raw(os, cfg_text.data(), cfg_text.size());
    detail::write_pod<uint64_t>(os, c.vocab.size());
    for (const auto& tok : c.vocab) detail::write_sized(os, tok);
    detail::write_pod<uint64_t>(os, static_cast<uint64_t>(c.epoch));
    detail::write_pod<uint64_t>(os, static_cast<uint64_t>(c.adam_step));
    detail::write_pod<uint64_t>(os, c.rng_state.size());
    detail::write_raw(os, c.rng_state.data(), c.rng_state.size());
    detail::write_pod<uint64_t>(os, c.tensors.size());
    for (const auto& [name, t] : c.tensors) {
      detail::write_sized(os, name);
      detail::write_pod<uint32_t>(os, static_cast<uint32_t>(t.rank()));
      for (int64_t e : t.shape) detail::write_pod<uint64_t>(os, static_cast<uint64_t>(e));
      detail::write_raw(os, t.data->data(), t.data->size() * sizeof(S));
    }
    if (!os) throw IoError("write failed for " + tmp);
  }
  fs::rename(tmp, path);
}

/// Parses the whole file before returning, so failures leave no partial
/// state. Trailing bytes, bad magic, and width mismatches all reject.
template <class S>
Checkpoint<S> load_checkpoint(const std::string& path) {
  static_assert(std::endian::native == std::endian::little || sizeof(S) == 0,
                "checkpoint payloads are little-endian");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  detail::CkptReader r{in, path};

  char magic[4];
  r.raw(magic, 4);
  if (std::string(magic, 4) != std::string(kCkptMagic, 4))
    throw IoError(path + ": not a checkpoint file");
  const auto version = r.pod<uint32_t>();
  if (version != kCkptVersion)
    throw IoError(path + ": checkpoint version " + std::to_string(version) + ", expected " +
                  std::to_string(kCkptVersion));
  const auto width = r.pod<uint32_t>();
  if (width != sizeof(S))
    throw IoError(path + ": checkpoint holds " + std::to_string(width) +
                  "-byte scalars, this build uses " + std::to_string(sizeof(S)));

  Checkpoint<S> c;
  const auto cfg_len = r.pod<uint64_t>();
  if (cfg_len > (1u << 20)) throw IoError(path + ": implausible config block");
  std::string cfg_text(cfg_len, '\0');
  r.raw(cfg_text.data(), cfg_len);
  std::istringstream cfg_in(cfg_text);
  c.cfg = TrainConfig::from_kv(KvFile::parse(cfg_in, path + " (config echo)"));

  const auto vocab_n = r.pod<uint64_t>();
  if (vocab_n > (1u << 24)) throw IoError(path + ": implausible vocabulary size");
  c.vocab.reserve(vocab_n);
  for (uint64_t i = 0; i < vocab_n; ++i) c.vocab.push_back(r.sized());
  c.epoch = static_cast<int64_t>(r.pod<uint64_t>());
  c.adam_step = static_cast<int64_t>(r.pod<uint64_t>());
  const auto rng_len = r.pod<uint64_t>();
  if (rng_len > (1u << 20)) throw IoError(path + ": implausible generator state");
  c.rng_state.resize(rng_len);
  r.raw(c.rng_state.data(), rng_len);

  const auto n_tensors = r.pod<uint64_t>();
  if (n_tensors > (1u << 20)) throw IoError(path + ": implausible tensor count");
  for (uint64_t i = 0; i < n_tensors; ++i) {
    const std::string name = r.sized();
    const auto rank = r.pod<uint32_t>();
    if (rank > 8) throw IoError(path + ": implausible tensor rank in '" + name + "'");
    std::vector<int64_t> shape;
    int64_t numel = 1;
    for (uint32_t d = 0; d < rank; ++d) {
      shape.push_back(static_cast<int64_t>(r.pod<uint64_t>()));
      numel *= shape.back();
    }
    if (numel < 0 || numel > (int64_t(1) << 34))
      throw IoError(path + ": implausible tensor size in '" + name + "'");
    Tensor<S> t(shape);
    r.raw(t.data->data(), static_cast<size_t>(numel) * sizeof(S));
    if (c.tensors.count(name)) throw IoError(path + ": duplicate tensor '" + name + "'");
    c.tensors[name] = t;
  }
  if (in.peek() != std::char_traits<char>::eof())
    throw IoError(path + ": trailing bytes after checkpoint payload");
  return c;
}

template <class S>
Checkpoint<S> make_checkpoint(const TrainRun<S>& run, const TrainConfig& cfg) {
  Checkpoint<S> c;
  c.cfg = cfg;
  c.vocab = run.model.vocabulary();
  c.epoch = run.epoch;
  c.adam_step = run.adam.step;
  c.rng_state = run.rng.state();
  for (const auto& [name, t] : run.model.params) c.tensors[name] = detail::value_copy(t);
  for (const auto& [name, t] : run.adam.m) c.tensors["adam.m." + name] = detail::value_copy(t);
  for (const auto& [name, t] : run.adam.v) c.tensors["adam.v." + name] = detail::value_copy(t);
  return c;
}

/// Rebuilds a model from a checkpoint. Values are written into the freshly
/// built tensors so the typed parameter views stay bound; the tensor key
/// set must match the architecture exactly.
template <class S>
TrainRun<S> restore_checkpoint(const Checkpoint<S>& c) {
  TrainRun<S> run;
  Rng scratch(0);
  run.model = build_model<S>(c.cfg.model, c.vocab, scratch);
  run.adam = init_adam(run.model);
  run.epoch = c.epoch;
  run.adam.step = c.adam_step;
  run.rng = Rng(0);
  run.rng.set_state(c.rng_state);

  std::map<std::string, Tensor<S>*> expected;
  for (auto& [name, t] : run.model.params) expected[name] = &t;
  for (auto& [name, t] : run.adam.m) expected["adam.m." + name] = &t;
  for (auto& [name, t] : run.adam.v) expected["adam.v." + name] = &t;

  std::string missing, unknown;
  for (const auto& [name, t] : expected)
    if (!c.tensors.count(name)) missing += missing.empty() ? name : ", " + name;
  for (const auto& [name, t] : c.tensors)
    if (!expected.count(name)) unknown += unknown.empty() ? name : ", " + name;
  if (!missing.empty() || !unknown.empty())
    throw ValueError("checkpoint does not match the model" +
                     (missing.empty() ? "" : "; missing: " + missing) +
                     (unknown.empty() ? "" : "; unknown: " + unknown));

  for (auto& [name, dst] : expected) {
    const Tensor<S>& src = c.tensors.at(name);
    if (src.shape != dst->shape)
      throw ValueError("checkpoint tensor '" + name + "' is " + shape_str(src.shape) +
                       ", model expects " + shape_str(dst->shape));
    *dst->data = *src.data;
  }
  return run;
}

inline std::string epoch_log_line(const EpochLog& el) {
  char buf[160];
  if (el.val) {
    std::snprintf(buf, sizeof(buf), "%lld %.10g [%.2f %.2f %.2f %lld]",
                  static_cast<long long>(el.epoch), el.loss, recall_or_throw(*el.val, 1),
                  recall_or_throw(*el.val, 5), recall_or_throw(*el.val, 10),
                  static_cast<long long>(el.val->median_rank));
  } else {
    std::snprintf(buf, sizeof(buf), "%lld %.10g", static_cast<long long>(el.epoch), el.loss);
  }
  return buf;
}

/// Deterministic training loop. One generator drives everything in a fixed
/// order: model init, then one shuffle per epoch; resuming from a
/// checkpoint replays the exact tail of the uninterrupted run. A non-finite
/// batch loss aborts before the step, so the returned parameters are the
/// last good state.
template <class S>
TrainRun<S> train(const Corpus& corpus, const TrainConfig& cfg, std::ostream* log = nullptr,
                  const Checkpoint<S>* resume = nullptr, const WordVectors* wv = nullptr) {
  cfg.validate();
  const int64_t n_pairs = static_cast<int64_t>(corpus.captions.size());
  if (n_pairs < cfg.batch_size)
    throw ValueError("corpus has " + std::to_string(n_pairs) + " captions, cannot fill a batch of " +
                     std::to_string(cfg.batch_size));

  TrainRun<S> run;
  if (resume) {
    if (resume->vocab != corpus.vocabulary())
      throw ValueError("checkpoint vocabulary does not match the corpus");
    const ModelConfig& a = resume->cfg.model;
    const ModelConfig& b = cfg.model;
    if (a.model_dim != b.model_dim || a.heads != b.heads || a.word_dim != b.word_dim ||
        a.d2 != b.d2 || a.d3 != b.d3 || a.droi != b.droi || a.role_vocab != b.role_vocab ||
        a.features != b.features)
      throw ConfigError("resume config changes the model architecture");
    run = restore_checkpoint(*resume);
  } else {
    run.rng = Rng(static_cast<uint64_t>(cfg.seed));
    run.model = build_model<S>(cfg.model, corpus.vocabulary(), run.rng, wv);
    run.adam = init_adam(run.model);
  }
  run.model.match.margin = S(cfg.margin);

  std::vector<int64_t> order(static_cast<size_t>(n_pairs));
  const int64_t batches = n_pairs / cfg.batch_size;
  for (int64_t epoch = run.epoch + 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    run.rng.shuffle(order);
    double loss_sum = 0.0;
    for (int64_t b = 0; b < batches; ++b) {
      // Cosines bound the loss, so blown-up parameters usually surface as a
      // non-finite intermediate throw rather than an infinite loss; both
      // abort before the step so the returned state is the last good one.
      try {
        Tape<S> tape;
        std::vector<VideoLevelEncodings<S>> vids;
        std::vector<TextLevelEncodings<S>> caps;
        for (int64_t i = 0; i < cfg.batch_size; ++i) {
          const int64_t cap_idx = order[static_cast<size_t>(b * cfg.batch_size + i)];
          const int64_t clip_idx = corpus.clip_of_caption(cap_idx);
          vids.push_back(
              run.model.encode_clip(corpus.clips[static_cast<size_t>(clip_idx)], &tape));
          caps.push_back(
              run.model.encode_caption(corpus.captions[static_cast<size_t>(cap_idx)], &tape));
        }
        std::vector<Tensor<S>> rows;
        for (int64_t i = 0; i < cfg.batch_size; ++i) {
          std::vector<Tensor<S>> cells;
          for (int64_t j = 0; j < cfg.batch_size; ++j)
            cells.push_back(match_score(vids[static_cast<size_t>(i)], caps[static_cast<size_t>(j)],
                                        cfg.mode, run.model.match, &tape));
          rows.push_back(concat(cells, 0, &tape));
        }
        auto loss = contrastive_loss(stack_rows(rows, &tape), S(cfg.margin), &tape);
        const double lv = static_cast<double>(loss.at(0));
        if (!std::isfinite(lv)) throw ValueError("non-finite batch loss");
        run.model.zero_grad();
        backward(loss, tape);
        optimizer_step(run.model, run.adam, S(cfg.lr));
        loss_sum += lv;
      } catch (const ValueError& e) {
        if (std::string(e.what()).find("non-finite") == std::string::npos) throw;
        run.diverged = true;
        run.epoch = epoch - 1;
        if (log) *log << epoch << " diverged: " << e.what() << "\n";
        return run;
      }
    }
    EpochLog el;
    el.epoch = epoch;
    el.loss = loss_sum / static_cast<double>(batches);
    if (cfg.val_every > 0 && (epoch % cfg.val_every == 0 || epoch == cfg.epochs))
      el.val = evaluate(run.model, corpus, cfg.mode, Direction::text_to_video);
    if (log) *log << epoch_log_line(el) << "\n";
    run.epoch = epoch;
    run.logs.push_back(el);
  }
  return run;
}

}  // namespace rome
