// Drives the command-line binary end to end: subcommand plumbing, exit
// codes, config layering, output hygiene, and determinism of the artifacts.

#include <sys/wait.h>

#include <catch2/catch_amalgamated.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "rome/kv.hpp"

#ifndef ROME_CLI_BIN
#error "ROME_CLI_BIN must point at the built binary"
#endif

namespace fs = std::filesystem;

namespace {

struct RunResult {
  int code = -1;
  std::string out;
  std::string err;
};

fs::path temp_dir(const std::string& tag) {
  auto d = fs::temp_directory_path() / ("rome_cli_" + tag + "_" + std::to_string(::getpid()));
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunResult run(const std::string& args, const fs::path& scratch) {
  const fs::path out_f = scratch / "stdout.txt";
  const fs::path err_f = scratch / "stderr.txt";
  const std::string cmd =
      std::string(ROME_CLI_BIN) + " " + args + " >" + out_f.string() + " 2>" + err_f.string();
  const int rc = std::system(cmd.c_str());
  RunResult r;
  r.code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  r.out = slurp(out_f);
  r.err = slurp(err_f);
  return r;
}

int count_lines_starting(const std::string& text, const std::string& prefix) {
  int n = 0;
  std::istringstream ss(text);
  std::string line;
  while (std::getline(ss, line))
    if (line.rfind(prefix, 0) == 0) ++n;
  return n;
}

// Shared tiny corpus + train flags so the expensive runs happen once.
const std::string kTinyModel = "--model-dim 8 --heads 2 --word-dim 5";
const std::string kTinyTrain = "--batch-size 4 --val-every 0 --lr 0.01 --seed 7";

}  // namespace

TEST_CASE("synth writes a reproducible corpus and respects collisions") {
  auto dir = temp_dir("synth");
  const std::string base = "synth --seed 7 --clips 12 --classes 4 --d2 6 --d3 6 --droi 6 --out ";
  const fs::path d1 = dir / "c1";

  REQUIRE(run(base + d1.string(), dir).code == 0);
  const std::vector<std::string> files = {"manifest.txt", "features.jsonl", "captions.jsonl",
                                          "config.txt"};
  std::vector<std::string> before;
  for (const auto& f : files) before.push_back(slurp(d1 / f));

  // unchanged on refusal, byte-identical on forced rerun
  auto refused = run(base + d1.string(), dir);
  REQUIRE(refused.code == 2);
  REQUIRE(refused.err.find("--force") != std::string::npos);
  for (size_t i = 0; i < files.size(); ++i) REQUIRE(slurp(d1 / files[i]) == before[i]);
  REQUIRE(run(base + d1.string() + " --force", dir).code == 0);
  for (size_t i = 0; i < files.size(); ++i) REQUIRE(slurp(d1 / files[i]) == before[i]);

  // same seed in a fresh directory reproduces the corpus bytes
  const fs::path d2 = dir / "c2";
  REQUIRE(run(base + d2.string(), dir).code == 0);
  for (size_t i = 0; i + 1 < files.size(); ++i) REQUIRE(slurp(d2 / files[i]) == before[i]);

  REQUIRE(run("synth --seed 8 --clips 12 --d2 6 --d3 6 --droi 6 --out " + (dir / "c3").string(), dir)
              .code == 0);
  REQUIRE(slurp(dir / "c3" / "features.jsonl") != before[1]);

  fs::remove_all(dir);
}

TEST_CASE("synth usage errors exit 2") {
  auto dir = temp_dir("synth_err");
  REQUIRE(run("synth --seed 7 --clips 12", dir).code == 2);
  auto clips1 = run("synth --clips 1 --out " + (dir / "x").string(), dir);
  REQUIRE(clips1.code == 2);
  REQUIRE(clips1.err.find("at least 2") != std::string::npos);
  REQUIRE(run("synth --clips 12 --classes 40 --out " + (dir / "y").string(), dir).code == 2);
  fs::remove_all(dir);
}

TEST_CASE("bare invocations and parse failures exit 2, help exits 0") {
  auto dir = temp_dir("usage");
  REQUIRE(run("", dir).code == 2);
  REQUIRE(run("--help", dir).code == 0);
  REQUIRE(run("train --help", dir).code == 0);
  REQUIRE(run("frobnicate", dir).code == 2);
  REQUIRE(run("train --no-such-flag", dir).code == 2);
  fs::remove_all(dir);
}

TEST_CASE("train writes checkpoint, log, and echo; reruns need force") {
  auto dir = temp_dir("train");
  const fs::path corpus = dir / "corpus";
  REQUIRE(run("synth --seed 7 --clips 12 --classes 4 --captions-per-clip 2 --d2 6 --d3 6 --droi 6 "
              "--out " + corpus.string(), dir).code == 0);

  const std::string train_cmd = "train --data " + corpus.string() + " " + kTinyModel + " " +
                                kTinyTrain + " --epochs 3 --out ";
  const fs::path r1 = dir / "r1";
  auto t = run(train_cmd + r1.string(), dir);
  REQUIRE(t.code == 0);
  REQUIRE(fs::exists(r1 / "model.ckpt"));
  REQUIRE(fs::exists(r1 / "train_log.txt"));

  // feature dims come from the corpus manifest unless overridden
  rome::KvFile echo = rome::KvFile::load((r1 / "config.txt").string());
  REQUIRE(echo.get_i64("d2") == 6);
  REQUIRE(echo.get_i64("droi") == 6);
  REQUIRE(echo.get_i64("epochs") == 3);

  const std::string log1 = slurp(r1 / "train_log.txt");
  REQUIRE(count_lines_starting(log1, "1 ") == 1);
  REQUIRE(count_lines_starting(log1, "3 ") == 1);

  REQUIRE(run(train_cmd + r1.string(), dir).code == 2);
  REQUIRE(run(train_cmd + r1.string() + " --force", dir).code == 0);
  REQUIRE(slurp(r1 / "train_log.txt") == log1);  // seeded rerun is bitwise identical

  // resuming continues the epoch counter and reproduces the loss trail
  const fs::path full = dir / "full";
  const fs::path resumed = dir / "resumed";
  REQUIRE(run(train_cmd + full.string() + " --epochs 6", dir).code == 0);
  REQUIRE(run(train_cmd + resumed.string() + " --epochs 6 --resume " +
              (r1 / "model.ckpt").string(), dir).code == 0);
  const std::string full_log = slurp(full / "train_log.txt");
  const std::string tail = slurp(resumed / "train_log.txt");
  REQUIRE(tail.rfind("4 ", 0) == 0);
  REQUIRE(log1 + tail == full_log);

  fs::remove_all(dir);
}

TEST_CASE("train config errors exit 2 before touching the output directory") {
  auto dir = temp_dir("train_err");
  const fs::path corpus = dir / "corpus";
  REQUIRE(run("synth --seed 7 --clips 8 --classes 4 --d2 6 --d3 6 --droi 6 --out " +
              corpus.string(), dir).code == 0);
  const std::string base = "train --data " + corpus.string() + " --out " + (dir / "r").string();

  auto bad_mode = run(base + " --mode bogus", dir);
  REQUIRE(bad_mode.code == 2);
  REQUIRE(bad_mode.err.find("average, text, video, both") != std::string::npos);

  auto bad_dim = run(base + " " + kTinyModel + " --d2 99", dir);
  REQUIRE(bad_dim.code == 2);
  REQUIRE(bad_dim.err.find("in the corpus") != std::string::npos);
  REQUIRE_FALSE(fs::exists(dir / "r"));

  REQUIRE(run("train --out " + (dir / "r").string(), dir).code == 2);   // no data
  REQUIRE(run("train --data " + corpus.string(), dir).code == 2);      // no out
  REQUIRE(run(base + " --bits 16", dir).code == 2);
  fs::remove_all(dir);
}

TEST_CASE("config file layers under flags and rejects unknown keys") {
  auto dir = temp_dir("cfgfile");
  const fs::path corpus = dir / "corpus";
  REQUIRE(run("synth --seed 7 --clips 8 --classes 4 --d2 6 --d3 6 --droi 6 --out " +
              corpus.string(), dir).code == 0);

  rome::KvFile file;
  file.set_i64("epochs", 2);
  file.set_f64("lr", 0.001);
  file.set_i64("batch_size", 4);
  file.set_i64("model_dim", 8);
  file.set_i64("heads", 2);
  file.set_i64("word_dim", 5);
  file.set_i64("val_every", 0);
  file.save((dir / "run.cfg").string());

  const fs::path out = dir / "out";
  REQUIRE(run("train --config " + (dir / "run.cfg").string() + " --data " + corpus.string() +
              " --epochs 3 --out " + out.string(), dir).code == 0);
  rome::KvFile echo = rome::KvFile::load((out / "config.txt").string());
  REQUIRE(echo.get_i64("epochs") == 3);          // flag beats file
  REQUIRE(echo.get_f64("lr") == 0.001);          // file beats default
  REQUIRE(echo.get_i64("batch_size") == 4);
  REQUIRE(echo.get("data") == corpus.string());  // echo resolves paths too

  // the echo itself is a valid config file reproducing the run
  const fs::path again = dir / "again";
  REQUIRE(run("train --config " + (out / "config.txt").string() + " --out " + again.string(),
              dir).code == 0);
  REQUIRE(slurp(again / "train_log.txt") == slurp(out / "train_log.txt"));

  std::ofstream bad((dir / "bad.cfg").string());
  bad << "bogus_key = 1\n";
  bad.close();
  auto r = run("train --config " + (dir / "bad.cfg").string() + " --data " + corpus.string() +
               " --out " + (dir / "x").string(), dir);
  REQUIRE(r.code == 2);
  REQUIRE(r.err.find("bogus_key") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("eval reports both directions, honors subsets, and writes metrics") {
  auto dir = temp_dir("eval");
  const fs::path corpus = dir / "corpus";
  REQUIRE(run("synth --seed 7 --clips 12 --classes 4 --captions-per-clip 2 --d2 6 --d3 6 --droi 6 "
              "--out " + corpus.string(), dir).code == 0);
  const fs::path runo = dir / "run";
  REQUIRE(run("train --data " + corpus.string() + " " + kTinyModel + " " + kTinyTrain +
              " --epochs 2 --out " + runo.string(), dir).code == 0);
  const std::string ckpt = (runo / "model.ckpt").string();

  auto t2v = run("eval --ckpt " + ckpt + " --data " + corpus.string(), dir);
  REQUIRE(t2v.code == 0);
  REQUIRE(t2v.out.find("text_to_video: 24 queries over 12 gallery items") != std::string::npos);
  REQUIRE(t2v.out.find("medr = ") != std::string::npos);  // metrics echo to stdout without --out

  auto v2t = run("eval --ckpt " + ckpt + " --data " + corpus.string() + " --direction v2t", dir);
  REQUIRE(v2t.code == 0);
  REQUIRE(v2t.out.find("video_to_text: 12 queries over 24 gallery items") != std::string::npos);

  const fs::path mout = dir / "mout";
  REQUIRE(run("eval --ckpt " + ckpt + " --data " + corpus.string() + " --split-gallery 4 --out " +
              mout.string(), dir).code == 0);
  rome::KvFile metrics = rome::KvFile::load((mout / "metrics.txt").string());
  REQUIRE(metrics.get_i64("gallery") == 4);
  REQUIRE(metrics.get_i64("queries") == 8);
  REQUIRE(fs::exists(mout / "config.txt"));

  REQUIRE(run("eval --ckpt " + (dir / "missing.ckpt").string() + " --data " + corpus.string(),
              dir).code == 1);
  REQUIRE(run("eval --data " + corpus.string(), dir).code == 2);  // no checkpoint named
  REQUIRE(run("eval --ckpt " + ckpt + " --data " + corpus.string() + " --direction sideways",
              dir).code == 2);
  fs::remove_all(dir);
}

TEST_CASE("ablate emits the axis grids deterministically") {
  auto dir = temp_dir("ablate");
  const fs::path corpus = dir / "corpus";
  REQUIRE(run("synth --seed 7 --clips 12 --classes 4 --d2 6 --d3 6 --droi 6 --out " +
              corpus.string(), dir).code == 0);
  const std::string base = "ablate --data " + corpus.string() + " " + kTinyModel + " ";

  auto w = run(base + "--axes weighting", dir);
  REQUIRE(w.code == 0);
  REQUIRE(count_lines_starting(w.out, "mode=") == 4);
  REQUIRE(w.out.find("mode=average") < w.out.find("mode=text"));
  REQUIRE(w.out.find("mode=text") < w.out.find("mode=video"));
  REQUIRE(w.out.find("mode=video") < w.out.find("mode=both"));

  auto again = run(base + "--axes weighting", dir);
  REQUIRE(again.out == w.out);  // same seed, bitwise identical rows

  REQUIRE(count_lines_starting(run(base + "--axes design", dir).out, "mode=") == 2);
  REQUIRE(count_lines_starting(run(base + "--axes features", dir).out, "mode=") == 3);
  REQUIRE(count_lines_starting(run(base + "--axes design,features", dir).out, "mode=") == 6);

  // trained cells still produce one row per grid point
  const fs::path aout = dir / "aout";
  auto trained = run(base + "--batch-size 4 --lr 0.01 --seed 7 --axes design --epochs 1 --out " +
                     aout.string(), dir);
  REQUIRE(trained.code == 0);
  REQUIRE(count_lines_starting(trained.out, "mode=") == 2);
  REQUIRE(slurp(aout / "ablation.txt") == trained.out);

  auto bad = run(base + "--axes bogus", dir);
  REQUIRE(bad.code == 2);
  REQUIRE(bad.err.find("weighting, design, features") != std::string::npos);
  REQUIRE(run(base, dir).code == 2);  // an axis is required
  fs::remove_all(dir);
}

TEST_CASE("gradcheck passes clean, fails corrupted, refuses float") {
  auto dir = temp_dir("gradcheck");
  auto ok = run("gradcheck", dir);
  REQUIRE(ok.code == 0);
  REQUIRE(ok.out.find("max relative error") != std::string::npos);
  REQUIRE(ok.out.find("match finite differences") != std::string::npos);

  auto bad = run("gradcheck --corrupt-backward", dir);
  REQUIRE(bad.code == 1);
  REQUIRE(bad.err.find("failed") != std::string::npos);

  auto f32 = run("gradcheck --bits 32", dir);
  REQUIRE(f32.code == 2);
  REQUIRE(f32.err.find("64-bit") != std::string::npos);

  const fs::path gout = dir / "gout";
  REQUIRE(run("gradcheck --out " + gout.string(), dir).code == 0);
  rome::KvFile kv = rome::KvFile::load((gout / "gradcheck.txt").string());
  REQUIRE(kv.get("pass") == "yes");
  REQUIRE(kv.get_i64("checked") > 1000);
  fs::remove_all(dir);
}
