/* Copyright 2026 The kwsd2v Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// Acceptance checks. Prints one "CRITERION <n> ... PASS|FAIL" line per
// criterion and exits non-zero when any fails.
//
//   acceptance_test --work-dir DIR [--only 1,4,7]
//
// KWSD2V_SPEECH_COMMANDS=<V2 root> runs criterion 4 on the real archive
// instead of a header-only replica. With KWSD2V_FULL_VARIANT=kwt1|kwt2|kwt3
// as well, criterion 8 executes the full-scale profile for that variant.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "kwsd2v/checkpoint.h"
#include "kwsd2v/data2vec.h"
#include "kwsd2v/datasets.h"
#include "kwsd2v/kwt_model.h"
#include "kwsd2v/objectives.h"
#include "kwsd2v/pipeline.h"
#include "kwsd2v/run_config.h"
#include "kwsd2v/synthetic_corpus.h"
#include "test_util.h"

#ifndef KWSD2V_SOURCE_DIR
#error "KWSD2V_SOURCE_DIR must point at the source tree"
#endif

namespace kwsd2v {
namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double SecondsSince(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string Fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), format, args...);
  return buf;
}

std::string ReadBytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

const char* Env(const char* name) {
  const char* v = std::getenv(name);
  return v != nullptr && *v != '\0' ? v : nullptr;
}

double Median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

fs::path SourceDir() { return fs::path(KWSD2V_SOURCE_DIR); }

// 1. Gradient correctness ---------------------------------------------------

Outcome GradientCorrectness() {
  const auto start = Clock::now();
  testing::GradCheckProblem p = testing::MakeGradCheckProblem(11);
  const KwtConfig& c = p.model.config();
  const double ce = testing::MaxRelativeError(testing::CheckSupervisedGradients(p, 1e-5));
  const double mse = testing::MaxRelativeError(testing::CheckMaskedPredictionGradients(p, 1e-5));
  const double secs = SecondsSince(start);
  const bool shape = c.n_blocks == 2 && c.encoder_dim == 16;
  return {shape && ce < 1e-4 && mse < 1e-4 && secs < 120.0,
          Fmt("max rel err smoothed CE %.2e, masked MSE %.2e (limit 1e-4), %d blocks d=%d, "
              "%.1f s",
              ce, mse, c.n_blocks, c.encoder_dim, secs)};
}

// 2. Teacher update and regression targets -----------------------------------

Outcome TeacherAndTargets() {
  const auto start = Clock::now();
  std::vector<std::string> failures;

  const KwtModel<double> model(testing::GradCheckConfig());
  std::mt19937_64 rng(21);
  const ParamStore<double> student = model.Init(rng);
  auto fixed = TeacherState<double>::FromStudent(student, model.encoder_layout());
  for (double tau : {0.999, 0.99945, 0.9999}) EmaUpdate(fixed, student, tau);
  const auto t = fixed.weights.Flat();
  if (!std::equal(t.begin(), t.end(), student.Flat().begin())) {
    failures.push_back("teacher == student is not a fixed point");
  }
  std::mt19937_64 other(22);
  auto moving = TeacherState<double>::FromStudent(model.Init(other), model.encoder_layout());
  const ParamStore<double> before = moving.weights;
  EmaUpdate(moving, student, 0.9995);
  const double residual = EmaResidual(before, moving.weights, student, 0.9995);
  if (residual > 1e-12) failures.push_back(Fmt("EMA residual %.2e", residual));

  const TauSchedule tau;
  const double t0 = TauAt(0, tau), t_end = TauAt(1000, tau), t_mid = TauAt(500, tau);
  if (std::abs(t0 - 0.999) > 1e-12 || std::abs(t_end - 0.9999) > 1e-12 ||
      std::abs(t_mid - 0.99945) > 1e-12 || TauAt(5000, tau) != t_end) {
    failures.push_back(Fmt("tau %.6f/%.6f/%.6f", t0, t_mid, t_end));
  }

  // Targets from a real forward pass at training precision.
  const KwtModel<float> tiny(KwtConfig::Tiny());
  std::mt19937_64 init(23), data(24);
  const ParamStore<float> params = tiny.Init(init);
  const int batch = 4;
  Mat<float> frames(batch * tiny.config().seq_len, tiny.config().feature_dim);
  std::normal_distribution<float> normal(0.0f, 1.0f);
  for (Eigen::Index i = 0; i < frames.size(); ++i) frames.data()[i] = 3.0f * normal(data) + 1.0f;
  const auto out = tiny.Encode(params, frames, batch);
  const auto targets = BuildTargets<float>(out.hiddens, tiny.config().n_blocks);
  double max_row_mean = 0.0;
  for (Eigen::Index r = 0; r < targets.targets.rows(); ++r) {
    max_row_mean = std::max(max_row_mean, std::abs(static_cast<double>(
                                              targets.targets.row(r).mean())));
  }
  if (max_row_mean > 1e-5) failures.push_back(Fmt("target row mean %.2e", max_row_mean));

  // Perturbing unmasked rows of targets or predictions must not change the
  // loss.
  testing::GradCheckProblem p = testing::MakeGradCheckProblem(25);
  const auto rows = FlattenMasks(p.masks);
  const int seq_len = p.model.config().seq_len;
  const double loss = MaskedPredictionObjective(p.model, p.params, p.frames, p.masks, p.targets);
  Mat<double> noisy_targets = p.targets;
  Mat<double> preds = Mat<double>::Random(p.targets.rows(), p.targets.cols());
  Mat<double> noisy_preds = preds;
  int unmasked = 0;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r]) continue;
    ++unmasked;
    noisy_targets.row(r).array() += 7.0;
    noisy_preds.row(r).array() -= 5.0;
  }
  const double loss_noisy =
      MaskedPredictionObjective(p.model, p.params, p.frames, p.masks, noisy_targets);
  const double direct = PretrainLoss<double>(preds, p.targets, rows, seq_len);
  const double direct_noisy = PretrainLoss<double>(noisy_preds, noisy_targets, rows, seq_len);
  if (unmasked == 0) failures.push_back("no unmasked rows to perturb");
  if (loss != loss_noisy || direct != direct_noisy) {
    failures.push_back(Fmt("loss moved by %.2e / %.2e", loss_noisy - loss, direct_noisy - direct));
  }

  const double secs = SecondsSince(start);
  std::string detail =
      Fmt("EMA residual %.1e, tau %.4f/%.5f/%.4f, max target row mean %.1e, %d unmasked rows "
          "perturbed, %.1f s",
          residual, t0, t_mid, t_end, max_row_mean, unmasked, secs);
  for (const auto& f : failures) detail += "; " + f;
  return {failures.empty(), detail};
}

// 3. Masking statistics -------------------------------------------------------

Outcome MaskingStatistics() {
  const auto start = Clock::now();
  const int draws = 100000;
  bool pass = true;
  std::string detail;
  for (MaskRule rule : {MaskRule::kSpanCount, MaskRule::kBernoulli}) {
    std::mt19937_64 rng(31), oracle_rng(32);
    const auto got = testing::Simulate(
        draws, [&] { return SampleMask(98, 0.65, 10, rng, rule).num_masked() / 98.0; });
    const auto want = testing::Simulate(
        draws, [&] { return testing::OracleMaskedFraction(0.65, 10, 98, rule, oracle_rng); });
    const double sigma = std::hypot(got.sem, want.sem);
    const double z = std::abs(got.mean - want.mean) / std::max(sigma, 1e-12);
    pass = pass && z <= 3.0;
    detail += Fmt("%s %.5f vs oracle %.5f (%.2f sigma); ", ToString(rule).c_str(), got.mean,
                  want.mean, z);
  }
  const double secs = SecondsSince(start);
  return {pass && secs < 60.0, detail + Fmt("%d draws each, %.1f s", draws, secs)};
}

// 4. Split fidelity -------------------------------------------------------------

const std::vector<std::string>& V2Keywords() {
  static const std::vector<std::string> k = {
      "backward", "bed",   "bird",  "cat",    "dog",    "down",  "eight", "five",  "follow",
      "forward",  "four",  "go",    "happy",  "house",  "learn", "left",  "marvin", "nine",
      "no",       "off",   "on",    "one",    "right",  "seven", "sheila", "six",  "stop",
      "three",    "tree",  "two",   "up",     "visual", "wow",   "yes",   "zero"};
  return k;
}

// Header-only copy of the V2 layout: 105,829 clips over 35 keyword folders,
// 10,583 in each list file, plus an ignored noise folder.
void WriteV2Replica(const fs::path& root) {
  constexpr int kTotal = 105829;
  constexpr int kListed = 10583;
  const auto& words = V2Keywords();
  const int n_words = static_cast<int>(words.size());
  std::vector<std::string> files;
  files.reserve(kTotal);
  for (int w = 0; w < n_words; ++w) {
    fs::create_directories(root / words[w]);
    const int count = kTotal / n_words + (w < kTotal % n_words ? 1 : 0);
    for (int i = 0; i < count; ++i) {
      const auto speaker = static_cast<std::uint32_t>((w * 7919u + i / 3) * 2654435761u);
      const std::string rel = words[w] + "/" + Fmt("%08x_nohash_%d.wav", speaker, i % 3);
      testing::WriteHeaderOnlyWav(root / rel, 16000);
      files.push_back(rel);
    }
  }
  fs::create_directories(root / "_background_noise_");
  testing::WriteHeaderOnlyWav(root / "_background_noise_" / "white_noise.wav", 960000);
  std::mt19937_64 rng(2017);
  std::shuffle(files.begin(), files.end(), rng);
  auto write_list = [&](const fs::path& path, int begin) {
    std::vector<std::string> part(files.begin() + begin, files.begin() + begin + kListed);
    std::sort(part.begin(), part.end());
    std::string text;
    for (const auto& f : part) text += f + "\n";
    testing::WriteText(path, text);
  };
  write_list(root / "validation_list.txt", 0);
  write_list(root / "testing_list.txt", kListed);
}

Outcome SplitFidelity(const fs::path& work) {
  std::string source = "header-only replica";
  fs::path root;
  double replica_secs = 0.0;
  if (const char* real = Env("KWSD2V_SPEECH_COMMANDS")) {
    root = real;
    source = "archive at " + root.string();
  } else {
    root = work / "v2_replica";
    const auto t = Clock::now();
    WriteV2Replica(root);
    replica_secs = SecondsSince(t);
  }

  const auto start = Clock::now();
  const SpeechCommandsSplits splits = IngestSpeechCommands(root);
  const LabelDeficientSplit split = SplitLabelDeficient(splits.train, SplitSpec{0.8, 1});
  const fs::path out = work / "v2_manifests";
  SaveManifest(splits.train, out / "train.csv");
  SaveManifest(splits.validation, out / "validation.csv");
  SaveManifest(splits.test, out / "test.csv");
  SaveManifest(split.pretrain, out / "train_pretrain.csv");
  SaveManifest(split.labelled, out / "train_labelled.csv");

  std::size_t leaks = 0;
  std::unordered_set<std::string> ids, paths;
  for (const Manifest* m : {&split.pretrain, &split.labelled, &splits.validation, &splits.test}) {
    for (const auto& row : m->rows) {
      leaks += !ids.insert(row.id).second;
      leaks += !paths.insert(row.path).second;
    }
  }
  std::size_t labelled_pretrain = 0;
  for (const auto& row : split.pretrain.rows) labelled_pretrain += row.label != kNoLabel;
  const double secs = SecondsSince(start);

  auto near = [](std::size_t got, long want) {
    return std::abs(static_cast<long>(got) - want) <= 1;
  };
  const bool pass = near(split.pretrain.size(), 67731) && near(split.labelled.size(), 16932) &&
                    near(splits.validation.size(), 10583) && near(splits.test.size(), 10583) &&
                    split.pretrain.size() + split.labelled.size() == splits.train.size() &&
                    splits.train.class_map.size() == 35 && leaks == 0 &&
                    labelled_pretrain == 0 && secs < 120.0;
  return {pass, Fmt("%s: pretrain %zu, labelled %zu, validation %zu, test %zu "
                    "(want 67731/16932/10583/10583 +-1), %zu classes, %zu leaked ids/paths, "
                    "ingest+split %.1f s (replica written in %.1f s)",
                    source.c_str(), split.pretrain.size(), split.labelled.size(),
                    splits.validation.size(), splits.test.size(), splits.train.class_map.size(),
                    leaks, secs, replica_secs)};
}

// 5. Parameter counts -----------------------------------------------------------

Outcome ParameterCounts() {
  const std::vector<std::pair<KwtConfig, double>> cases = {
      {KwtConfig::Kwt1(), 607e3}, {KwtConfig::Kwt2(), 2394e3}, {KwtConfig::Kwt3(), 5361e3}};
  bool pass = true;
  std::string detail;
  for (const auto& [config, want] : cases) {
    const auto got = CountParameters(config);
    const double rel = (static_cast<double>(got) - want) / want;
    pass = pass && std::abs(rel) <= 0.05;
    detail += Fmt("%s %lld (%+.2f%% vs %.0fk); ", config.name.c_str(),
                  static_cast<long long>(got), 100.0 * rel, want / 1e3);
  }
  detail.resize(detail.size() - 2);
  return {pass, detail};
}

// 6. Memorization -----------------------------------------------------------------

Outcome Memorization(const fs::path& work) {
  const fs::path dir = work / "overfit";
  SyntheticCorpusSpec spec;
  spec.n_keywords = 4;
  spec.train_per_class = 2;
  spec.validation_per_class = 1;
  spec.test_per_class = 1;
  spec.n_speakers = 12;
  spec.seed = 8;
  WriteSyntheticSpeechCommands(dir / "corpus", spec);
  const SpeechCommandsSplits splits = IngestSpeechCommands(dir / "corpus");
  SaveManifest(splits.train, dir / "eight.csv");

  const auto start = Clock::now();
  RunConfig c = RunConfig::Defaults(Task::kTrain);
  c.seed = 1;
  c.model = KwtConfig::Tiny();
  c.train_manifest = (dir / "eight.csv").string();
  c.validation_manifest = c.train_manifest;
  c.output_dir = (dir / "run").string();
  c.epochs = 100;
  c.batch_size = 8;
  c.micro_batch = 8;
  std::ofstream log(dir / "train.log");
  const RunResult r = TrainSupervised(c, log);
  const EvalReport report =
      Evaluate(LoadCheckpoint(r.last_checkpoint), LoadManifest(dir / "eight.csv"));
  const double secs = SecondsSince(start);
  return {report.count == 8 && report.accuracy >= 0.99 && secs < 300.0,
          Fmt("train accuracy %.3f on %d clips after %d epochs, %.1f s", report.accuracy,
              report.count, c.epochs, secs)};
}

// 7 and 9. Desk-scale runs ----------------------------------------------------------

struct DeskRun {
  fs::path baseline, pretrain, finetune;  // output dirs
  double baseline_accuracy = 0.0;
  double finetune_accuracy = 0.0;
};

class Desk {
 public:
  explicit Desk(fs::path work) : work_(std::move(work)) {}

  // Synthetic corpus and manifests, laid out as the desk configs expect.
  void Prepare() {
    const SyntheticCorpusSpec spec;  // 5 keywords, 1050/100/200 clips per class
    WriteSyntheticSpeechCommands(work_ / "desk" / "corpus", spec);
    const SpeechCommandsSplits s = IngestSpeechCommands(work_ / "desk" / "corpus");
    const fs::path m = work_ / "desk" / "manifests";
    SaveManifest(s.train, m / "train.csv");
    SaveManifest(s.validation, m / "validation.csv");
    SaveManifest(s.test, m / "test.csv");
    // 50 labelled clips per keyword; the rest of the training split is
    // unlabelled pretraining data.
    const double labelled = 50.0 * static_cast<double>(s.train.class_map.size());
    const double fraction = 1.0 - labelled / static_cast<double>(s.train.size());
    const LabelDeficientSplit split = SplitLabelDeficient(s.train, SplitSpec{fraction, 7});
    SaveManifest(split.pretrain, m / "train_pretrain.csv");
    SaveManifest(split.labelled, m / "train_labelled.csv");
    summary_ = Fmt("%zu pretraining / %zu labelled / %zu validation / %zu test clips",
                   split.pretrain.size(), split.labelled.size(), s.validation.size(),
                   s.test.size());
  }

  DeskRun Run(std::uint64_t seed, const std::string& tag) {
    DeskRun run;
    const fs::path runs = fs::path("desk") / "runs" / tag;
    run.baseline = work_ / runs / "baseline";
    run.pretrain = work_ / runs / "pretrain";
    run.finetune = work_ / runs / "finetune";

    RunConfig base = Load("baseline.json", seed, run.baseline);
    run.baseline_accuracy = Execute(base, tag + " baseline").test_accuracy.value();

    RunConfig pre = Load("pretrain.json", seed, run.pretrain);
    const RunResult pre_result = Execute(pre, tag + " pretrain");

    RunConfig fine = Load("finetune.json", seed, run.finetune);
    fine.init_from = pre_result.last_checkpoint.string();
    run.finetune_accuracy = Execute(fine, tag + " finetune").test_accuracy.value();
    return run;
  }

  const std::string& summary() const { return summary_; }

 private:
  RunConfig Load(const std::string& name, std::uint64_t seed, const fs::path& out) const {
    RunConfig c = LoadRunConfig(SourceDir() / "configs" / "desk" / name);
    c.seed = seed;
    auto rebase = [&](std::string& p) {
      if (!p.empty()) p = (work_ / p).string();
    };
    rebase(c.train_manifest);
    rebase(c.validation_manifest);
    rebase(c.test_manifest);
    rebase(c.feature_cache_dir);
    c.output_dir = out.string();
    return c;
  }

  RunResult Execute(const RunConfig& c, const std::string& label) const {
    const auto start = Clock::now();
    fs::create_directories(c.output_dir);
    std::ofstream log(fs::path(c.output_dir) / "run.log");
    RunResult r = RunTask(c, log);
    std::cerr << "  " << label << ": "
              << (r.test_accuracy ? Fmt("test accuracy %.4f", *r.test_accuracy) : "done")
              << Fmt(" (%.0f s)", SecondsSince(start)) << std::endl;
    return r;
  }

  fs::path work_;
  std::string summary_;
};

Outcome PretrainingBenefit(Desk& desk, std::map<int, DeskRun>& runs) {
  const auto start = Clock::now();
  desk.Prepare();
  std::vector<double> base, fine;
  std::string per_seed;
  for (int seed : {1, 2, 3}) {
    const DeskRun r = desk.Run(seed, Fmt("seed%d", seed));
    runs[seed] = r;
    base.push_back(r.baseline_accuracy);
    fine.push_back(r.finetune_accuracy);
    per_seed += Fmt("seed %d %.4f -> %.4f; ", seed, r.baseline_accuracy, r.finetune_accuracy);
  }
  const double gain = Median(fine) - Median(base);
  return {gain >= 0.03,
          Fmt("median test accuracy baseline %.4f, fine-tuned %.4f, gain %+.2f points "
              "(need +3.00); ",
              Median(base), Median(fine), 100.0 * gain) +
              per_seed + desk.summary() + Fmt("; %.0f min", SecondsSince(start) / 60.0)};
}

Outcome Determinism(Desk& desk, const std::map<int, DeskRun>& runs) {
  const auto start = Clock::now();
  const auto it = runs.find(1);
  if (it == runs.end()) return {false, "seed-1 desk runs unavailable"};
  const DeskRun& first = it->second;
  const DeskRun again = desk.Run(1, "seed1_repeat");

  std::vector<std::string> failures;
  const std::vector<std::pair<fs::path, fs::path>> pairs = {{first.baseline, again.baseline},
                                                            {first.pretrain, again.pretrain},
                                                            {first.finetune, again.finetune}};
  for (const auto& [a, b] : pairs) {
    if (ReadBytes(a / "metrics.csv") != ReadBytes(b / "metrics.csv")) {
      failures.push_back(a.filename().string() + " metrics.csv differs");
    }
  }

  int checkpoints = 0;
  for (const fs::path& dir : {first.baseline, first.pretrain, first.finetune}) {
    for (const char* name : {"ckpt-last.bin", "ckpt-best.bin"}) {
      const fs::path path = dir / name;
      if (!fs::exists(path)) continue;
      ++checkpoints;
      const std::string bytes = ReadBytes(path);
      const Checkpoint loaded = LoadCheckpoint(path);
      const std::vector<char> again_bytes = SerializeCheckpoint(loaded);
      const fs::path resaved = dir / (std::string(name) + ".resaved");
      SaveCheckpoint(loaded, resaved);
      if (bytes != std::string(again_bytes.begin(), again_bytes.end()) ||
          bytes != ReadBytes(resaved)) {
        failures.push_back(path.string() + " changes on save/load/save");
      }
      fs::remove(resaved);
    }
  }
  std::string detail = Fmt("3 metrics.csv pairs from repeated seed-1 runs, %d checkpoints "
                           "round-tripped, %.0f min",
                           checkpoints, SecondsSince(start) / 60.0);
  for (const auto& f : failures) detail += "; " + f;
  return {failures.empty() && checkpoints >= 5, detail};
}

// 8. Full-scale profile ---------------------------------------------------------------

// Checks that a shipped full-scale config encodes the published recipe.
std::vector<std::string> CheckFullProfile(const std::string& variant, const RunConfig& c,
                                          Task task) {
  std::vector<std::string> bad;
  auto expect = [&](bool ok, const std::string& what) {
    if (!ok) bad.push_back(variant + " " + ToString(task) + ": " + what);
  };
  expect(c.task == task, "task");
  expect(c.model == KwtConfig::FromName(variant) && c.model.IsStandardShape(), "model shape");
  expect(c.optimizer.weight_decay == 0.1, "weight decay");
  expect(c.batch_size == 512, "batch size");
  if (task == Task::kPretrain) {
    expect(c.epochs == 200, "epochs");
    expect(c.schedule.kind == LrSchedule::Kind::kOneCycle, "1-cycle schedule");
    expect(!c.optimizer.decoupled, "Adam with weight decay");
    const Data2VecParams& d = c.data2vec;
    expect(d.tau.tau0 == 0.999 && d.tau.tau_end == 0.9999 && d.tau.n_tau == 1000, "tau");
    expect(d.p_mask == 0.65 && d.span == 10 && d.top_k == 8, "masking/top-K");
  } else {
    expect(c.epochs == 140, "epochs");
    expect(c.schedule.kind == LrSchedule::Kind::kWarmupCosine &&
               c.schedule.eta_max == 0.001 && c.schedule.warmup_epochs == 10.0,
           "warmup + cosine schedule");
    expect(c.optimizer.decoupled, "AdamW");
    expect(c.label_smoothing == 0.1, "label smoothing");
    expect(c.augment, "SpecAugment");
  }
  return bad;
}

Outcome FullScaleProfile(const fs::path& work) {
  const fs::path dir = SourceDir() / "configs" / "full";
  const nlohmann::json targets = nlohmann::json::parse(ReadBytes(dir / "targets.json"));
  const double tolerance = targets.at("tolerance").get<double>();
  const std::vector<std::pair<std::string, std::string>> variants = {
      {"kwt1", "kwt-1"}, {"kwt2", "kwt-2"}, {"kwt3", "kwt-3"}};
  const std::vector<std::pair<std::string, Task>> runs = {{"baseline", Task::kTrain},
                                                          {"baseline_full", Task::kTrain},
                                                          {"pretrain", Task::kPretrain},
                                                          {"finetune", Task::kFinetune}};
  std::vector<std::string> bad;
  for (const auto& [folder, variant] : variants) {
    for (const auto& [name, task] : runs) {
      const RunConfig c = LoadRunConfig(dir / folder / (name + ".json"));
      for (auto& b : CheckFullProfile(variant, c, task)) bad.push_back(b);
      if (task != Task::kPretrain &&
          !targets.at("test_accuracy").at(folder).contains(name)) {
        bad.push_back(folder + " " + name + ": no target accuracy");
      }
    }
  }
  if (!bad.empty()) {
    std::string detail = "profile check failed";
    for (const auto& b : bad) detail += "; " + b;
    return {false, detail};
  }

  const char* data = Env("KWSD2V_SPEECH_COMMANDS");
  const char* chosen = Env("KWSD2V_FULL_VARIANT");
  if (data == nullptr || chosen == nullptr) {
    return {true, Fmt("configs/full/{kwt1,kwt2,kwt3} validated against the published recipe "
                      "with targets +-%.3f; long run not executed (needs "
                      "KWSD2V_SPEECH_COMMANDS and KWSD2V_FULL_VARIANT)",
                      tolerance)};
  }

  // Opt-in long run: ingest, split, then every profile of one variant.
  const std::string folder = chosen;
  const auto& want = targets.at("test_accuracy").at(folder);
  const fs::path root = work / "full";
  const fs::path manifests = root / "data" / "speech_commands" / "manifests";
  const SpeechCommandsSplits s = IngestSpeechCommands(data);
  const LabelDeficientSplit split = SplitLabelDeficient(s.train, SplitSpec{0.8, 1});
  SaveManifest(s.train, manifests / "train.csv");
  SaveManifest(s.validation, manifests / "validation.csv");
  SaveManifest(s.test, manifests / "test.csv");
  SaveManifest(split.pretrain, manifests / "train_pretrain.csv");
  SaveManifest(split.labelled, manifests / "train_labelled.csv");

  bool pass = true;
  std::string detail = folder + ":";
  fs::path pretrained;
  for (const auto& [name, task] : runs) {
    RunConfig c = LoadRunConfig(dir / folder / (name + ".json"));
    for (std::string* p : {&c.train_manifest, &c.validation_manifest, &c.test_manifest,
                           &c.feature_cache_dir, &c.output_dir}) {
      if (!p->empty()) *p = (root / *p).string();
    }
    if (task == Task::kFinetune) c.init_from = pretrained.string();
    fs::create_directories(c.output_dir);
    std::ofstream log(fs::path(c.output_dir) / "run.log");
    const RunResult r = RunTask(c, log);
    if (task == Task::kPretrain) {
      pretrained = r.last_checkpoint;
      continue;
    }
    const double target = want.at(name).get<double>();
    const double got = r.test_accuracy.value();
    pass = pass && std::abs(got - target) <= tolerance;
    detail += Fmt(" %s %.4f (target %.4f);", name.c_str(), got, target);
  }
  return {pass, detail};
}

// Driver ------------------------------------------------------------------------------

int Main(int argc, char** argv) {
  CLI::App app("Acceptance checks");
  std::string work_dir = "acceptance_work";
  std::vector<int> only;
  app.add_option("--work-dir", work_dir, "Scratch directory (wiped first)");
  app.add_option("--only", only, "Criteria to run (default: all)")->delimiter(',');
  CLI11_PARSE(app, argc, argv);

  const fs::path work = fs::absolute(work_dir);
  fs::remove_all(work);
  fs::create_directories(work);

  Desk desk(work);
  std::map<int, DeskRun> desk_runs;
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient correctness", GradientCorrectness},
      {"teacher update and targets", TeacherAndTargets},
      {"masking statistics", MaskingStatistics},
      {"split fidelity", [&] { return SplitFidelity(work); }},
      {"parameter counts", ParameterCounts},
      {"overfit smoke test", [&] { return Memorization(work); }},
      {"desk-scale pretraining benefit", [&] { return PretrainingBenefit(desk, desk_runs); }},
      {"full-scale long-run profile", [&] { return FullScaleProfile(work); }},
      {"determinism", [&] { return Determinism(desk, desk_runs); }},
  };

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << "CRITERION " << id << " " << criteria[i].first << ": "
              << (o.pass ? "PASS" : "FAIL") << " - " << o.detail << std::endl;
  }
  return failed == 0 ? 0 : 1;
}

}  // namespace
}  // namespace kwsd2v

int main(int argc, char** argv) { return kwsd2v::Main(argc, argv); }
