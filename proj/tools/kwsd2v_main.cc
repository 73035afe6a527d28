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

// Command line front end: ingest, split, pretrain, finetune, train,
// evaluate, plus segment/synth/defaults helpers for offline corpora.

#include <exception>
#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "kwsd2v/checkpoint.h"
#include "kwsd2v/datasets.h"
#include "kwsd2v/pipeline.h"
#include "kwsd2v/run_config.h"
#include "kwsd2v/synthetic_corpus.h"

namespace fs = std::filesystem;

namespace {

void PrintCounts(const std::string& name, const kwsd2v::Manifest& m, const fs::path& path) {
  std::cout << name << ": " << m.size() << " rows -> " << path.string() << "\n";
}

int Ingest(const fs::path& data_root, const fs::path& out) {
  const auto splits = kwsd2v::IngestSpeechCommands(data_root);
  fs::create_directories(out);
  const std::pair<const char*, const kwsd2v::Manifest*> parts[] = {
      {"train", &splits.train}, {"validation", &splits.validation}, {"test", &splits.test}};
  for (const auto& [name, manifest] : parts) {
    const fs::path path = out / (std::string(name) + ".csv");
    kwsd2v::SaveManifest(*manifest, path);
    PrintCounts(name, *manifest, path);
  }
  std::cout << "classes: " << splits.train.class_map.size() << "\n";
  return 0;
}

int Split(const fs::path& train, const kwsd2v::SplitSpec& spec, fs::path out) {
  const auto manifest = kwsd2v::LoadManifest(train);
  const auto split = kwsd2v::SplitLabelDeficient(manifest, spec);
  if (out.empty()) out = train.parent_path();
  fs::create_directories(out);
  const std::string stem = train.stem().string();
  const fs::path pre = out / (stem + "_pretrain.csv");
  const fs::path lab = out / (stem + "_labelled.csv");
  kwsd2v::SaveManifest(split.pretrain, pre);
  kwsd2v::SaveManifest(split.labelled, lab);
  PrintCounts("pretrain (unlabelled)", split.pretrain, pre);
  PrintCounts("labelled", split.labelled, lab);
  return 0;
}

int RunFromConfig(kwsd2v::Task task, const fs::path& config_path, const std::string& from,
                  const std::string& resume, int stop_after) {
  kwsd2v::RunConfig cfg = kwsd2v::LoadRunConfig(config_path, task);
  if (!from.empty()) cfg.init_from = from;
  if (!resume.empty()) cfg.resume_from = resume;
  if (stop_after >= 0) cfg.stop_after = stop_after;
  const auto result = kwsd2v::RunTask(cfg, std::cerr);
  std::cout << "last checkpoint: " << result.last_checkpoint.string() << "\n";
  if (task != kwsd2v::Task::kPretrain) {
    std::cout << "best checkpoint: " << result.best_checkpoint.string() << " (epoch "
              << result.best_epoch << ", val accuracy " << result.best_val_accuracy << ")\n";
    if (result.test_accuracy) std::cout << "test accuracy: " << *result.test_accuracy << "\n";
  } else if (result.collapse_warnings > 0) {
    std::cout << "collapse warnings: " << result.collapse_warnings << "\n";
  }
  return 0;
}

int Evaluate(const fs::path& ckpt_path, const fs::path& manifest_path, fs::path out,
             const std::string& cache) {
  const auto ckpt = kwsd2v::LoadCheckpoint(ckpt_path);
  const auto manifest = kwsd2v::LoadManifest(manifest_path);
  std::optional<fs::path> cache_path;
  if (!cache.empty()) cache_path = cache;
  const auto report = kwsd2v::Evaluate(ckpt, manifest, cache_path);
  if (out.empty()) {
    out = ckpt_path.parent_path() / ("eval_" + manifest_path.stem().string() + ".csv");
  }
  kwsd2v::WriteClassReport(report, out);
  std::cout << "accuracy: " << report.accuracy << " (" << report.count << " clips)\n"
            << "per-class report: " << out.string() << "\n";
  return 0;
}

int Segment(const fs::path& root, const fs::path& out, double clip, double hop) {
  const auto result = kwsd2v::SegmentCorpus(root, clip, hop);
  for (const auto& w : result.warnings) std::cerr << "warning: " << w << "\n";
  kwsd2v::SaveManifest(result.manifest, out);
  std::cout << "segments: " << result.manifest.size() << ", skipped files: " << result.skipped
            << " -> " << out.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Keyword spotting transformers with self-supervised pretraining"};
  app.require_subcommand(1);

  fs::path data_root, out_dir;
  auto* ingest = app.add_subcommand("ingest", "Build train/validation/test manifests");
  ingest->add_option("--data-root", data_root, "Speech Commands root directory")->required();
  ingest->add_option("--out", out_dir, "Output directory for manifests")->required();

  fs::path train_manifest, split_out;
  kwsd2v::SplitSpec split_spec;
  std::string split_mode = "stratified";
  auto* split = app.add_subcommand("split", "Carve an unlabelled pretraining set off a manifest");
  split->add_option("--train", train_manifest, "Labelled train manifest")->required();
  split->add_option("--fraction", split_spec.fraction_pretrain, "Fraction moved to pretraining")
      ->default_val(0.8)
      ->check(CLI::Range(0.0, 1.0));
  split->add_option("--seed", split_spec.seed, "Split seed")->required();
  split->add_option("--mode", split_mode, "stratified, global or speaker")
      ->default_val("stratified");
  split->add_option("--out", split_out, "Output directory (default: next to --train)");

  fs::path config_path;
  std::string from, resume;
  int stop_after = -1;
  auto add_run = [&](const std::string& name, const std::string& help) {
    auto* cmd = app.add_subcommand(name, help);
    cmd->add_option("--config", config_path, "JSON run config")->required();
    cmd->add_option("--resume", resume, "Checkpoint to resume from");
    cmd->add_option("--stop-after", stop_after, "Stop after this many completed epochs");
    return cmd;
  };
  auto* pretrain = add_run("pretrain", "Self-supervised pretraining");
  auto* finetune = add_run("finetune", "Fine-tune a pretrained encoder");
  finetune->add_option("--from", from, "Pretraining checkpoint")->required();
  auto* train = add_run("train", "Supervised baseline from random init");

  fs::path eval_ckpt, eval_manifest, eval_out;
  std::string eval_cache;
  auto* evaluate = app.add_subcommand("evaluate", "Accuracy and per-class report");
  evaluate->add_option("--from", eval_ckpt, "Supervised checkpoint")->required();
  evaluate->add_option("--manifest", eval_manifest, "Labelled manifest")->required();
  evaluate->add_option("--out", eval_out, "Per-class report CSV");
  evaluate->add_option("--feature-cache", eval_cache, "Feature cache file");

  fs::path seg_root, seg_out;
  double seg_clip = 1.0, seg_hop = 0.0;
  auto* segment = app.add_subcommand("segment", "Cut long recordings into unlabelled clips");
  segment->add_option("--root", seg_root, "Directory searched for .wav files")->required();
  segment->add_option("--out", seg_out, "Output manifest CSV")->required();
  segment->add_option("--clip-seconds", seg_clip)->default_val(1.0);
  segment->add_option("--hop-seconds", seg_hop, "0 means non-overlapping")->default_val(0.0);

  fs::path synth_out;
  kwsd2v::SyntheticCorpusSpec synth_spec;
  auto* synth = app.add_subcommand("synth", "Write a synthetic keyword corpus");
  synth->add_option("--out", synth_out, "Output root")->required();
  synth->add_option("--keywords", synth_spec.n_keywords)->default_val(synth_spec.n_keywords);
  synth->add_option("--train-per-class", synth_spec.train_per_class)
      ->default_val(synth_spec.train_per_class);
  synth->add_option("--validation-per-class", synth_spec.validation_per_class)
      ->default_val(synth_spec.validation_per_class);
  synth->add_option("--test-per-class", synth_spec.test_per_class)
      ->default_val(synth_spec.test_per_class);
  synth->add_option("--speakers", synth_spec.n_speakers)->default_val(synth_spec.n_speakers);
  synth->add_option("--seed", synth_spec.seed)->default_val(synth_spec.seed);

  std::string defaults_task;
  auto* defaults = app.add_subcommand("defaults", "Print the default config for a task");
  defaults->add_option("--task", defaults_task, "pretrain, finetune or train")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*ingest) return Ingest(data_root, out_dir);
    if (*split) {
      split_spec.mode = kwsd2v::SplitModeFromString(split_mode);
      return Split(train_manifest, split_spec, split_out);
    }
    if (*pretrain) return RunFromConfig(kwsd2v::Task::kPretrain, config_path, "", resume, stop_after);
    if (*finetune) return RunFromConfig(kwsd2v::Task::kFinetune, config_path, from, resume, stop_after);
    if (*train) return RunFromConfig(kwsd2v::Task::kTrain, config_path, "", resume, stop_after);
    if (*evaluate) return Evaluate(eval_ckpt, eval_manifest, eval_out, eval_cache);
    if (*segment) return Segment(seg_root, seg_out, seg_clip, seg_hop);
    if (*synth) {
      kwsd2v::WriteSyntheticSpeechCommands(synth_out, synth_spec);
      std::cout << "wrote synthetic corpus to " << synth_out.string() << "\n";
      return 0;
    }
    if (*defaults) {
      std::cout << kwsd2v::ToJson(kwsd2v::RunConfig::Defaults(kwsd2v::TaskFromString(defaults_task)))
                       .dump(2)
                << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
