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

#ifndef KWSD2V_RUN_CONFIG_H_
#define KWSD2V_RUN_CONFIG_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "kwsd2v/audio_features.h"
#include "kwsd2v/data2vec.h"
#include "kwsd2v/kwt_model.h"
#include "kwsd2v/optim.h"

namespace kwsd2v {

enum class Task { kPretrain, kFinetune, kTrain, kEvaluate };
std::string ToString(Task task);
Task TaskFromString(const std::string& s);

struct Data2VecParams {
  double p_mask = 0.65;
  int span = 10;
  int top_k = 8;
  MaskRule mask_rule = MaskRule::kSpanCount;
  TauSchedule tau;
};

// Everything a run needs. Config files are JSON documents with nested
// sections; ToJson writes every field, defaults included, so a snapshot
// fully describes the run.
struct RunConfig {
  Task task = Task::kTrain;
  std::uint64_t seed = 0;
  KwtConfig model = KwtConfig::Kwt1();

  std::string train_manifest;
  std::string validation_manifest;
  std::string test_manifest;
  std::string feature_cache_dir;  // empty: no cache
  std::string output_dir = "runs/default";
  // Pretraining checkpoint the encoder starts from (fine-tuning only).
  std::string init_from;
  // Continue an interrupted run from this checkpoint.
  std::string resume_from;

  int epochs = 140;
  int batch_size = 512;
  int micro_batch = 64;
  // Stop once this many epochs are complete (< 0: run to `epochs`). The
  // schedule still spans `epochs`.
  int stop_after = -1;
  double label_smoothing = 0.1;
  double clip_grad_norm = 0.0;  // 0 disables

  OptimizerState<float> optimizer;  // hyperparameters only
  LrSchedule schedule;
  bool augment = true;
  SpecAugmentParams spec_augment;
  Data2VecParams data2vec;
  MfccConfig mfcc;

  // Defaults for each workflow: supervised runs use AdamW with warmup +
  // cosine; pretraining uses Adam with coupled decay, 1-cycle, clipping.
  static RunConfig Defaults(Task task);

  // Checks value ranges and, when `check_paths`, that inputs exist.
  void Validate(bool check_paths = true) const;
};

nlohmann::json ToJson(const RunConfig& config);
// Missing keys take the task defaults; "seed" is mandatory.
RunConfig RunConfigFromJson(const nlohmann::json& j);
// Comments are allowed. With `task` set, a missing "task" key defaults to
// it and a conflicting one is an error.
RunConfig LoadRunConfig(const std::filesystem::path& path, std::optional<Task> task = {});

nlohmann::json ToJson(const KwtConfig& model);
KwtConfig KwtConfigFromJson(const nlohmann::json& j);

}  // namespace kwsd2v

#endif  // KWSD2V_RUN_CONFIG_H_
