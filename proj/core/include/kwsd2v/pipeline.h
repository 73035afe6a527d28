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

#ifndef KWSD2V_PIPELINE_H_
#define KWSD2V_PIPELINE_H_

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "kwsd2v/checkpoint.h"
#include "kwsd2v/datasets.h"
#include "kwsd2v/run_config.h"

namespace kwsd2v {

// Set KWSD2V_DETERMINISTIC=0 to record wall-clock times in metrics.csv.
// In the default deterministic mode that column is left empty so repeated
// runs produce byte-identical files.
bool DeterministicMode();

struct MetricsRow {
  int epoch = 0;
  std::string phase;  // train, val, test
  double loss = 0.0;
  std::optional<double> accuracy;
  std::optional<double> lr;
  std::optional<double> tau;
  std::optional<double> target_variance;
  std::optional<double> wall_seconds;

  bool operator==(const MetricsRow&) const = default;
};

inline constexpr const char* kMetricsHeader =
    "epoch,phase,loss,accuracy,lr,tau,target_variance,wall_seconds";

std::string FormatMetricsRow(const MetricsRow& row);
// Appends to `path`, writing the header first when the file is new.
void AppendMetrics(const std::filesystem::path& path, const std::vector<MetricsRow>& rows);

struct RunResult {
  std::vector<MetricsRow> metrics;
  std::filesystem::path last_checkpoint;
  std::filesystem::path best_checkpoint;  // supervised runs only
  double best_val_accuracy = 0.0;
  int best_epoch = 0;
  std::optional<double> test_accuracy;    // of the best checkpoint
  int collapse_warnings = 0;              // pretraining only
};

// Baseline recipe from random init: AdamW, warmup + cosine, label
// smoothing, SpecAugment. Saves ckpt-best.bin (by validation accuracy) and
// ckpt-last.bin and writes metrics.csv into output_dir.
RunResult TrainSupervised(const RunConfig& config, std::ostream& log);

// Same recipe as TrainSupervised; the encoder starts from the student
// weights of config.init_from and the classification head is fresh.
RunResult Finetune(const RunConfig& config, std::ostream& log);

// Student/teacher masked prediction. Each step: teacher encodes the clean
// input, targets are built from its top-K blocks, the student encodes the
// masked input, the masked MSE updates the student, then the teacher takes
// one EMA step.
RunResult Pretrain(const RunConfig& config, std::ostream& log);

// Dispatches on config.task.
RunResult RunTask(const RunConfig& config, std::ostream& log);

struct ClassReport {
  std::string keyword;
  int count = 0;
  int correct = 0;
  double accuracy = 0.0;
};

struct EvalReport {
  double accuracy = 0.0;
  double loss = 0.0;
  int count = 0;
  std::vector<ClassReport> per_class;
  std::vector<int> predictions;
};

// Eval-mode forward over the manifest: no augmentation, no masking.
// Throws when the manifest's class map differs from the checkpoint's.
EvalReport Evaluate(const Checkpoint& ckpt, const Manifest& manifest,
                    const std::optional<std::filesystem::path>& feature_cache = {},
                    int micro_batch = 64);
void WriteClassReport(const EvalReport& report, const std::filesystem::path& path);

// Parameters a supervised run starts from: fresh init, with the encoder
// copied from `pretrained` when given.
ParamStore<float> InitialSupervisedParams(const KwtModel<float>& model,
                                          const Checkpoint* pretrained,
                                          std::mt19937_64& init_rng);

// Independent engine for one named purpose ("init", "data", "masking",
// "augmentation") derived from the run seed.
std::mt19937_64 SubstreamEngine(std::uint64_t seed, const std::string& purpose);

}  // namespace kwsd2v

#endif  // KWSD2V_PIPELINE_H_
