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

#ifndef KWSD2V_CHECKPOINT_H_
#define KWSD2V_CHECKPOINT_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kwsd2v/audio_features.h"
#include "kwsd2v/data2vec.h"
#include "kwsd2v/kwt_model.h"
#include "kwsd2v/optim.h"

namespace kwsd2v {

inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Self-describing training state.
//
// File layout (little-endian):
//   "KWSD2VCK" | u32 version | u64 header length | header JSON | u32 crc32
//   u32 tensor count | per tensor: u32 name length, name, u32 rows, u32 cols
//   u64 float count | float32 row-major data | u32 crc32 of the tensor section
//
// Tensor names are prefixed by section: "student/", "optimizer.m/",
// "optimizer.v/", "teacher/", plus "features/mean" and "features/stddev".
struct Checkpoint {
  std::string kind = "supervised";  // or "pretrain"
  KwtConfig model;
  nlohmann::json config;            // run config snapshot
  std::vector<std::string> class_map;
  std::int64_t epoch = 0;           // completed epochs
  std::int64_t global_step = 0;
  std::map<std::string, std::string> rng_states;
  nlohmann::json metrics = nlohmann::json::object();
  FeatureStats feature_stats;

  ParamStore<float> student;
  std::optional<OptimizerState<float>> optimizer;
  std::optional<TeacherState<float>> teacher;
};

void SaveCheckpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
std::vector<char> SerializeCheckpoint(const Checkpoint& ckpt);

// Throws CheckpointError on bad magic, version mismatch, truncation or a
// checksum failure.
Checkpoint LoadCheckpoint(const std::filesystem::path& path);
Checkpoint DeserializeCheckpoint(std::span<const char> bytes);

// Throws CheckpointError listing every tensor whose shape or presence
// differs from what `expected` requires.
void CheckCompatible(const Checkpoint& ckpt, const KwtConfig& expected,
                     bool encoder_only = false);

// Text form of an engine state, as written by operator<<.
std::string EngineState(const std::mt19937_64& rng);
void RestoreEngine(std::mt19937_64& rng, const std::string& state);

}  // namespace kwsd2v

#endif  // KWSD2V_CHECKPOINT_H_
