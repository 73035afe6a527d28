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

#ifndef KWSD2V_DATASETS_H_
#define KWSD2V_DATASETS_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kwsd2v/audio_features.h"

namespace kwsd2v {

inline constexpr int kNoLabel = -1;

struct ManifestRow {
  std::string id;
  // Relative to the manifest's data root. A "#<sample>" suffix addresses a
  // clip starting at that sample of a longer recording.
  std::string path;
  int label = kNoLabel;
  double duration = 0.0;

  bool operator==(const ManifestRow&) const = default;
};

struct Manifest {
  std::vector<ManifestRow> rows;
  std::vector<std::string> class_map;  // class index -> keyword
  std::filesystem::path data_root;

  std::size_t size() const { return rows.size(); }
  bool empty() const { return rows.empty(); }
  int ClassIndex(const std::string& keyword) const;  // -1 when absent
  bool operator==(const Manifest&) const = default;
};

struct AudioRef {
  std::filesystem::path file;
  std::uint64_t offset = 0;
};
AudioRef ResolveAudio(const Manifest& manifest, const ManifestRow& row);

// CSV with header "id,path,label,duration" (LF line endings, label empty
// for unlabelled rows) plus a dataset.json sidecar in the same directory
// holding the class map and data root.
void SaveManifest(const Manifest& manifest, const std::filesystem::path& csv_path);
Manifest LoadManifest(const std::filesystem::path& csv_path);

struct SpeechCommandsSplits {
  Manifest train;
  Manifest validation;
  Manifest test;
};

// Expects one folder per keyword plus validation_list.txt and
// testing_list.txt. Folders starting with '_' are ignored. Only WAV headers
// are read. Throws IngestionError on layout problems.
SpeechCommandsSplits IngestSpeechCommands(const std::filesystem::path& root);

enum class SplitMode { kStratified, kGlobal, kSpeaker };
std::string ToString(SplitMode mode);
SplitMode SplitModeFromString(const std::string& s);

struct SplitSpec {
  double fraction_pretrain = 0.8;
  std::uint64_t seed = 0;
  SplitMode mode = SplitMode::kStratified;
};

struct LabelDeficientSplit {
  Manifest pretrain;  // labels stripped
  Manifest labelled;
};

// Moves round(fraction·N) rows to the unlabelled pretraining set. The
// stratified mode allocates per keyword by largest remainder; the speaker
// mode keeps all files of one speaker on the same side.
LabelDeficientSplit SplitLabelDeficient(const Manifest& train, const SplitSpec& spec);

struct SegmentResult {
  Manifest manifest;
  int skipped = 0;
  std::vector<std::string> warnings;
};

// Cuts every 16 kHz mono WAV under root into clip_seconds windows advanced
// by hop_seconds (0 means non-overlapping); remainders are dropped.
SegmentResult SegmentCorpus(const std::filesystem::path& root, double clip_seconds = 1.0,
                            double hop_seconds = 0.0);

// Row indices of every batch of one epoch. The permutation depends only
// on (seed, epoch); the last batch may be short.
std::vector<std::vector<std::size_t>> EpochBatches(std::size_t num_rows, int batch_size,
                                                   std::uint64_t seed, std::int64_t epoch);

// Raw MFCC frames for every manifest row, in row order.
class FeatureBank {
 public:
  // Loads `cache_path` when it exists, computes anything missing and
  // rewrites the cache. Throws IngestionError naming the row id on
  // unreadable audio.
  static FeatureBank Build(const Manifest& manifest, const MfccConfig& config,
                           const std::optional<std::filesystem::path>& cache_path = {});

  const MfccFrames& operator[](std::size_t row) const { return frames_[row]; }
  std::span<const MfccFrames> frames() const { return frames_; }
  std::size_t size() const { return frames_.size(); }

 private:
  std::vector<MfccFrames> frames_;
};

struct Batch {
  std::vector<std::size_t> rows;
  std::vector<std::string> ids;
  std::vector<int> labels;
  Mat<float> features;  // (B·T)×F, standardized
};

// Stacks standardized frames; augmentation, when requested, is applied per
// example after standardization.
Batch GatherBatch(const Manifest& manifest, const FeatureBank& bank,
                  std::span<const std::size_t> rows, const FeatureStats& stats,
                  const SpecAugmentParams* augment = nullptr,
                  std::mt19937_64* rng = nullptr);

}  // namespace kwsd2v

#endif  // KWSD2V_DATASETS_H_
