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

#ifndef KWSD2V_AUDIO_FEATURES_H_
#define KWSD2V_AUDIO_FEATURES_H_

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "kwsd2v/param_store.h"

namespace kwsd2v {

inline constexpr int kSampleRate = 16000;
inline constexpr int kClipSamples = 16000;

struct AudioClip {
  std::vector<float> samples;
  int sample_rate = kSampleRate;
};

// Pads with zeros or truncates to exactly `target_len` samples.
AudioClip MakeClip(std::vector<float> samples, int target_len = kClipSamples);

// Loads a 16 kHz 16-bit mono WAV. `offset` skips that many samples first
// (used for segments of long-form recordings). Throws IngestionError.
AudioClip LoadClip(const std::filesystem::path& path,
                   int target_len = kClipSamples, std::uint64_t offset = 0);

struct MfccConfig {
  int window_length = 480;
  int hop_length = 160;
  int n_mfcc = 40;
  int n_fft = 512;
  int n_mels = 64;
  double fmin = 0.0;
  double fmax = 8000.0;
  double log_floor = 1e-10;

  void Validate() const;
  // Frame count without padding: floor((n - window) / hop) + 1.
  int NumFrames(int num_samples) const;
  bool operator==(const MfccConfig&) const = default;
};

// T×n_mfcc, one row per frame.
using MfccFrames = Mat<float>;

// Hann-windowed power spectrum -> HTK mel filterbank -> log -> orthonormal
// DCT-II. Frames are taken without centering and zero-padded to n_fft.
class MfccExtractor {
 public:
  explicit MfccExtractor(const MfccConfig& config);

  MfccFrames Compute(std::span<const float> samples) const;
  const MfccConfig& config() const { return config_; }

 private:
  MfccConfig config_;
  Mat<double> dft_;        // window_length × 2·(n_fft/2+1), window folded in
  Mat<double> mel_;        // (n_fft/2+1) × n_mels
  Mat<double> dct_;        // n_mels × n_mfcc
};

MfccFrames ComputeMfcc(const AudioClip& clip, const MfccConfig& config);

struct SpecAugmentParams {
  int n_time_masks = 2;
  int max_time_mask = 25;
  int min_time_mask = 0;
  int n_freq_masks = 2;
  int max_freq_mask = 7;
  int min_freq_mask = 0;
  float mask_value = 0.0f;

  bool operator==(const SpecAugmentParams&) const = default;
};

// Returns a copy with time and frequency stripes set to mask_value. Widths
// are uniform in [min, max]; starts are uniform over valid positions.
MfccFrames SpecAugment(const MfccFrames& frames, const SpecAugmentParams& params,
                       std::mt19937_64& rng);

// Per-coefficient standardization statistics.
struct FeatureStats {
  std::vector<float> mean;
  std::vector<float> stddev;

  static FeatureStats Compute(std::span<const MfccFrames> frames);
  static FeatureStats Identity(int n_features);
  void Apply(MfccFrames& frames) const;
  bool empty() const { return mean.empty(); }
};

// Optional on-disk cache of float32 row-major frame matrices keyed by row id.
struct FeatureCacheEntry {
  std::string id;
  MfccFrames frames;
};
void SaveFeatureCache(const std::filesystem::path& path,
                      std::span<const FeatureCacheEntry> entries);
std::vector<FeatureCacheEntry> LoadFeatureCache(const std::filesystem::path& path);

}  // namespace kwsd2v

#endif  // KWSD2V_AUDIO_FEATURES_H_
