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

#ifndef KWSD2V_WAV_H_
#define KWSD2V_WAV_H_

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace kwsd2v {

// Raised for any unreadable or unsupported audio input. The message always
// names the offending file.
class IngestionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct WavInfo {
  int sample_rate = 0;
  int channels = 0;
  int bits_per_sample = 0;
  std::uint64_t num_frames = 0;  // from the declared data chunk size
  std::uint64_t data_offset = 0;
};

// Parses the RIFF header only; sample data is not read.
WavInfo ReadWavInfo(const std::filesystem::path& path);

// Reads 16-bit PCM samples scaled to [-1, 1). `first` and `count` select a
// frame range; count == 0 reads to the end. Requires mono audio.
std::vector<float> ReadWavPcm16(const std::filesystem::path& path,
                                std::uint64_t first = 0,
                                std::uint64_t count = 0);

// Writes mono 16-bit PCM. Samples are clipped to [-1, 1].
void WriteWavPcm16(const std::filesystem::path& path,
                   std::span<const float> samples, int sample_rate);

}  // namespace kwsd2v

#endif  // KWSD2V_WAV_H_
