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

#ifndef KWSD2V_SYNTHETIC_CORPUS_H_
#define KWSD2V_SYNTHETIC_CORPUS_H_

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace kwsd2v {

// Source-filter "keywords" for offline runs: each keyword is a fixed
// sequence of vowel/fricative units rendered with per-speaker pitch, vocal
// tract scale and speaking rate, random placement, and additive noise.
struct SyntheticCorpusSpec {
  int n_keywords = 5;
  int train_per_class = 1050;
  int validation_per_class = 100;
  int test_per_class = 200;
  int n_speakers = 240;
  std::uint64_t seed = 1234;
  double min_snr_db = 0.0;
  double max_snr_db = 20.0;
  // Relative level of an interfering second word mixed into each clip.
  double distractor_level = 0.5;
};

struct SyntheticSpeaker {
  double f0 = 120.0;
  double formant_scale = 1.0;
  double rate = 1.0;
  double breathiness = 0.1;
};

// Keyword names used as folder names, e.g. "asi".
std::vector<std::string> SyntheticKeywords(int n_keywords);

SyntheticSpeaker DrawSpeaker(std::mt19937_64& rng);

// One second of 16 kHz audio for `keyword`.
std::vector<float> SynthesizeUtterance(int keyword, const SyntheticSpeaker& speaker,
                                       const SyntheticCorpusSpec& spec, std::mt19937_64& rng);

// Writes the Speech Commands layout under root: one folder per keyword
// holding "<speaker>_nohash_<n>.wav" files plus validation_list.txt and
// testing_list.txt. Speakers are disjoint across the three splits.
void WriteSyntheticSpeechCommands(const std::filesystem::path& root,
                                  const SyntheticCorpusSpec& spec);

}  // namespace kwsd2v

#endif  // KWSD2V_SYNTHETIC_CORPUS_H_
