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

#ifndef KWSD2V_TESTS_TEST_UTIL_H_
#define KWSD2V_TESTS_TEST_UTIL_H_

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "kwsd2v/data2vec.h"
#include "kwsd2v/kwt_model.h"
#include "kwsd2v/param_store.h"

namespace kwsd2v {
namespace testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// Minimal RIFF writer kept separate from the library's so that reader tests
// do not depend on the code under test.
void WriteRawWav(const std::filesystem::path& path, const std::vector<std::int16_t>& interleaved,
                 int sample_rate, int channels);

// Writes a mono 16-bit WAV header declaring `num_frames` samples but no
// sample data (enough for header-only ingestion).
void WriteHeaderOnlyWav(const std::filesystem::path& path, std::uint32_t num_frames);

void WriteText(const std::filesystem::path& path, const std::string& text);
std::string ReadText(const std::filesystem::path& path);

// 2-block, d = 16 model with two heads over 6×5 inputs and 3 classes.
KwtConfig GradCheckConfig();

struct TensorGradError {
  std::string name;
  double relative_error = 0.0;  // ||analytic - numeric|| / max(norms)
  double analytic_norm = 0.0;
  double numeric_norm = 0.0;
};

// Central differences of `loss` with respect to every scalar in `params`
// (step h), compared tensor by tensor with `analytic`.
std::vector<TensorGradError> CompareWithFiniteDifferences(
    ParamStore<double>& params, const ParamStore<double>& analytic,
    const std::function<double(const ParamStore<double>&)>& loss, double h);

double MaxRelativeError(const std::vector<TensorGradError>& errors);

// Gradient-check fixtures: a random model and batch for each objective.
struct GradCheckProblem {
  KwtModel<double> model{GradCheckConfig()};
  ParamStore<double> params;
  Mat<double> frames;
  std::vector<int> labels;
  std::vector<MaskSpec> masks;
  Mat<double> targets;
};
GradCheckProblem MakeGradCheckProblem(std::uint64_t seed);

std::vector<TensorGradError> CheckSupervisedGradients(GradCheckProblem& p, double h);
std::vector<TensorGradError> CheckMaskedPredictionGradients(GradCheckProblem& p, double h);

// Independent simulation of both masking rules: the masked fraction of one
// draw, used as the statistical oracle for SampleMask.
double OracleMaskedFraction(double p, int span, int seq_len, MaskRule rule,
                            std::mt19937_64& rng);

struct FractionStats {
  double mean = 0.0;
  double sem = 0.0;
};

template <typename Draw>
FractionStats Simulate(int draws, Draw draw) {
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < draws; ++i) {
    const double f = draw();
    sum += f;
    sq += f * f;
  }
  const double mean = sum / draws;
  return {mean, std::sqrt((sq / draws - mean * mean) / draws)};
}

}  // namespace testing
}  // namespace kwsd2v

#endif  // KWSD2V_TESTS_TEST_UTIL_H_
