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

#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "kwsd2v/audio_features.h"
#include "kwsd2v/data2vec.h"
#include "kwsd2v/kwt_model.h"
#include "kwsd2v/objectives.h"
#include "kwsd2v/optim.h"

namespace kwsd2v {
namespace {

KwtConfig VariantFor(int index) {
  switch (index) {
    case 1: return KwtConfig::Kwt1();
    case 2: return KwtConfig::Kwt2();
    case 3: return KwtConfig::Kwt3();
    default: return KwtConfig::Tiny();
  }
}

Mat<float> RandomFrames(int batch, const KwtConfig& config, std::mt19937_64& rng) {
  std::normal_distribution<float> n;
  Mat<float> frames(static_cast<Eigen::Index>(batch) * config.seq_len, config.feature_dim);
  for (Eigen::Index i = 0; i < frames.size(); ++i) frames.data()[i] = n(rng);
  return frames;
}

void BM_Mfcc(benchmark::State& state) {
  const MfccExtractor extractor{MfccConfig{}};
  std::mt19937_64 rng(1);
  std::normal_distribution<float> n(0.0f, 0.1f);
  std::vector<float> clip(kClipSamples);
  for (float& x : clip) x = n(rng);
  for (auto _ : state) benchmark::DoNotOptimize(extractor.Compute(clip));
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_Mfcc);

// Args: variant (0 = tiny, 1..3 = KWT-n), batch size.
void BM_Forward(benchmark::State& state) {
  const KwtConfig config = VariantFor(static_cast<int>(state.range(0)));
  const int batch = static_cast<int>(state.range(1));
  const KwtModel<float> model(config);
  std::mt19937_64 rng(1);
  const auto params = model.Init(rng);
  const Mat<float> frames = RandomFrames(batch, config, rng);
  for (auto _ : state) {
    const auto out = model.Encode(params, frames, batch);
    benchmark::DoNotOptimize(model.Classify(params, out));
  }
  state.SetItemsProcessed(state.iterations() * batch);
  state.SetLabel(config.name);
}
BENCHMARK(BM_Forward)->Args({0, 64})->Args({1, 64})->Unit(benchmark::kMillisecond);

void BM_SupervisedStep(benchmark::State& state) {
  const KwtConfig config = VariantFor(static_cast<int>(state.range(0)));
  const int batch = static_cast<int>(state.range(1));
  const KwtModel<float> model(config);
  std::mt19937_64 rng(1);
  const auto params = model.Init(rng);
  const Mat<float> frames = RandomFrames(batch, config, rng);
  std::vector<int> labels(batch);
  for (int b = 0; b < batch; ++b) labels[b] = b % config.n_classes;
  ParamStore<float> grads(params.shared_layout());
  for (auto _ : state) {
    grads.SetZero();
    benchmark::DoNotOptimize(
        SupervisedObjective<float>(model, params, frames, labels, 0.1, &grads));
  }
  state.SetItemsProcessed(state.iterations() * batch);
  state.SetLabel(config.name);
}
BENCHMARK(BM_SupervisedStep)->Args({0, 64})->Args({1, 64})->Unit(benchmark::kMillisecond);

void BM_MaskedPredictionStep(benchmark::State& state) {
  const KwtConfig config = VariantFor(static_cast<int>(state.range(0)));
  const int batch = static_cast<int>(state.range(1));
  const KwtModel<float> model(config);
  std::mt19937_64 rng(1);
  const auto params = model.Init(rng);
  const Mat<float> frames = RandomFrames(batch, config, rng);
  std::vector<MaskSpec> masks;
  for (int b = 0; b < batch; ++b) masks.push_back(SampleMask(config.seq_len, 0.65, 10, rng));
  const auto teacher = model.Encode(params, frames, batch);
  const auto targets = BuildTargets<float>(teacher.hiddens, std::min(8, config.n_blocks));
  ParamStore<float> grads(params.shared_layout());
  for (auto _ : state) {
    grads.SetZero();
    benchmark::DoNotOptimize(MaskedPredictionObjective<float>(model, params, frames, masks,
                                                              targets.targets, &grads));
  }
  state.SetItemsProcessed(state.iterations() * batch);
  state.SetLabel(config.name);
}
BENCHMARK(BM_MaskedPredictionStep)->Args({0, 64})->Args({1, 64})->Unit(benchmark::kMillisecond);

void BM_AdamW(benchmark::State& state) {
  const KwtModel<float> model(VariantFor(static_cast<int>(state.range(0))));
  std::mt19937_64 rng(1);
  auto params = model.Init(rng);
  ParamStore<float> grads = model.Init(rng);
  OptimizerState<float> opt;
  opt.weight_decay = 0.1;
  for (auto _ : state) AdamWStep(params, grads, opt, 1e-3);
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(params.Flat().size()));
}
BENCHMARK(BM_AdamW)->Arg(1)->Arg(3);

void BM_SampleMask(benchmark::State& state) {
  std::mt19937_64 rng(1);
  const auto rule = static_cast<MaskRule>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(SampleMask(98, 0.65, 10, rng, rule));
}
BENCHMARK(BM_SampleMask)->Arg(static_cast<int>(MaskRule::kSpanCount))
    ->Arg(static_cast<int>(MaskRule::kBernoulli));

void BM_EmaUpdate(benchmark::State& state) {
  const KwtModel<float> model(KwtConfig::Kwt1());
  std::mt19937_64 rng(1);
  const auto student = model.Init(rng);
  auto teacher = TeacherState<float>::FromStudent(student, model.encoder_layout());
  for (auto _ : state) EmaUpdate(teacher, student, 0.999);
}
BENCHMARK(BM_EmaUpdate);

}  // namespace
}  // namespace kwsd2v

BENCHMARK_MAIN();
