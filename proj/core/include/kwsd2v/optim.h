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

#ifndef KWSD2V_OPTIM_H_
#define KWSD2V_OPTIM_H_

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "kwsd2v/param_store.h"

namespace kwsd2v {

class NonFiniteGradientError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename T>
struct OptimizerState {
  std::vector<T> m;
  std::vector<T> v;
  std::int64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  // true: AdamW (param·(1 - lr·λ) before the Adam delta).
  // false: Adam with λ·param added to the gradient.
  bool decoupled = true;

  void Resize(std::size_t n) {
    m.assign(n, T(0));
    v.assign(n, T(0));
  }
};

// One bias-corrected Adam step with weight decay. Throws
// NonFiniteGradientError naming the first tensor with a NaN/Inf gradient.
template <typename T>
void AdamWStep(ParamStore<T>& params, const ParamStore<T>& grads,
               OptimizerState<T>& state, double lr);

// Rescales grads so their global L2 norm is at most max_norm. Returns the
// norm before clipping.
template <typename T>
double ClipGlobalNorm(ParamStore<T>& grads, double max_norm);

struct LrSchedule {
  enum class Kind { kWarmupCosine, kOneCycle };

  Kind kind = Kind::kWarmupCosine;
  double eta_max = 1e-3;
  double warmup_epochs = 10;
  double total_epochs = 140;
  std::int64_t steps_per_epoch = 1;
  // Warmup starts at eta_max / (batch_size · total_epochs).
  int batch_size = 512;
  // One-cycle shape.
  double pct_start = 0.3;
  double div_factor = 25.0;
  double final_div_factor = 100.0;

  void Validate() const;
  // Learning rate at optimizer step `step` (0-based).
  double At(std::int64_t step) const;
};

std::string ToString(LrSchedule::Kind kind);
LrSchedule::Kind LrKindFromString(const std::string& s);

// Linear warmup to eta_max over warmup_epochs, then cosine to zero at
// total_epochs. `epoch` is fractional.
double WarmupCosineLr(double epoch, const LrSchedule& schedule);

// Linear ramp eta_max/div -> eta_max over pct_start of the run, cosine
// decay to eta_max/(div·final_div) at the last step.
double OneCycleLr(std::int64_t step, const LrSchedule& schedule);

// Cross entropy against (1 - ε)·onehot + ε/Nc. Logits are batch×Nc; returns
// the batch mean and optionally its gradient.
template <typename T>
T SmoothedCrossEntropy(const Mat<T>& logits, std::span<const int> labels,
                       double smoothing, Mat<T>* d_logits = nullptr);

// Row-wise argmax, ties broken towards the lowest index.
template <typename T>
std::vector<int> Argmax(const Mat<T>& logits);

template <typename T>
double Accuracy(const Mat<T>& logits, std::span<const int> labels);

}  // namespace kwsd2v

#endif  // KWSD2V_OPTIM_H_
