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

#ifndef KWSD2V_OBJECTIVES_H_
#define KWSD2V_OBJECTIVES_H_

#include <span>

#include "kwsd2v/data2vec.h"
#include "kwsd2v/kwt_model.h"

namespace kwsd2v {

// Forward and backward passes of one (micro-)batch. When `grads` is given,
// grad_scale·dLoss/dParams is accumulated into it; the scale lets callers
// split a batch into micro-batches. Frames are (batch·seq_len)×feature_dim.

// Label-smoothed cross entropy of the classification head.
template <typename T>
T SupervisedObjective(const KwtModel<T>& model, const ParamStore<T>& params,
                      const Mat<T>& frames, std::span<const int> labels, double smoothing,
                      ParamStore<T>* grads = nullptr, T grad_scale = T(1),
                      Mat<T>* logits = nullptr);

// Masked-step regression onto `targets` ((batch·seq_len)×d). Masked token
// rows are replaced by the learned mask token before positions are added.
template <typename T>
T MaskedPredictionObjective(const KwtModel<T>& model, const ParamStore<T>& params,
                            const Mat<T>& frames, std::span<const MaskSpec> masks,
                            const Mat<T>& targets, ParamStore<T>* grads = nullptr,
                            T grad_scale = T(1));

}  // namespace kwsd2v

#endif  // KWSD2V_OBJECTIVES_H_
