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

#include "kwsd2v/objectives.h"

#include "kwsd2v/optim.h"

namespace kwsd2v {

template <typename T>
T SupervisedObjective(const KwtModel<T>& model, const ParamStore<T>& params,
                      const Mat<T>& frames, std::span<const int> labels, double smoothing,
                      ParamStore<T>* grads, T grad_scale, Mat<T>* logits) {
  const int batch = static_cast<int>(labels.size());
  EncoderCache<T> cache;
  HeadCache<T> head;
  const bool backward = grads != nullptr;
  const auto enc = model.Encode(params, frames, batch, backward ? &cache : nullptr);
  Mat<T> out = model.Classify(params, enc, backward ? &head : nullptr);
  Mat<T> d_logits;
  const T loss = SmoothedCrossEntropy<T>(out, labels, smoothing, backward ? &d_logits : nullptr);
  if (backward) {
    d_logits *= grad_scale;
    const Mat<T> d_pooled = model.ClassifyBackward(params, head, d_logits, *grads);
    const Mat<T> d_tokens =
        model.EncodeBackward(params, cache, model.PooledToNormedGrad(d_pooled), *grads);
    model.EmbedBackward(frames, d_tokens, *grads);
  }
  if (logits != nullptr) *logits = std::move(out);
  return loss;
}

template <typename T>
T MaskedPredictionObjective(const KwtModel<T>& model, const ParamStore<T>& params,
                            const Mat<T>& frames, std::span<const MaskSpec> masks,
                            const Mat<T>& targets, ParamStore<T>* grads, T grad_scale) {
  const int batch = static_cast<int>(masks.size());
  const int mask_token = model.index().mask_token;
  const Mat<T> tokens = model.Embed(params, frames);
  const Mat<T> masked = ApplyMask<T>(tokens, masks, params.Row(mask_token));
  EncoderCache<T> cache;
  const bool backward = grads != nullptr;
  const auto out = model.EncodeTokens(params, masked, batch, backward ? &cache : nullptr);
  const Mat<T> pred = model.Regress(params, out);
  const auto row_mask = FlattenMasks(masks);
  Mat<T> d_pred;
  const T loss = PretrainLoss<T>(pred, targets, row_mask, model.config().seq_len,
                                 backward ? &d_pred : nullptr);
  if (backward) {
    d_pred *= grad_scale;
    const Mat<T> d_normed = model.RegressBackward(params, out, d_pred, *grads);
    Mat<T> d_tokens = model.EncodeBackward(params, cache, d_normed, *grads);
    // Masked rows came from the mask token, not from the input projection.
    auto d_mask = grads->Row(mask_token);
    for (Eigen::Index r = 0; r < d_tokens.rows(); ++r) {
      if (row_mask[r]) {
        d_mask += d_tokens.row(r);
        d_tokens.row(r).setZero();
      }
    }
    model.EmbedBackward(frames, d_tokens, *grads);
  }
  return loss;
}

template float SupervisedObjective<float>(const KwtModel<float>&, const ParamStore<float>&,
                                          const Mat<float>&, std::span<const int>, double,
                                          ParamStore<float>*, float, Mat<float>*);
template double SupervisedObjective<double>(const KwtModel<double>&, const ParamStore<double>&,
                                            const Mat<double>&, std::span<const int>, double,
                                            ParamStore<double>*, double, Mat<double>*);
template float MaskedPredictionObjective<float>(const KwtModel<float>&,
                                                const ParamStore<float>&, const Mat<float>&,
                                                std::span<const MaskSpec>, const Mat<float>&,
                                                ParamStore<float>*, float);
template double MaskedPredictionObjective<double>(const KwtModel<double>&,
                                                  const ParamStore<double>&,
                                                  const Mat<double>&, std::span<const MaskSpec>,
                                                  const Mat<double>&, ParamStore<double>*,
                                                  double);

}  // namespace kwsd2v
