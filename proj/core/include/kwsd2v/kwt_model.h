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

#ifndef KWSD2V_KWT_MODEL_H_
#define KWSD2V_KWT_MODEL_H_

#include <cstdint>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "kwsd2v/param_store.h"

namespace kwsd2v {

// Architecture hyperparameters. The three published variants use 12 blocks
// and 64-wide attention heads; smaller custom shapes are accepted for
// desk-scale runs and tests.
struct KwtConfig {
  std::string name = "kwt-1";
  int n_blocks = 12;
  int encoder_dim = 64;
  int n_heads = 1;
  int mlp_dim = 256;
  int n_classes = 35;
  int seq_len = 98;
  int feature_dim = 40;

  static KwtConfig Kwt1();
  static KwtConfig Kwt2();
  static KwtConfig Kwt3();
  // 2 blocks, d = 64, one head. Used by the desk-scale profile.
  static KwtConfig Tiny();
  // "kwt-1", "kwt-2", "kwt-3" or "tiny".
  static KwtConfig FromName(const std::string& name);

  int head_dim() const { return encoder_dim / n_heads; }
  void Validate() const;
  // True for shapes that satisfy the published-variant constraints
  // (12 blocks, head width 64).
  bool IsStandardShape() const;
  bool operator==(const KwtConfig&) const = default;
};

class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Learnable scalars of the supervised model: encoder plus classification
// head. The mask token and regression head are excluded.
std::int64_t CountParameters(const KwtConfig& config);

// Tensor indices into the model's ParamLayout.
struct KwtIndex {
  struct Block {
    int norm1_gain, norm1_bias;
    int qkv_weight, qkv_bias;
    int out_weight, out_bias;
    int norm2_gain, norm2_bias;
    int fc1_weight, fc1_bias;
    int fc2_weight, fc2_bias;
  };
  int input_weight, input_bias;
  int positional;
  std::vector<Block> blocks;
  int final_gain, final_bias;
  int mask_token;
  int cls_fc1_weight, cls_fc1_bias, cls_fc2_weight, cls_fc2_bias;
  int reg_weight, reg_bias;
  // Tensors [0, num_encoder_tensors) form the encoder.
  int num_encoder_tensors;
};

template <typename T>
struct EncoderOutput {
  int batch = 0;
  // One (batch·seq_len)×d matrix per block, rows grouped by example.
  std::vector<Mat<T>> hiddens;
  // Final normalization applied to the last block output.
  Mat<T> normed;
  // batch×d time-average of `normed`.
  Mat<T> pooled;
};

template <typename T>
struct EncoderCache {
  struct Block {
    Mat<T> input;
    Mat<T> xhat1, norm1;
    Eigen::Matrix<T, Eigen::Dynamic, 1> rstd1;
    Mat<T> qkv;
    Mat<T> probs;  // (batch·heads·seq_len)×seq_len attention weights
    Mat<T> context;
    Mat<T> mid;
    Mat<T> xhat2, norm2;
    Eigen::Matrix<T, Eigen::Dynamic, 1> rstd2;
    Mat<T> pre_act, act;
  };
  int batch = 0;
  std::vector<Block> blocks;
  Mat<T> final_xhat;
  Eigen::Matrix<T, Eigen::Dynamic, 1> final_rstd;
};

template <typename T>
struct HeadCache {
  Mat<T> pooled;
  Mat<T> pre_act;
  Mat<T> act;
};

// KWT encoder with mean-pooling classification head and a linear regression
// head. Pre-norm blocks, GELU MLPs, learned positional table, no dropout.
// All batched inputs stack examples along rows: (batch·seq_len)×width.
template <typename T>
class KwtModel {
 public:
  explicit KwtModel(KwtConfig config);

  const KwtConfig& config() const { return config_; }
  const KwtIndex& index() const { return index_; }
  std::shared_ptr<const ParamLayout> layout() const { return layout_; }
  std::shared_ptr<const ParamLayout> encoder_layout() const { return encoder_layout_; }

  // Truncated normal (σ = 0.02, cut at 2σ) weights, zero biases, unit
  // normalization gains.
  ParamStore<T> Init(std::mt19937_64& rng) const;
  // Re-draws only the classification head.
  void InitClassifier(ParamStore<T>& params, std::mt19937_64& rng) const;

  Mat<T> Embed(const ParamStore<T>& params, const Mat<T>& frames) const;
  EncoderOutput<T> EncodeTokens(const ParamStore<T>& params, const Mat<T>& tokens,
                                int batch, EncoderCache<T>* cache = nullptr) const;
  EncoderOutput<T> Encode(const ParamStore<T>& params, const Mat<T>& frames, int batch,
                          EncoderCache<T>* cache = nullptr) const {
    return EncodeTokens(params, Embed(params, frames), batch, cache);
  }

  Mat<T> Classify(const ParamStore<T>& params, const EncoderOutput<T>& out,
                  HeadCache<T>* cache = nullptr) const;
  Mat<T> Regress(const ParamStore<T>& params, const EncoderOutput<T>& out) const;

  // Backward passes accumulate into `grads` (same layout as params) and
  // return the gradient with respect to their input.
  Mat<T> ClassifyBackward(const ParamStore<T>& params, const HeadCache<T>& cache,
                          const Mat<T>& d_logits, ParamStore<T>& grads) const;
  Mat<T> RegressBackward(const ParamStore<T>& params, const EncoderOutput<T>& out,
                         const Mat<T>& d_pred, ParamStore<T>& grads) const;
  // d_pooled (batch×d) expressed as a gradient on `normed`.
  Mat<T> PooledToNormedGrad(const Mat<T>& d_pooled) const;
  Mat<T> EncodeBackward(const ParamStore<T>& params, const EncoderCache<T>& cache,
                        const Mat<T>& d_normed, ParamStore<T>& grads) const;
  void EmbedBackward(const Mat<T>& frames, const Mat<T>& d_tokens,
                     ParamStore<T>& grads) const;

 private:
  KwtConfig config_;
  std::shared_ptr<const ParamLayout> layout_;
  std::shared_ptr<const ParamLayout> encoder_layout_;
  KwtIndex index_;
};

extern template class KwtModel<float>;
extern template class KwtModel<double>;

}  // namespace kwsd2v

#endif  // KWSD2V_KWT_MODEL_H_
