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

#ifndef KWSD2V_DATA2VEC_H_
#define KWSD2V_DATA2VEC_H_

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "kwsd2v/param_store.h"

namespace kwsd2v {

struct MaskSpec {
  std::vector<std::uint8_t> masked;  // one flag per time step
  std::vector<int> start_indices;

  int num_masked() const;
};

enum class MaskRule {
  // floor(p·T/N + u) distinct span starts drawn uniformly from the T - N + 1
  // positions where a full span fits (u ~ U[0, 1)). About half the steps end
  // up masked at p = 0.65, N = 10.
  kSpanCount,
  // Every step independently starts a span with probability p; spans are
  // clipped at the sequence end.
  kBernoulli,
};

std::string ToString(MaskRule rule);
MaskRule MaskRuleFromString(const std::string& s);

// Spans are unioned. An empty draw is retried once, after which one span at
// a uniform start is forced.
MaskSpec SampleMask(int seq_len, double p_mask, int span, std::mt19937_64& rng,
                    MaskRule rule = MaskRule::kSpanCount);

// Replaces masked rows of a (batch·seq_len)×d token matrix with mask_token.
// `masks` holds one MaskSpec per example.
template <typename T>
Mat<T> ApplyMask(const Mat<T>& tokens, std::span<const MaskSpec> masks,
                 const Eigen::Ref<const Eigen::Matrix<T, 1, Eigen::Dynamic>>& mask_token);

// Flattened per-row mask for a batch.
std::vector<std::uint8_t> FlattenMasks(std::span<const MaskSpec> masks);

struct TauSchedule {
  double tau0 = 0.999;
  double tau_end = 0.9999;
  std::int64_t n_tau = 1000;

  void Validate() const;
};

// Linear ramp from tau0 to tau_end over n_tau updates, constant afterwards.
double TauAt(std::int64_t step, const TauSchedule& schedule);

// EMA copy of the student encoder. Its layout is the encoder prefix of the
// student layout; heads and the mask token are never mirrored.
template <typename T>
struct TeacherState {
  ParamStore<T> weights;
  std::int64_t update_count = 0;

  static TeacherState FromStudent(const ParamStore<T>& student,
                                  std::shared_ptr<const ParamLayout> encoder_layout);
};

// teacher <- tau·teacher + (1 - tau)·student, elementwise, computed as
// teacher + (1 - tau)·(student - teacher).
template <typename T>
void EmaUpdate(TeacherState<T>& teacher, const ParamStore<T>& student, double tau);

// Sum over teacher scalars of |after - (tau·before + (1 - tau)·student)|.
// Zero when `after` came from exactly one EmaUpdate.
template <typename T>
double EmaResidual(const ParamStore<T>& before, const ParamStore<T>& after,
                   const ParamStore<T>& student, double tau);

template <typename T>
struct PretrainTargets {
  Mat<T> targets;             // (batch·seq_len)×d
  std::vector<double> layer_mean;
  std::vector<double> layer_variance;
};

// Average of the per-step standardized outputs of the top K blocks.
// Variances get `eps` added before the square root.
template <typename T>
PretrainTargets<T> BuildTargets(std::span<const Mat<T>> hiddens, int top_k,
                                double eps = 1e-6);

// Masked-step MSE. `row_mask` flags rows of the (batch·seq_len)×d matrices;
// each example's loss is averaged over its masked rows and features, then
// examples are averaged. Writes dLoss/dPredictions when `d_pred` is given.
template <typename T>
T PretrainLoss(const Mat<T>& predictions, const Mat<T>& targets,
               std::span<const std::uint8_t> row_mask, int seq_len,
               Mat<T>* d_pred = nullptr);

struct TargetStats {
  double mean_variance = 0.0;  // variance across batch items, averaged over steps and features
  double min_dim_variance = 0.0;
  bool collapsed = false;
};

inline constexpr double kCollapseThreshold = 0.01;

// `targets` is (batch·seq_len)×d.
template <typename T>
TargetStats ComputeTargetStats(const Mat<T>& targets, int seq_len);

}  // namespace kwsd2v

#endif  // KWSD2V_DATA2VEC_H_
