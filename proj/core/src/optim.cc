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

#include "kwsd2v/optim.h"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace kwsd2v {

template <typename T>
void AdamWStep(ParamStore<T>& params, const ParamStore<T>& grads,
               OptimizerState<T>& state, double lr) {
  if (lr < 0.0) throw std::invalid_argument("learning rate must be non-negative");
  auto p = params.Flat();
  auto g = grads.Flat();
  if (g.size() != p.size()) throw std::invalid_argument("gradient/parameter size mismatch");
  if (state.m.size() != p.size()) state.Resize(p.size());

  const ParamLayout& layout = params.layout();
  for (int i = 0; i < layout.num_tensors(); ++i) {
    for (T x : grads.Flat(i)) {
      if (!std::isfinite(x)) {
        throw NonFiniteGradientError("non-finite gradient for '" + layout[i].name + "'");
      }
    }
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const T b1 = static_cast<T>(state.beta1);
  const T b2 = static_cast<T>(state.beta2);
  const T c1 = static_cast<T>(1.0 / (1.0 - std::pow(state.beta1, t)));
  const T c2 = static_cast<T>(1.0 / (1.0 - std::pow(state.beta2, t)));
  const T rate = static_cast<T>(lr);
  const T eps = static_cast<T>(state.eps);
  const T decay = static_cast<T>(state.weight_decay);
  const T shrink = static_cast<T>(1.0 - lr * state.weight_decay);

  for (std::size_t i = 0; i < p.size(); ++i) {
    T grad = g[i];
    if (state.decoupled) {
      p[i] *= shrink;
    } else {
      grad += decay * p[i];
    }
    state.m[i] = b1 * state.m[i] + (T(1) - b1) * grad;
    state.v[i] = b2 * state.v[i] + (T(1) - b2) * grad * grad;
    const T m_hat = state.m[i] * c1;
    const T v_hat = state.v[i] * c2;
    p[i] -= rate * m_hat / (std::sqrt(v_hat) + eps);
  }
}

template <typename T>
double ClipGlobalNorm(ParamStore<T>& grads, double max_norm) {
  double sq = 0.0;
  for (T x : grads.Flat()) sq += static_cast<double>(x) * static_cast<double>(x);
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const T scale = static_cast<T>(max_norm / norm);
    for (T& x : grads.Flat()) x *= scale;
  }
  return norm;
}

void LrSchedule::Validate() const {
  if (!(eta_max > 0.0)) throw std::invalid_argument("eta_max must be positive");
  if (!(total_epochs > 0.0)) throw std::invalid_argument("total_epochs must be positive");
  if (kind == Kind::kWarmupCosine && !(warmup_epochs >= 0.0 && warmup_epochs < total_epochs)) {
    throw std::invalid_argument("warmup_epochs must lie in [0, total_epochs)");
  }
  if (steps_per_epoch <= 0) throw std::invalid_argument("steps_per_epoch must be positive");
  if (batch_size <= 0) throw std::invalid_argument("batch_size must be positive");
  if (kind == Kind::kOneCycle && !(pct_start > 0.0 && pct_start < 1.0)) {
    throw std::invalid_argument("pct_start must lie in (0, 1)");
  }
}

double LrSchedule::At(std::int64_t step) const {
  if (kind == Kind::kOneCycle) return OneCycleLr(step, *this);
  return WarmupCosineLr(static_cast<double>(step) / static_cast<double>(steps_per_epoch),
                        *this);
}

std::string ToString(LrSchedule::Kind kind) {
  return kind == LrSchedule::Kind::kOneCycle ? "one_cycle" : "warmup_cosine";
}

LrSchedule::Kind LrKindFromString(const std::string& s) {
  if (s == "one_cycle") return LrSchedule::Kind::kOneCycle;
  if (s == "warmup_cosine") return LrSchedule::Kind::kWarmupCosine;
  throw std::invalid_argument("unknown schedule kind '" + s + "'");
}

double WarmupCosineLr(double epoch, const LrSchedule& s) {
  const double eta0 = s.eta_max / (static_cast<double>(s.batch_size) * s.total_epochs);
  if (epoch < s.warmup_epochs) {
    return eta0 + (s.eta_max - eta0) * epoch / s.warmup_epochs;
  }
  const double frac =
      std::min((epoch - s.warmup_epochs) / (s.total_epochs - s.warmup_epochs), 1.0);
  return 0.5 * s.eta_max * (1.0 + std::cos(std::numbers::pi * frac));
}

double OneCycleLr(std::int64_t step, const LrSchedule& s) {
  const double total = s.total_epochs * static_cast<double>(s.steps_per_epoch);
  const double peak_at = s.pct_start * total;
  const double initial = s.eta_max / s.div_factor;
  const double final_lr = initial / s.final_div_factor;
  const double x = static_cast<double>(step);
  if (x <= peak_at) return initial + (s.eta_max - initial) * x / peak_at;
  // The decay ends on the last step, total - 1.
  const double frac = std::min((x - peak_at) / std::max(total - 1.0 - peak_at, 1.0), 1.0);
  return final_lr + 0.5 * (s.eta_max - final_lr) * (1.0 + std::cos(std::numbers::pi * frac));
}

template <typename T>
T SmoothedCrossEntropy(const Mat<T>& logits, std::span<const int> labels, double smoothing,
                       Mat<T>* d_logits) {
  if (!(smoothing >= 0.0 && smoothing < 1.0)) {
    throw std::invalid_argument("label smoothing must lie in [0, 1)");
  }
  const Eigen::Index batch = logits.rows();
  const Eigen::Index classes = logits.cols();
  if (static_cast<Eigen::Index>(labels.size()) != batch || batch == 0) {
    throw std::invalid_argument("labels must match the logit batch");
  }
  const T off = static_cast<T>(smoothing / static_cast<double>(classes));
  const T on = static_cast<T>(1.0 - smoothing) + off;
  if (d_logits != nullptr) d_logits->resize(batch, classes);
  T total = T(0);
  for (Eigen::Index b = 0; b < batch; ++b) {
    const int label = labels[b];
    if (label < 0 || label >= classes) throw std::out_of_range("label out of range");
    const T max = logits.row(b).maxCoeff();
    const T lse = max + std::log((logits.row(b).array() - max).exp().sum());
    T loss = T(0);
    for (Eigen::Index c = 0; c < classes; ++c) {
      const T target = c == label ? on : off;
      const T log_p = logits(b, c) - lse;
      loss -= target * log_p;
      if (d_logits != nullptr) {
        (*d_logits)(b, c) = (std::exp(log_p) - target) / static_cast<T>(batch);
      }
    }
    total += loss;
  }
  return total / static_cast<T>(batch);
}

template <typename T>
std::vector<int> Argmax(const Mat<T>& logits) {
  std::vector<int> out(logits.rows());
  for (Eigen::Index b = 0; b < logits.rows(); ++b) {
    int best = 0;
    for (Eigen::Index c = 1; c < logits.cols(); ++c) {
      if (logits(b, c) > logits(b, best)) best = static_cast<int>(c);
    }
    out[b] = best;
  }
  return out;
}

template <typename T>
double Accuracy(const Mat<T>& logits, std::span<const int> labels) {
  if (logits.rows() == 0 || static_cast<Eigen::Index>(labels.size()) != logits.rows()) {
    throw std::invalid_argument("accuracy needs a non-empty batch matching the labels");
  }
  const auto pred = Argmax(logits);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == labels[i];
  return static_cast<double>(correct) / static_cast<double>(pred.size());
}

#define KWSD2V_INSTANTIATE(T)                                                            \
  template void AdamWStep<T>(ParamStore<T>&, const ParamStore<T>&, OptimizerState<T>&,  \
                             double);                                                    \
  template double ClipGlobalNorm<T>(ParamStore<T>&, double);                             \
  template T SmoothedCrossEntropy<T>(const Mat<T>&, std::span<const int>, double, Mat<T>*); \
  template std::vector<int> Argmax<T>(const Mat<T>&);                                    \
  template double Accuracy<T>(const Mat<T>&, std::span<const int>);

KWSD2V_INSTANTIATE(float)
KWSD2V_INSTANTIATE(double)
#undef KWSD2V_INSTANTIATE

}  // namespace kwsd2v
