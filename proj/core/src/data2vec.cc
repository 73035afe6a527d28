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

#include "kwsd2v/data2vec.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace kwsd2v {

int MaskSpec::num_masked() const {
  return static_cast<int>(std::count(masked.begin(), masked.end(), std::uint8_t{1}));
}

MaskSpec SampleMask(int seq_len, double p_mask, int span, std::mt19937_64& rng,
                    MaskRule rule) {
  if (!(p_mask >= 0.0 && p_mask <= 1.0)) {
    throw std::invalid_argument("p_mask must lie in [0, 1]");
  }
  if (span < 1 || span > seq_len) {
    throw std::invalid_argument("span must lie in [1, seq_len]");
  }
  MaskSpec spec;
  spec.masked.assign(seq_len, 0);
  auto mark = [&spec, seq_len, span](int start) {
    spec.start_indices.push_back(start);
    const int end = std::min(seq_len, start + span);
    std::fill(spec.masked.begin() + start, spec.masked.begin() + end, std::uint8_t{1});
  };
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int n_starts = seq_len - span + 1;
  for (int attempt = 0; attempt < 2 && spec.start_indices.empty(); ++attempt) {
    if (rule == MaskRule::kBernoulli) {
      for (int t = 0; t < seq_len; ++t) {
        if (unit(rng) < p_mask) mark(t);
      }
    } else {
      // Stochastic rounding of p·T/N, then distinct starts (partial
      // Fisher-Yates), kept in ascending order.
      const double expected = p_mask * seq_len / span;
      const int count = std::min(n_starts, static_cast<int>(std::floor(expected + unit(rng))));
      std::vector<int> starts(n_starts);
      std::iota(starts.begin(), starts.end(), 0);
      for (int i = 0; i < count; ++i) {
        const int j = std::uniform_int_distribution<int>(i, n_starts - 1)(rng);
        std::swap(starts[i], starts[j]);
      }
      std::sort(starts.begin(), starts.begin() + count);
      for (int i = 0; i < count; ++i) mark(starts[i]);
    }
  }
  if (spec.start_indices.empty()) {
    mark(std::uniform_int_distribution<int>(0, n_starts - 1)(rng));
  }
  return spec;
}

std::string ToString(MaskRule rule) {
  return rule == MaskRule::kBernoulli ? "bernoulli" : "span_count";
}

MaskRule MaskRuleFromString(const std::string& s) {
  if (s == "span_count") return MaskRule::kSpanCount;
  if (s == "bernoulli") return MaskRule::kBernoulli;
  throw std::invalid_argument("unknown mask rule '" + s + "'");
}

std::vector<std::uint8_t> FlattenMasks(std::span<const MaskSpec> masks) {
  std::vector<std::uint8_t> flat;
  for (const auto& m : masks) flat.insert(flat.end(), m.masked.begin(), m.masked.end());
  return flat;
}

template <typename T>
Mat<T> ApplyMask(const Mat<T>& tokens, std::span<const MaskSpec> masks,
                 const Eigen::Ref<const Eigen::Matrix<T, 1, Eigen::Dynamic>>& mask_token) {
  if (mask_token.cols() != tokens.cols()) {
    throw std::invalid_argument("mask token width does not match tokens");
  }
  Mat<T> out = tokens;
  Eigen::Index row = 0;
  for (const auto& m : masks) {
    for (std::uint8_t flag : m.masked) {
      if (row >= out.rows()) throw std::invalid_argument("masks cover more rows than tokens");
      if (flag) out.row(row) = mask_token;
      ++row;
    }
  }
  if (row != out.rows()) throw std::invalid_argument("masks do not cover every token row");
  return out;
}

void TauSchedule::Validate() const {
  if (!(tau0 > 0.0 && tau0 <= tau_end && tau_end < 1.0)) {
    throw std::invalid_argument("tau schedule requires 0 < tau0 <= tau_end < 1");
  }
  if (n_tau <= 0) throw std::invalid_argument("n_tau must be positive");
}

double TauAt(std::int64_t step, const TauSchedule& s) {
  if (step < 0) throw std::invalid_argument("tau step must be non-negative");
  const double frac =
      std::min(static_cast<double>(step) / static_cast<double>(s.n_tau), 1.0);
  return s.tau0 + (s.tau_end - s.tau0) * frac;
}

namespace {

void CheckPrefix(const ParamLayout& teacher, const ParamLayout& student) {
  if (teacher.num_tensors() > student.num_tensors()) {
    throw std::invalid_argument("teacher has more tensors than the student");
  }
  std::string bad;
  for (int i = 0; i < teacher.num_tensors(); ++i) {
    const auto& a = teacher[i];
    const auto& b = student[i];
    if (a.name != b.name || a.rows != b.rows || a.cols != b.cols) {
      bad += " " + a.name;
    }
  }
  if (!bad.empty()) throw std::invalid_argument("teacher/student shape mismatch:" + bad);
}

}  // namespace

template <typename T>
TeacherState<T> TeacherState<T>::FromStudent(
    const ParamStore<T>& student, std::shared_ptr<const ParamLayout> encoder_layout) {
  CheckPrefix(*encoder_layout, student.layout());
  TeacherState<T> state{ParamStore<T>(std::move(encoder_layout)), 0};
  auto dst = state.weights.Flat();
  auto src = student.Flat();
  std::copy(src.begin(), src.begin() + static_cast<std::ptrdiff_t>(dst.size()), dst.begin());
  return state;
}

template <typename T>
void EmaUpdate(TeacherState<T>& teacher, const ParamStore<T>& student, double tau) {
  if (!(tau >= 0.0 && tau <= 1.0)) throw std::invalid_argument("tau must lie in [0, 1]");
  CheckPrefix(teacher.weights.layout(), student.layout());
  // Increment form: a teacher equal to the student stays bit-identical.
  const T take = static_cast<T>(1.0 - tau);
  auto dst = teacher.weights.Flat();
  auto src = student.Flat();
  if (tau == 0.0) {
    std::copy_n(src.begin(), dst.size(), dst.begin());
  } else {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += take * (src[i] - dst[i]);
  }
  ++teacher.update_count;
}

template <typename T>
double EmaResidual(const ParamStore<T>& before, const ParamStore<T>& after,
                   const ParamStore<T>& student, double tau) {
  const T take = static_cast<T>(1.0 - tau);
  auto b = before.Flat();
  auto a = after.Flat();
  auto s = student.Flat();
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const T expected = tau == 0.0 ? s[i] : b[i] + take * (s[i] - b[i]);
    total += std::abs(static_cast<double>(a[i]) - static_cast<double>(expected));
  }
  return total;
}

template <typename T>
PretrainTargets<T> BuildTargets(std::span<const Mat<T>> hiddens, int top_k, double eps) {
  const int n = static_cast<int>(hiddens.size());
  if (top_k < 1 || top_k > n) {
    throw std::invalid_argument("top_k must lie in [1, " + std::to_string(n) + "]");
  }
  PretrainTargets<T> out;
  const auto rows = hiddens.front().rows();
  const auto cols = hiddens.front().cols();
  out.targets.setZero(rows, cols);
  const T inv_cols = T(1) / static_cast<T>(cols);
  for (int l = n - top_k; l < n; ++l) {
    const Mat<T>& h = hiddens[l];
    double layer_sum = 0.0, layer_sq = 0.0;
    for (Eigen::Index i = 0; i < rows; ++i) {
      const T mean = h.row(i).sum() * inv_cols;
      const T var = (h.row(i).array() - mean).square().sum() * inv_cols;
      layer_sum += static_cast<double>(mean);
      layer_sq += static_cast<double>(var);
      const T rstd = T(1) / std::sqrt(var + static_cast<T>(eps));
      out.targets.row(i).array() += (h.row(i).array() - mean) * rstd;
    }
    out.layer_mean.push_back(layer_sum / static_cast<double>(rows));
    out.layer_variance.push_back(layer_sq / static_cast<double>(rows));
  }
  out.targets /= static_cast<T>(top_k);
  return out;
}

template <typename T>
T PretrainLoss(const Mat<T>& predictions, const Mat<T>& targets,
               std::span<const std::uint8_t> row_mask, int seq_len, Mat<T>* d_pred) {
  if (predictions.rows() != targets.rows() || predictions.cols() != targets.cols()) {
    throw std::invalid_argument("prediction/target shape mismatch");
  }
  if (static_cast<Eigen::Index>(row_mask.size()) != predictions.rows() ||
      predictions.rows() % seq_len != 0) {
    throw std::invalid_argument("row mask does not match predictions");
  }
  const Eigen::Index batch = predictions.rows() / seq_len;
  const Eigen::Index width = predictions.cols();
  if (d_pred != nullptr) d_pred->setZero(predictions.rows(), width);
  T total = T(0);
  for (Eigen::Index b = 0; b < batch; ++b) {
    Eigen::Index count = 0;
    T sum = T(0);
    for (Eigen::Index t = 0; t < seq_len; ++t) {
      const Eigen::Index r = b * seq_len + t;
      if (!row_mask[r]) continue;
      ++count;
      sum += (predictions.row(r) - targets.row(r)).squaredNorm();
    }
    if (count == 0) throw std::invalid_argument("example without masked steps");
    const T denom = static_cast<T>(count * width);
    total += sum / denom;
    if (d_pred != nullptr) {
      const T g = T(2) / (denom * static_cast<T>(batch));
      for (Eigen::Index t = 0; t < seq_len; ++t) {
        const Eigen::Index r = b * seq_len + t;
        if (row_mask[r]) d_pred->row(r) = g * (predictions.row(r) - targets.row(r));
      }
    }
  }
  return total / static_cast<T>(batch);
}

template <typename T>
TargetStats ComputeTargetStats(const Mat<T>& targets, int seq_len) {
  const Eigen::Index batch = targets.rows() / seq_len;
  const Eigen::Index width = targets.cols();
  TargetStats stats;
  if (batch < 2) {
    stats.collapsed = true;
    return stats;
  }
  Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(seq_len, width);
  Eigen::MatrixXd sq = Eigen::MatrixXd::Zero(seq_len, width);
  for (Eigen::Index b = 0; b < batch; ++b) {
    const Eigen::MatrixXd block = targets.middleRows(b * seq_len, seq_len).template cast<double>();
    mean += block;
    sq += block.cwiseAbs2();
  }
  mean /= static_cast<double>(batch);
  sq /= static_cast<double>(batch);
  const Eigen::MatrixXd var = (sq - mean.cwiseAbs2()).cwiseMax(0.0);
  stats.mean_variance = var.mean();
  stats.min_dim_variance = var.colwise().mean().minCoeff();
  stats.collapsed = stats.mean_variance < kCollapseThreshold;
  return stats;
}

#define KWSD2V_INSTANTIATE(T)                                                          \
  template Mat<T> ApplyMask<T>(const Mat<T>&, std::span<const MaskSpec>,              \
                               const Eigen::Ref<const Eigen::Matrix<T, 1, Eigen::Dynamic>>&); \
  template struct TeacherState<T>;                                                     \
  template void EmaUpdate<T>(TeacherState<T>&, const ParamStore<T>&, double);          \
  template double EmaResidual<T>(const ParamStore<T>&, const ParamStore<T>&,           \
                                 const ParamStore<T>&, double);                        \
  template PretrainTargets<T> BuildTargets<T>(std::span<const Mat<T>>, int, double);   \
  template T PretrainLoss<T>(const Mat<T>&, const Mat<T>&, std::span<const std::uint8_t>, \
                             int, Mat<T>*);                                            \
  template TargetStats ComputeTargetStats<T>(const Mat<T>&, int);

KWSD2V_INSTANTIATE(float)
KWSD2V_INSTANTIATE(double)
#undef KWSD2V_INSTANTIATE

}  // namespace kwsd2v
