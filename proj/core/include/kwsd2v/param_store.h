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

#ifndef KWSD2V_PARAM_STORE_H_
#define KWSD2V_PARAM_STORE_H_

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

namespace kwsd2v {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<Mat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const Mat<T>>;

struct TensorInfo {
  std::string name;
  int rows = 0;
  int cols = 0;
  std::size_t offset = 0;

  std::size_t size() const { return static_cast<std::size_t>(rows) * cols; }
};

// Ordered table of named 2-D tensors packed into one flat buffer. Each
// tensor starts on a kAlignElements boundary so that vectorized kernels see
// the same alignment in every run; the padding stays zero.
class ParamLayout {
 public:
  // Returns the index of the new tensor. Throws on duplicate names.
  int Add(const std::string& name, int rows, int cols);

  int Find(const std::string& name) const;  // -1 when absent
  int Require(const std::string& name) const;
  bool Contains(const std::string& name) const { return Find(name) >= 0; }

  const TensorInfo& operator[](int i) const { return tensors_[i]; }
  const std::vector<TensorInfo>& tensors() const { return tensors_; }
  int num_tensors() const { return static_cast<int>(tensors_.size()); }
  std::size_t total_size() const { return total_; }
  // Scalars actually owned by tensors (total_size minus padding).
  std::size_t num_scalars() const;

  static constexpr std::size_t kAlignElements = 16;

  // Layout made of the first `n` tensors; offsets are unchanged.
  ParamLayout Prefix(int n) const;

  bool operator==(const ParamLayout& other) const;

 private:
  std::vector<TensorInfo> tensors_;
  std::unordered_map<std::string, int> index_;
  std::size_t total_ = 0;
};

template <typename T>
class ParamStore {
 public:
  ParamStore() = default;
  explicit ParamStore(std::shared_ptr<const ParamLayout> layout)
      : layout_(std::move(layout)), data_(layout_->total_size(), T(0)) {}

  const ParamLayout& layout() const { return *layout_; }
  std::shared_ptr<const ParamLayout> shared_layout() const { return layout_; }

  MatMap<T> Tensor(int i) {
    const TensorInfo& t = (*layout_)[i];
    return MatMap<T>(data_.data() + t.offset, t.rows, t.cols);
  }
  ConstMatMap<T> Tensor(int i) const {
    const TensorInfo& t = (*layout_)[i];
    return ConstMatMap<T>(data_.data() + t.offset, t.rows, t.cols);
  }
  MatMap<T> Tensor(const std::string& name) {
    return Tensor(layout_->Require(name));
  }
  ConstMatMap<T> Tensor(const std::string& name) const {
    return Tensor(layout_->Require(name));
  }
  // Row vector view of a 1×n tensor.
  auto Row(int i) { return Tensor(i).row(0); }
  auto Row(int i) const { return Tensor(i).row(0); }

  std::span<T> Flat() { return data_; }
  std::span<const T> Flat() const { return data_; }
  std::span<T> Flat(int i) {
    const TensorInfo& t = (*layout_)[i];
    return std::span<T>(data_.data() + t.offset, t.size());
  }
  std::span<const T> Flat(int i) const {
    const TensorInfo& t = (*layout_)[i];
    return std::span<const T>(data_.data() + t.offset, t.size());
  }

  void SetZero() { std::fill(data_.begin(), data_.end(), T(0)); }

  template <typename U>
  ParamStore<U> Cast() const {
    ParamStore<U> out(layout_);
    for (std::size_t i = 0; i < data_.size(); ++i) {
      out.Flat()[i] = static_cast<U>(data_[i]);
    }
    return out;
  }

 private:
  std::shared_ptr<const ParamLayout> layout_;
  std::vector<T, Eigen::aligned_allocator<T>> data_;
};

}  // namespace kwsd2v

#endif  // KWSD2V_PARAM_STORE_H_
