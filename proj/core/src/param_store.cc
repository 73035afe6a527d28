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

#include "kwsd2v/param_store.h"

#include <stdexcept>

namespace kwsd2v {

int ParamLayout::Add(const std::string& name, int rows, int cols) {
  if (rows <= 0 || cols <= 0) {
    throw std::invalid_argument("tensor '" + name + "' has an empty shape");
  }
  if (index_.count(name) != 0) {
    throw std::invalid_argument("duplicate tensor name '" + name + "'");
  }
  const int id = static_cast<int>(tensors_.size());
  total_ = (total_ + kAlignElements - 1) / kAlignElements * kAlignElements;
  tensors_.push_back({name, rows, cols, total_});
  index_.emplace(name, id);
  total_ += tensors_.back().size();
  return id;
}

std::size_t ParamLayout::num_scalars() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.size();
  return n;
}

int ParamLayout::Find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? -1 : it->second;
}

int ParamLayout::Require(const std::string& name) const {
  const int id = Find(name);
  if (id < 0) throw std::out_of_range("no tensor named '" + name + "'");
  return id;
}

ParamLayout ParamLayout::Prefix(int n) const {
  if (n < 0 || n > num_tensors()) {
    throw std::out_of_range("layout prefix out of range");
  }
  ParamLayout out;
  for (int i = 0; i < n; ++i) {
    out.Add(tensors_[i].name, tensors_[i].rows, tensors_[i].cols);
  }
  return out;
}

bool ParamLayout::operator==(const ParamLayout& other) const {
  if (tensors_.size() != other.tensors_.size()) return false;
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    const auto& a = tensors_[i];
    const auto& b = other.tensors_[i];
    if (a.name != b.name || a.rows != b.rows || a.cols != b.cols) return false;
  }
  return true;
}

}  // namespace kwsd2v
