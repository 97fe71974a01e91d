// Copyright 2026 The libu-lab Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "libu/diff/tensor.h"

#include <cmath>
#include <functional>
#include <numeric>
#include <stdexcept>

namespace libu::diff {
namespace {

std::size_t Product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

void ValidateShape(const std::vector<std::size_t>& shape) {
  if (shape.empty()) throw std::invalid_argument("tensor: empty shape");
  for (std::size_t d : shape) {
    if (d == 0) {
      throw std::invalid_argument("tensor: non-positive dimension in " +
                                  ShapeString(shape));
    }
  }
}

}  // namespace

std::string ShapeString(const std::vector<std::size_t>& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)) {
  ValidateShape(shape_);
  values_.assign(Product(shape_), fill);
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  ValidateShape(shape_);
  if (Product(shape_) != values_.size()) {
    throw std::invalid_argument("tensor: shape " + diff::ShapeString(shape_) +
                                " does not hold " +
                                std::to_string(values_.size()) + " values");
  }
}

Tensor Tensor::Matrix(std::size_t rows, std::size_t cols,
                      std::vector<double> values) {
  return Tensor({rows, cols}, std::move(values));
}

Tensor Tensor::Scalar(double value) { return Tensor({1}, {value}); }

std::size_t Tensor::rows() const {
  if (shape_.empty()) return 0;
  return shape_.size() == 1 ? 1 : size() / shape_.back();
}

std::size_t Tensor::cols() const { return shape_.empty() ? 0 : shape_.back(); }

double Tensor::item() const {
  if (values_.size() != 1) {
    throw std::invalid_argument("tensor: item() on shape " + ShapeString());
  }
  return values_[0];
}

bool Tensor::AllFinite() const {
  for (double v : values_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::string Tensor::ShapeString() const { return diff::ShapeString(shape_); }

}  // namespace libu::diff
