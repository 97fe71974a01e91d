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

#include "libu/parameters.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace libu {
namespace {

std::size_t LayoutSize(const ParameterLayout& layout) {
  return layout.empty() ? 0 : layout.back().offset + layout.back().size;
}

}  // namespace

ParameterVector::ParameterVector(std::shared_ptr<const ParameterLayout> layout,
                                 std::vector<double> values)
    : layout_(std::move(layout)), values_(std::move(values)) {
  if (layout_ && LayoutSize(*layout_) != values_.size()) {
    throw std::invalid_argument("parameter vector: layout covers " +
                                std::to_string(LayoutSize(*layout_)) +
                                " scalars but " +
                                std::to_string(values_.size()) + " were given");
  }
}

ParameterVector::ParameterVector(std::shared_ptr<const ParameterLayout> layout)
    : layout_(std::move(layout)) {
  values_.assign(layout_ ? LayoutSize(*layout_) : 0, 0.0);
}

const ParameterEntry& ParameterVector::EntryFor(std::size_t i) const {
  if (!layout_ || i >= values_.size()) {
    throw std::out_of_range("parameter vector: index " + std::to_string(i));
  }
  auto it = std::upper_bound(
      layout_->begin(), layout_->end(), i,
      [](std::size_t idx, const ParameterEntry& e) { return idx < e.offset; });
  return *std::prev(it);
}

ParameterVector ParameterVector::ZerosLike() const {
  ParameterVector out = *this;
  std::fill(out.values_.begin(), out.values_.end(), 0.0);
  return out;
}

double L2Norm(std::span<const double> v) {
  double sum = 0.0;
  for (double x : v) sum += x * x;
  return std::sqrt(sum);
}

}  // namespace libu
