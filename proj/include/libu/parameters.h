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

#ifndef LIBU_PARAMETERS_H_
#define LIBU_PARAMETERS_H_

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace libu {

// Where one named tensor lives inside a flat parameter vector.
struct ParameterEntry {
  std::string name;
  std::vector<std::size_t> shape;
  std::size_t offset = 0;
  std::size_t size = 0;
};

using ParameterLayout = std::vector<ParameterEntry>;

// Flat array of scalars with an index map back to the named tensors it was
// gathered from. Gradients, Fisher diagonals and update directions share
// this representation.
class ParameterVector {
 public:
  ParameterVector() = default;
  ParameterVector(std::shared_ptr<const ParameterLayout> layout,
                  std::vector<double> values);
  // Zero vector over `layout`.
  explicit ParameterVector(std::shared_ptr<const ParameterLayout> layout);

  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  std::vector<double>& raw() { return values_; }

  const std::shared_ptr<const ParameterLayout>& layout() const {
    return layout_;
  }
  // Entry owning flat index `i`.
  const ParameterEntry& EntryFor(std::size_t i) const;

  ParameterVector ZerosLike() const;

  friend bool operator==(const ParameterVector& a, const ParameterVector& b) {
    return a.values_ == b.values_;
  }

 private:
  std::shared_ptr<const ParameterLayout> layout_;
  std::vector<double> values_;
};

double L2Norm(std::span<const double> v);

}  // namespace libu

#endif  // LIBU_PARAMETERS_H_
