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

#ifndef LIBU_DIFF_TAPE_H_
#define LIBU_DIFF_TAPE_H_

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "libu/diff/tensor.h"

namespace libu::diff {

class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; valid while the
// tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Tensor& value() const;
  bool requires_grad() const;

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

// Records primitive operations in execution order. Nodes only ever refer
// to earlier nodes, so the record is topologically sorted by construction
// and a single reverse sweep computes all adjoints.
//
// A tape is not thread safe; independent passes use independent tapes.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, int self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaf that never receives a gradient. The tape owns the copy.
  Var Constant(Tensor value);
  // Leaf referring to caller-owned storage; `value` must outlive the tape.
  Var Borrowed(const Tensor& value);
  // Differentiable leaf. Its gradient is returned at index `slot` by
  // Backward(). `value` must outlive the tape.
  Var Parameter(const Tensor& value, int slot);

  // Records an operation result. `backward` is dropped when no input
  // requires a gradient.
  Var Record(Tensor value, std::vector<int> inputs, BackwardFn backward);

  // Reverse sweep from a one-element `loss`. Returns one gradient per
  // parameter slot (0 .. max slot). Bound parameters the loss does not
  // depend on get zeros; slot numbers never bound stay empty.
  std::vector<Tensor> Backward(Var loss);

  const Tensor& value(int id) const;
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }

  // Adjoint buffer for node `id`, allocated as zeros on first use. Only
  // meaningful inside a backward function.
  Tensor& grad(int id);
  const Tensor& grad_of_output(int id) const { return grads_[id]; }

  std::size_t size() const { return nodes_.size(); }
  // Operation nodes whose backward ran in the most recent sweep.
  std::size_t last_backward_visits() const { return last_visits_; }

 private:
  struct Node {
    Tensor owned;
    const Tensor* borrowed = nullptr;
    bool requires_grad = false;
    int slot = -1;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
  int max_slot_ = -1;
  std::size_t last_visits_ = 0;
};

// Primitive operations. All shape checks throw std::invalid_argument naming
// both operand shapes.

// [m x k] * [k x n]
Var MatMul(Var a, Var b);
// [m x k] * [n x k]^T
Var MatMulTransposed(Var a, Var b);
Var Add(Var a, Var b);
// Adds a length-n row vector to every row of an [m x n] matrix.
Var AddBias(Var a, Var bias);
Var Scale(Var a, double factor);
// Exact GELU, x * Phi(x).
Var Gelu(Var a);
Var SoftmaxRows(Var a);
// Row-wise softmax where row t only sees columns 0..t. Masked entries are
// exactly zero.
Var CausalSoftmaxRows(Var a);
Var LayerNormRows(Var a, Var gain, Var bias, double epsilon = 1e-5);
Var EmbeddingLookup(Var table, std::span<const int> ids);
Var SliceColumns(Var a, std::size_t begin, std::size_t count);
Var ConcatColumns(std::span<const Var> parts);
// Squares every element and sums: used for toy objectives in tests.
Var SumOfSquares(Var a);

// Mean over positions with mask[t] != 0 of -log softmax(logits[t])[target].
Var CrossEntropyLoss(Var logits, std::span<const int> targets,
                     std::span<const unsigned char> mask);

// Mean over masked rows of KL(softmax(logits) || softmax(reference)).
// `reference` is a constant.
Var KlToReference(Var logits, const Tensor& reference,
                  std::span<const unsigned char> mask);

}  // namespace libu::diff

#endif  // LIBU_DIFF_TAPE_H_
