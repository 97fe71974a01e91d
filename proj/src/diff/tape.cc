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

#include "libu/diff/tape.h"

#include <stdexcept>
#include <utility>

namespace libu::diff {

const Tensor& Var::value() const {
  if (tape_ == nullptr) throw std::logic_error("var: not bound to a tape");
  return tape_->value(id_);
}

bool Var::requires_grad() const {
  return tape_ != nullptr && tape_->requires_grad(id_);
}

Var Tape::Constant(Tensor value) {
  Node node;
  node.owned = std::move(value);
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::Borrowed(const Tensor& value) {
  Node node;
  node.borrowed = &value;
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::Parameter(const Tensor& value, int slot) {
  if (slot < 0) throw std::invalid_argument("tape: negative parameter slot");
  Node node;
  node.borrowed = &value;
  node.requires_grad = true;
  node.slot = slot;
  nodes_.push_back(std::move(node));
  if (slot > max_slot_) max_slot_ = slot;
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::Record(Tensor value, std::vector<int> inputs, BackwardFn backward) {
  Node node;
  node.owned = std::move(value);
  for (int input : inputs) {
    if (input < 0 || input >= static_cast<int>(nodes_.size())) {
      throw std::logic_error("tape: operation input not on this tape");
    }
    node.requires_grad = node.requires_grad || nodes_[input].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

const Tensor& Tape::value(int id) const {
  const Node& node = nodes_.at(id);
  return node.borrowed != nullptr ? *node.borrowed : node.owned;
}

Tensor& Tape::grad(int id) {
  Tensor& g = grads_[id];
  if (g.empty()) g = Tensor(value(id).shape());
  return g;
}

std::vector<Tensor> Tape::Backward(Var loss) {
  if (nodes_.empty()) throw std::invalid_argument("backward: empty tape");
  if (loss.tape() != this) {
    throw std::invalid_argument("backward: loss was not recorded on this tape");
  }
  if (value(loss.id()).size() != 1) {
    throw std::invalid_argument("backward: loss must be a scalar, got " +
                                value(loss.id()).ShapeString());
  }

  grads_.assign(nodes_.size(), Tensor());
  last_visits_ = 0;
  std::vector<Tensor> result(static_cast<std::size_t>(max_slot_ + 1));
  if (requires_grad(loss.id())) {
    grad(loss.id())[0] = 1.0;
    for (int id = loss.id(); id >= 0; --id) {
      Node& node = nodes_[id];
      if (!node.requires_grad || grads_[id].empty()) continue;
      if (node.backward) {
        node.backward(*this, id);
        ++last_visits_;
      }
    }
  }
  for (std::size_t id = 0; id < nodes_.size(); ++id) {
    const Node& node = nodes_[id];
    if (node.slot < 0) continue;
    Tensor& out = result[node.slot];
    if (out.empty()) out = Tensor(node.borrowed->shape());
    if (grads_[id].empty()) continue;
    // A parameter bound twice accumulates both contributions.
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += grads_[id][i];
  }
  grads_.clear();
  return result;
}

}  // namespace libu::diff
