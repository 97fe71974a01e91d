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

#ifndef LIBU_BASELINES_H_
#define LIBU_BASELINES_H_

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "libu/model.h"
#include "libu/unlearn.h"

namespace libu {

enum class BaselineAlgorithm {
  kGradientAscent,
  kGradientDifference,
  kKlMinimization,
};

std::string AlgorithmTag(BaselineAlgorithm algorithm);
BaselineAlgorithm ParseBaselineAlgorithm(std::string_view tag);

struct BaselineConfig {
  BaselineAlgorithm algorithm = BaselineAlgorithm::kGradientAscent;
  std::size_t epochs = 4;
  double learning_rate = 2e-4;
  std::size_t batch_size = 4;
  std::uint64_t seed = 0;
  // Weight on the KL-to-reference retain term (KL minimization).
  double kl_weight = 1.0;
  // Weight on the forget term (gradient difference).
  double forget_weight = 1.0;
};

// Plain SGD on the trainable parameters, one step per forget batch:
//   gradient ascent:     minimize -L_forget
//   gradient difference: minimize L_retain - forget_weight * L_forget, with
//                        retain batches paired to forget batches in order
//   KL minimization:     minimize -L_forget + kl_weight * KL(model || ref)
//                        over the paired retain batch
void GradientAscentUnlearn(Model& model, const PackedSplits& data,
                           const BaselineConfig& config, RunLog* log = nullptr,
                           const Deadline& deadline = {});
void GradientDifferenceUnlearn(Model& model, const PackedSplits& data,
                               const BaselineConfig& config,
                               RunLog* log = nullptr,
                               const Deadline& deadline = {});
void KlMinimizationUnlearn(Model& model, const Model& reference,
                           const PackedSplits& data,
                           const BaselineConfig& config, RunLog* log = nullptr,
                           const Deadline& deadline = {});

// Dispatches on config.algorithm. KL minimization uses a frozen copy of the
// incoming model as its reference.
void RunBaseline(Model& model, const PackedSplits& data,
                 const BaselineConfig& config, RunLog* log = nullptr,
                 const Deadline& deadline = {});

// Mean KL(model || reference) over the masked next-token positions of
// `examples`.
double MeanKlToReference(const Model& model, const Model& reference,
                         std::span<const PackedExample> examples);

// Largest total-variation distance between the two models' next-token
// distributions over the masked positions of `examples`.
double MaxTotalVariation(const Model& model, const Model& reference,
                         std::span<const PackedExample> examples);

}  // namespace libu

#endif  // LIBU_BASELINES_H_
