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

#include "libu/baselines.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

namespace libu {
namespace {

using diff::Var;

struct Terms {
  double forget = 0.0;  // coefficient on L_forget
  double retain = 0.0;  // coefficient on L_retain
  double kl = 0.0;      // coefficient on KL(model || reference) over retain
};

// Per-example masked next-token positions, aligned with logits rows.
std::vector<unsigned char> NextTokenMask(const PackedExample& ex) {
  std::vector<unsigned char> mask(ex.attention_length, 0);
  for (std::size_t p = 0; p + 1 < ex.attention_length; ++p) {
    mask[p] = ex.loss_mask[p + 1];
  }
  return mask;
}

Var MeanLoss(BoundModel& bound, const Batch& batch) {
  Var total;
  for (const PackedExample* ex : batch) {
    Var loss = bound.SequenceLoss(*ex);
    total = total.valid() ? diff::Add(total, loss) : loss;
  }
  return diff::Scale(total, 1.0 / static_cast<double>(batch.size()));
}

Var MeanKl(BoundModel& bound, const Model& reference, const Batch& batch) {
  Var total;
  for (const PackedExample* ex : batch) {
    std::span<const int> tokens(ex->token_ids.data(), ex->attention_length);
    const diff::Tensor ref = reference.Logits(tokens);
    Var kl = diff::KlToReference(bound.Logits(tokens), ref, NextTokenMask(*ex));
    total = total.valid() ? diff::Add(total, kl) : kl;
  }
  return diff::Scale(total, 1.0 / static_cast<double>(batch.size()));
}

ParameterVector ObjectiveGradient(const Model& model, const Batch* forget,
                                  const Batch* retain, const Terms& terms,
                                  const Model* reference) {
  diff::Tape tape;
  BoundModel bound(model, tape, ParameterScope::kTrainable);
  Var objective;
  auto add = [&](Var term, double coef) {
    Var scaled = diff::Scale(term, coef);
    objective = objective.valid() ? diff::Add(objective, scaled) : scaled;
  };
  if (forget != nullptr && terms.forget != 0.0) {
    add(MeanLoss(bound, *forget), terms.forget);
  }
  if (retain != nullptr && terms.retain != 0.0) {
    add(MeanLoss(bound, *retain), terms.retain);
  }
  if (retain != nullptr && reference != nullptr && terms.kl != 0.0) {
    add(MeanKl(bound, *reference, *retain), terms.kl);
  }
  if (!objective.valid()) {
    return ParameterVector(model.Layout(ParameterScope::kTrainable));
  }
  return model.FlattenGradient(ParameterScope::kTrainable,
                               tape.Backward(objective));
}

void ValidateBaseline(const BaselineConfig& c) {
  if (!(c.learning_rate >= 0.0) || !std::isfinite(c.learning_rate)) {
    throw std::invalid_argument("baseline config: learning_rate must be >= 0");
  }
  if (c.batch_size == 0) {
    throw std::invalid_argument("baseline config: batch_size must be positive");
  }
  if (!(c.kl_weight >= 0.0)) {
    throw std::invalid_argument("baseline config: kl_weight must be >= 0");
  }
}

// Shared SGD loop: one step per forget batch, retain batches paired by
// position (cycled when the retain split is shorter).
void SgdLoop(Model& model, const PackedSplits& data, const BaselineConfig& c,
             const Terms& terms, const Model* reference, RunLog* log,
             const Deadline& deadline) {
  ValidateBaseline(c);
  const std::string phase = AlgorithmTag(c.algorithm);
  if (data.forget.empty()) {
    if (log != nullptr) log->warnings.push_back(phase + ": empty forget split");
    return;
  }
  const bool needs_retain = terms.retain != 0.0 || terms.kl != 0.0;
  const std::uint64_t retain_seed = c.seed ^ 0x5bd1e995ULL;
  constexpr ParameterScope kScope = ParameterScope::kTrainable;

  for (std::size_t epoch = 0; epoch < c.epochs; ++epoch) {
    deadline.Check(log, phase);
    const auto start = std::chrono::steady_clock::now();
    const ParameterVector before = model.Parameters(kScope);
    const auto forget_batches =
        MakeBatches(data.forget, c.batch_size, c.seed, epoch);
    std::vector<Batch> retain_batches;
    if (needs_retain) {
      retain_batches =
          MakeBatches(data.retain, c.batch_size, retain_seed, epoch);
    }
    for (std::size_t b = 0; b < forget_batches.size(); ++b) {
      deadline.Check(log, phase);
      const Batch* retain = retain_batches.empty()
                                ? nullptr
                                : &retain_batches[b % retain_batches.size()];
      const ParameterVector g = ObjectiveGradient(model, &forget_batches[b],
                                                  retain, terms, reference);
      ParameterVector theta = model.Parameters(kScope);
      for (std::size_t i = 0; i < theta.size(); ++i) {
        theta[i] -= c.learning_rate * g[i];
      }
      model.SetParameters(kScope, theta);
    }
    if (log != nullptr) {
      const ParameterVector after = model.Parameters(kScope);
      double norm = 0.0;
      for (std::size_t i = 0; i < after.size(); ++i) {
        norm += (after[i] - before[i]) * (after[i] - before[i]);
      }
      log->records.push_back(
          {phase, epoch,
           data.retain.empty() ? 0.0 : MeanSequenceLoss(model, data.retain),
           MeanSequenceLoss(model, data.forget), std::sqrt(norm),
           std::chrono::duration<double, std::milli>(
               std::chrono::steady_clock::now() - start)
               .count()});
    }
  }
}

}  // namespace

std::string AlgorithmTag(BaselineAlgorithm algorithm) {
  switch (algorithm) {
    case BaselineAlgorithm::kGradientAscent:
      return "ga";
    case BaselineAlgorithm::kGradientDifference:
      return "gd";
    case BaselineAlgorithm::kKlMinimization:
      return "kl";
  }
  return "unknown";
}

BaselineAlgorithm ParseBaselineAlgorithm(std::string_view tag) {
  if (tag == "ga" || tag == "gradient_ascent") {
    return BaselineAlgorithm::kGradientAscent;
  }
  if (tag == "gd" || tag == "gradient_difference") {
    return BaselineAlgorithm::kGradientDifference;
  }
  if (tag == "kl" || tag == "kl_minimization") {
    return BaselineAlgorithm::kKlMinimization;
  }
  throw std::invalid_argument("unknown baseline algorithm '" +
                              std::string(tag) + "' (valid: ga, gd, kl)");
}

void GradientAscentUnlearn(Model& model, const PackedSplits& data,
                           const BaselineConfig& config, RunLog* log,
                           const Deadline& deadline) {
  BaselineConfig c = config;
  c.algorithm = BaselineAlgorithm::kGradientAscent;
  SgdLoop(model, data, c, Terms{-1.0, 0.0, 0.0}, nullptr, log, deadline);
}

void GradientDifferenceUnlearn(Model& model, const PackedSplits& data,
                               const BaselineConfig& config, RunLog* log,
                               const Deadline& deadline) {
  if (data.retain.empty()) {
    throw std::invalid_argument("gradient_difference: retain split is empty");
  }
  BaselineConfig c = config;
  c.algorithm = BaselineAlgorithm::kGradientDifference;
  SgdLoop(model, data, c, Terms{-config.forget_weight, 1.0, 0.0}, nullptr, log,
          deadline);
}

void KlMinimizationUnlearn(Model& model, const Model& reference,
                           const PackedSplits& data,
                           const BaselineConfig& config, RunLog* log,
                           const Deadline& deadline) {
  const ModelConfig& a = model.config();
  const ModelConfig& b = reference.config();
  if (a.vocab_size != b.vocab_size || a.d_model != b.d_model ||
      a.n_layers != b.n_layers || a.n_heads != b.n_heads ||
      a.max_length != b.max_length) {
    throw std::invalid_argument(
        "kl_minimization: reference model shape does not match the model");
  }
  if (config.kl_weight > 0.0 && data.retain.empty()) {
    throw std::invalid_argument("kl_minimization: retain split is empty");
  }
  BaselineConfig c = config;
  c.algorithm = BaselineAlgorithm::kKlMinimization;
  SgdLoop(model, data, c, Terms{-1.0, 0.0, config.kl_weight}, &reference, log,
          deadline);
}

void RunBaseline(Model& model, const PackedSplits& data,
                 const BaselineConfig& config, RunLog* log,
                 const Deadline& deadline) {
  switch (config.algorithm) {
    case BaselineAlgorithm::kGradientAscent:
      GradientAscentUnlearn(model, data, config, log, deadline);
      return;
    case BaselineAlgorithm::kGradientDifference:
      GradientDifferenceUnlearn(model, data, config, log, deadline);
      return;
    case BaselineAlgorithm::kKlMinimization: {
      const Model reference = model;
      KlMinimizationUnlearn(model, reference, data, config, log, deadline);
      return;
    }
  }
}

double MeanKlToReference(const Model& model, const Model& reference,
                         std::span<const PackedExample> examples) {
  if (examples.empty()) throw std::invalid_argument("mean_kl: no examples");
  double total = 0.0;
  for (const auto& ex : examples) {
    std::span<const int> tokens(ex.token_ids.data(), ex.attention_length);
    diff::Tape tape;
    Var logits = tape.Constant(model.Logits(tokens));
    total +=
        diff::KlToReference(logits, reference.Logits(tokens), NextTokenMask(ex))
            .value()
            .item();
  }
  return total / static_cast<double>(examples.size());
}

double MaxTotalVariation(const Model& model, const Model& reference,
                         std::span<const PackedExample> examples) {
  double worst = 0.0;
  for (const auto& ex : examples) {
    std::span<const int> tokens(ex.token_ids.data(), ex.attention_length);
    const diff::Tensor a = model.Logits(tokens);
    const diff::Tensor b = reference.Logits(tokens);
    const auto mask = NextTokenMask(ex);
    const std::size_t v = a.cols();
    std::vector<double> pa(v), pb(v);
    for (std::size_t r = 0; r < a.rows(); ++r) {
      if (!mask[r]) continue;
      for (auto [src, dst] : {std::pair{&a, &pa}, std::pair{&b, &pb}}) {
        double mx = (*src)(r, 0);
        for (std::size_t j = 1; j < v; ++j) mx = std::max(mx, (*src)(r, j));
        double sum = 0.0;
        for (std::size_t j = 0; j < v; ++j) {
          (*dst)[j] = std::exp((*src)(r, j) - mx);
          sum += (*dst)[j];
        }
        for (double& x : *dst) x /= sum;
      }
      double tv = 0.0;
      for (std::size_t j = 0; j < v; ++j) tv += std::abs(pa[j] - pb[j]);
      worst = std::max(worst, 0.5 * tv);
    }
  }
  return worst;
}

}  // namespace libu
