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

#ifndef LIBU_UNLEARN_H_
#define LIBU_UNLEARN_H_

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "libu/data.h"
#include "libu/model.h"
#include "libu/parameters.h"

namespace libu {

using Batch = std::vector<const PackedExample*>;

// Shuffled batches of `examples` keyed by (seed, epoch).
std::vector<Batch> MakeBatches(std::span<const PackedExample> examples,
                               std::size_t batch_size, std::uint64_t seed,
                               std::uint64_t epoch);

// ---------------------------------------------------------------------------
// Run logging and the wall-clock budget.

struct RunLogRecord {
  std::string phase;
  std::size_t epoch = 0;
  double retain_loss = 0.0;
  double forget_loss = 0.0;
  double update_norm = 0.0;
  double wall_ms = 0.0;
};

struct RunLog {
  std::vector<RunLogRecord> records;
  std::vector<std::string> warnings;
  bool aborted = false;
};

// One JSON object per epoch record.
void WriteRunLog(const std::filesystem::path& path, const RunLog& log);
std::vector<RunLogRecord> ReadRunLog(const std::filesystem::path& path);

class BudgetExceeded : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Wall-clock limit checked between steps. A default-constructed deadline
// never expires.
class Deadline {
 public:
  Deadline() = default;
  explicit Deadline(std::chrono::duration<double> budget)
      : end_(std::chrono::steady_clock::now() +
             std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                 budget)) {}

  bool Expired() const {
    return end_ && std::chrono::steady_clock::now() >= *end_;
  }
  // Marks `log` aborted and throws BudgetExceeded once expired.
  void Check(RunLog* log, std::string_view where) const;

 private:
  std::optional<std::chrono::steady_clock::time_point> end_;
};

// ---------------------------------------------------------------------------
// Memorization: first-order fine-tuning of the base weights.

struct MemorizeOptions {
  std::size_t epochs = 400;
  double learning_rate = 3e-3;
  std::size_t batch_size = 8;
  std::uint64_t seed = 0;
  // Stop once teacher-forced exact match reaches this on every split.
  double target_recall = 0.99;
};

struct MemorizeReport {
  std::size_t epochs_run = 0;
  double retain_recall = 0.0;
  double forget_recall = 0.0;
  // Recall on the optional background set; 1 when none was given.
  double knowledge_recall = 1.0;
  bool reached_target = false;
};

// Trains every base weight with Adam on retain + forget (+ an optional
// background knowledge set) until all reach the target recall or epochs run
// out. Falling short is logged as a warning, not raised.
MemorizeReport Memorize(Model& model, std::span<const PackedExample> retain,
                        std::span<const PackedExample> forget,
                        std::span<const PackedExample> knowledge,
                        const MemorizeOptions& options, RunLog* log = nullptr,
                        const Deadline& deadline = {});

// Fraction of examples whose greedy completion is exact (teacher forced).
double TeacherForcedRecall(const Model& model,
                           std::span<const PackedExample> examples);

// ---------------------------------------------------------------------------
// Phase 1: influence-based update from a diagonal Fisher approximation.

// Per-parameter mean of squared retain gradients; every entry >= 0.
struct FisherDiagonal {
  ParameterVector values;
};

// Mean over batches of the squared per-batch gradient. Leaves the model
// untouched.
FisherDiagonal EstimateFisherDiagonal(const Model& model,
                                      std::span<const Batch> retain_batches);

// w_i = 1 / (F_i + damping). Throws unless damping > 0.
ParameterVector InfluenceWeights(const FisherDiagonal& fisher, double damping);

// Arithmetic mean of per-batch gradients of the forget loss.
ParameterVector MeanForgetGradient(const Model& model,
                                   std::span<const Batch> forget_batches);

// theta_i - eta * w_i * g_i, elementwise.
ParameterVector InfluenceUpdate(const ParameterVector& theta,
                                const ParameterVector& weights,
                                const ParameterVector& gradient,
                                double learning_rate);

// ---------------------------------------------------------------------------
// Gradient accumulation.

struct AccumulatedGradient {
  ParameterVector gradient;
  double mean_loss = 0.0;
  // Micro-batches actually averaged; below k for a short final group.
  std::size_t effective_k = 0;
};

// Mean gradient of the first min(k, size) micro-batches, scaled by `sign`.
// No parameter is touched.
AccumulatedGradient AccumulateGradients(const Model& model,
                                        std::span<const Batch> micro_batches,
                                        std::size_t k, double sign = 1.0);

// Splits micro-batches into consecutive groups of k; the last may be short.
std::vector<std::span<const Batch>> AccumulationGroups(
    std::span<const Batch> micro_batches, std::size_t k);

// ---------------------------------------------------------------------------
// Phase 2: Sophia with a rho-gated, EMA-maintained Hessian diagonal.

struct SophiaOptions {
  double rho = 0.06;
  double gamma = 1.2;
  double epsilon = 1e-8;
  double clip = 1.0;
  double beta = 0.99;
  std::uint64_t seed = 0;
};

class SophiaState {
 public:
  SophiaState(std::size_t size, const SophiaOptions& options);

  // One Bernoulli(rho) draw per call; on success h <- beta h + (1-beta) g^2.
  // The step counter advances either way. Returns whether h was refreshed.
  bool UpdateHessian(std::span<const double> gradient);

  // Refreshes h, then theta_i -= eta * clamp(g_i / max(gamma h_i, eps),
  // -clip, clip).
  void Step(ParameterVector& theta, const ParameterVector& gradient,
            double learning_rate);

  const std::vector<double>& hessian() const { return h_; }
  std::vector<double>& mutable_hessian() { return h_; }
  std::size_t step() const { return step_; }
  std::size_t hessian_updates() const { return hessian_updates_; }
  const SophiaOptions& options() const { return options_; }

 private:
  SophiaOptions options_;
  std::vector<double> h_;
  std::size_t step_ = 0;
  std::size_t hessian_updates_ = 0;
  std::mt19937_64 rng_;
};

// Clipped Sophia direction for one coordinate, before the learning rate.
double SophiaDirection(double gradient, double hessian, double gamma,
                       double epsilon, double clip);

// ---------------------------------------------------------------------------
// Configuration and the two-phase driver.

enum class InfluenceSchedule {
  // One influence update per accumulation group.
  kPerAccumulationGroup,
  // One update per epoch from the epoch-mean forget gradient.
  kPerEpoch,
};

struct UnlearnConfig {
  std::size_t num_epochs = 4;
  double learning_rate = 2e-5;
  std::size_t batch_size = 4;
  std::size_t lora_rank = 16;
  std::size_t accumulation_steps = 8;
  std::size_t max_length = 1024;
  double damping_factor = 1e-3;
  double sophia_rho = 0.06;
  double sophia_gamma = 1.2;
  double sophia_clip = 1.0;
  double sophia_epsilon = 1e-8;
  double sophia_beta = 0.99;
  // Multiplier on learning_rate. Presets store their learning rates
  // unscaled.
  double eta_scale = 400.0;
  double phase2_retain_weight = 1.0;
  std::optional<std::size_t> phase1_epochs;
  std::optional<std::size_t> phase2_epochs;
  bool refresh_fisher_each_epoch = false;
  InfluenceSchedule influence_schedule =
      InfluenceSchedule::kPerAccumulationGroup;
  std::uint64_t seed = 0;

  double EffectiveLearningRate() const { return learning_rate * eta_scale; }
  std::size_t Phase1Epochs() const {
    return phase1_epochs.value_or(num_epochs);
  }
  std::size_t Phase2Epochs() const {
    return phase2_epochs.value_or(num_epochs);
  }

  friend bool operator==(const UnlearnConfig&, const UnlearnConfig&) = default;
};

// Throws std::invalid_argument naming the first non-positive field.
void ValidateUnlearnConfig(const UnlearnConfig& config);

// Named hyperparameter presets "setup1", "setup2", "setup3".
UnlearnConfig PresetConfig(std::string_view name);
std::vector<std::string> PresetNames();

// Packed splits an unlearning run consumes.
struct PackedSplits {
  std::vector<PackedExample> retain;
  std::vector<PackedExample> forget;
};

PackedSplits PackSplits(const SplitDataset& dataset, const Vocabulary& vocab,
                        std::size_t max_length);

// Returns a copy of `model` whose adapters are freshly initialized at `rank`.
// Only allowed while the current adapters contribute nothing.
Model WithAdapterRank(const Model& model, std::size_t rank);

// Phase 1 then Phase 2 on the trainable parameters. An empty forget split is
// a logged no-op.
void RunLibu(Model& model, const PackedSplits& data,
             const UnlearnConfig& config, RunLog* log = nullptr,
             const Deadline& deadline = {});

}  // namespace libu

#endif  // LIBU_UNLEARN_H_
