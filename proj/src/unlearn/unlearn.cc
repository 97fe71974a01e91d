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

#include "libu/unlearn.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace libu {
namespace {

using Clock = std::chrono::steady_clock;

double MillisecondsSince(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start)
      .count();
}

void RequireSameSize(std::size_t a, std::size_t b, const char* op) {
  if (a != b) {
    throw std::invalid_argument(std::string(op) + ": length mismatch " +
                                std::to_string(a) + " vs " + std::to_string(b));
  }
}

void RequirePositive(double v, const char* field) {
  if (!(v > 0.0) || !std::isfinite(v)) {
    throw std::invalid_argument(std::string("unlearn config: ") + field +
                                " must be positive");
  }
}

// Adds `g` into `acc` and returns acc.
void AddInto(ParameterVector& acc, const ParameterVector& g) {
  RequireSameSize(acc.size(), g.size(), "accumulate");
  for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i];
}

double MeanOrZero(std::span<const PackedExample> examples, const Model& model) {
  return examples.empty() ? 0.0 : MeanSequenceLoss(model, examples);
}

}  // namespace

std::vector<Batch> MakeBatches(std::span<const PackedExample> examples,
                               std::size_t batch_size, std::uint64_t seed,
                               std::uint64_t epoch) {
  std::vector<Batch> out;
  for (const auto& idx : Batches(examples.size(), batch_size, seed, epoch)) {
    Batch b;
    for (std::size_t i : idx) b.push_back(&examples[i]);
    out.push_back(std::move(b));
  }
  return out;
}

void WriteRunLog(const std::filesystem::path& path, const RunLog& log) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("run log: cannot write " + path.string());
  for (const auto& r : log.records) {
    nlohmann::json obj = {{"phase", r.phase},
                          {"epoch", r.epoch},
                          {"retain_loss", r.retain_loss},
                          {"forget_loss", r.forget_loss},
                          {"update_norm", r.update_norm},
                          {"wall_ms", r.wall_ms}};
    out << obj.dump() << '\n';
  }
}

std::vector<RunLogRecord> ReadRunLog(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("run log: cannot open " + path.string());
  std::vector<RunLogRecord> out;
  for (std::string line; std::getline(in, line);) {
    if (line.empty()) continue;
    const auto obj = nlohmann::json::parse(line);
    RunLogRecord r;
    r.phase = obj.at("phase").get<std::string>();
    r.epoch = obj.at("epoch").get<std::size_t>();
    r.retain_loss = obj.at("retain_loss").get<double>();
    r.forget_loss = obj.at("forget_loss").get<double>();
    r.update_norm = obj.at("update_norm").get<double>();
    r.wall_ms = obj.at("wall_ms").get<double>();
    out.push_back(std::move(r));
  }
  return out;
}

void Deadline::Check(RunLog* log, std::string_view where) const {
  if (!Expired()) return;
  if (log != nullptr) log->aborted = true;
  throw BudgetExceeded("runtime budget exhausted during " + std::string(where));
}

// ---------------------------------------------------------------------------

double TeacherForcedRecall(const Model& model,
                           std::span<const PackedExample> examples) {
  if (examples.empty()) return 1.0;
  std::size_t hits = 0;
  for (const auto& ex : examples) hits += TeacherForcedExactMatch(model, ex);
  return static_cast<double>(hits) / static_cast<double>(examples.size());
}

MemorizeReport Memorize(Model& model, std::span<const PackedExample> retain,
                        std::span<const PackedExample> forget,
                        std::span<const PackedExample> knowledge,
                        const MemorizeOptions& options, RunLog* log,
                        const Deadline& deadline) {
  if (retain.empty() && forget.empty()) {
    throw std::invalid_argument("memorize: empty dataset");
  }
  if (options.batch_size == 0) {
    throw std::invalid_argument("memorize: batch_size must be positive");
  }
  // Training order: retain, forget, knowledge. `origin` tags each example.
  std::vector<PackedExample> train;
  std::vector<int> origin;
  for (const auto& ex : retain) train.push_back(ex), origin.push_back(0);
  for (const auto& ex : forget) train.push_back(ex), origin.push_back(1);
  for (const auto& ex : knowledge) train.push_back(ex), origin.push_back(2);

  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  constexpr ParameterScope kScope = ParameterScope::kBase;
  ParameterVector theta = model.Parameters(kScope);
  std::vector<double> m(theta.size(), 0.0), v(theta.size(), 0.0);
  std::size_t t = 0;

  MemorizeReport report;
  auto measure = [&] {
    report.retain_recall = TeacherForcedRecall(model, retain);
    report.forget_recall = TeacherForcedRecall(model, forget);
    report.knowledge_recall = TeacherForcedRecall(model, knowledge);
    report.reached_target = report.retain_recall >= options.target_recall &&
                            report.forget_recall >= options.target_recall &&
                            report.knowledge_recall >= options.target_recall;
  };

  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    deadline.Check(log, "memorize");
    const auto start = Clock::now();
    const ParameterVector before = theta;
    double loss_sum[3] = {0, 0, 0};
    std::size_t loss_count[3] = {0, 0, 0};
    for (const auto& idx :
         Batches(train.size(), options.batch_size, options.seed, epoch)) {
      Batch batch;
      for (std::size_t i : idx) batch.push_back(&train[i]);
      const LossAndGradient lg = BatchGradient(model, batch, kScope);
      for (std::size_t b = 0; b < idx.size(); ++b) {
        loss_sum[origin[idx[b]]] += lg.example_losses[b];
        ++loss_count[origin[idx[b]]];
      }
      ++t;
      const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t));
      const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t));
      for (std::size_t i = 0; i < theta.size(); ++i) {
        const double g = lg.gradient[i];
        m[i] = kBeta1 * m[i] + (1.0 - kBeta1) * g;
        v[i] = kBeta2 * v[i] + (1.0 - kBeta2) * g * g;
        theta[i] -=
            options.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + kEps);
      }
      model.SetParameters(kScope, theta);
    }
    report.epochs_run = epoch + 1;

    double delta = 0.0;
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double d = theta[i] - before[i];
      delta += d * d;
    }
    if (log != nullptr) {
      log->records.push_back(
          {"memorize", epoch,
           loss_count[0] ? loss_sum[0] / static_cast<double>(loss_count[0])
                         : 0.0,
           loss_count[1] ? loss_sum[1] / static_cast<double>(loss_count[1])
                         : 0.0,
           std::sqrt(delta), MillisecondsSince(start)});
    }
    // Exact recall is only plausible once the training loss is small.
    const double mean_loss =
        (loss_sum[0] + loss_sum[1] + loss_sum[2]) /
        static_cast<double>(loss_count[0] + loss_count[1] + loss_count[2]);
    if (mean_loss < 0.25) {
      measure();
      if (report.reached_target) break;
    }
  }
  measure();
  if (!report.reached_target && log != nullptr) {
    log->warnings.push_back(
        "memorize: recall target " + std::to_string(options.target_recall) +
        " not reached after " + std::to_string(report.epochs_run) +
        " epochs (retain " + std::to_string(report.retain_recall) +
        ", forget " + std::to_string(report.forget_recall) + ", knowledge " +
        std::to_string(report.knowledge_recall) + ")");
  }
  return report;
}

// ---------------------------------------------------------------------------

FisherDiagonal EstimateFisherDiagonal(const Model& model,
                                      std::span<const Batch> retain_batches) {
  if (retain_batches.empty()) {
    throw std::invalid_argument("estimate_fisher_diagonal: no batches");
  }
  ParameterVector sum(model.Layout(ParameterScope::kTrainable));
  for (const Batch& batch : retain_batches) {
    const LossAndGradient lg =
        BatchGradient(model, batch, ParameterScope::kTrainable);
    for (std::size_t i = 0; i < sum.size(); ++i) {
      sum[i] += lg.gradient[i] * lg.gradient[i];
    }
  }
  const double inv = 1.0 / static_cast<double>(retain_batches.size());
  for (double& x : sum.values()) x *= inv;
  return FisherDiagonal{std::move(sum)};
}

ParameterVector InfluenceWeights(const FisherDiagonal& fisher, double damping) {
  if (!(damping > 0.0) || !std::isfinite(damping)) {
    throw std::invalid_argument("influence_weights: damping must be positive");
  }
  ParameterVector w = fisher.values.ZerosLike();
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (fisher.values[i] < 0.0) {
      throw std::invalid_argument(
          "influence_weights: negative Fisher entry at " + std::to_string(i));
    }
    w[i] = 1.0 / (fisher.values[i] + damping);
  }
  return w;
}

ParameterVector MeanForgetGradient(const Model& model,
                                   std::span<const Batch> forget_batches) {
  if (forget_batches.empty()) {
    throw std::invalid_argument("mean_forget_gradient: no batches");
  }
  return AccumulateGradients(model, forget_batches, forget_batches.size())
      .gradient;
}

ParameterVector InfluenceUpdate(const ParameterVector& theta,
                                const ParameterVector& weights,
                                const ParameterVector& gradient,
                                double learning_rate) {
  RequireSameSize(theta.size(), weights.size(), "influence_update");
  RequireSameSize(theta.size(), gradient.size(), "influence_update");
  ParameterVector out = theta;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = theta[i] - learning_rate * weights[i] * gradient[i];
  }
  return out;
}

// ---------------------------------------------------------------------------

AccumulatedGradient AccumulateGradients(const Model& model,
                                        std::span<const Batch> micro_batches,
                                        std::size_t k, double sign) {
  if (k == 0)
    throw std::invalid_argument("accumulate_gradients: k must be >= 1");
  if (micro_batches.empty()) {
    throw std::invalid_argument("accumulate_gradients: no micro-batches");
  }
  AccumulatedGradient out;
  out.effective_k = std::min(k, micro_batches.size());
  out.gradient = ParameterVector(model.Layout(ParameterScope::kTrainable));
  for (std::size_t b = 0; b < out.effective_k; ++b) {
    const LossAndGradient lg = BatchGradient(model, micro_batches[b],
                                             ParameterScope::kTrainable, sign);
    AddInto(out.gradient, lg.gradient);
    out.mean_loss += lg.loss;
  }
  const double inv = 1.0 / static_cast<double>(out.effective_k);
  for (double& x : out.gradient.values()) x *= inv;
  out.mean_loss *= inv;
  return out;
}

std::vector<std::span<const Batch>> AccumulationGroups(
    std::span<const Batch> micro_batches, std::size_t k) {
  if (k == 0)
    throw std::invalid_argument("accumulation_groups: k must be >= 1");
  std::vector<std::span<const Batch>> out;
  for (std::size_t start = 0; start < micro_batches.size(); start += k) {
    out.push_back(micro_batches.subspan(
        start, std::min(k, micro_batches.size() - start)));
  }
  return out;
}

// ---------------------------------------------------------------------------

SophiaState::SophiaState(std::size_t size, const SophiaOptions& options)
    : options_(options), h_(size, 0.0), rng_(options.seed) {
  if (!(options.rho > 0.0 && options.rho <= 1.0)) {
    throw std::invalid_argument("sophia: rho must lie in (0, 1]");
  }
  if (!(options.epsilon > 0.0)) {
    throw std::invalid_argument("sophia: epsilon must be positive");
  }
  if (!(options.gamma > 0.0)) {
    throw std::invalid_argument("sophia: gamma must be positive");
  }
  if (!(options.clip > 0.0)) {
    throw std::invalid_argument("sophia: clip must be positive");
  }
  if (!(options.beta >= 0.0 && options.beta < 1.0)) {
    throw std::invalid_argument("sophia: beta must lie in [0, 1)");
  }
}

bool SophiaState::UpdateHessian(std::span<const double> gradient) {
  RequireSameSize(gradient.size(), h_.size(), "sophia_update_h");
  ++step_;
  std::bernoulli_distribution draw(options_.rho);
  if (!draw(rng_)) return false;
  const double beta = options_.beta;
  for (std::size_t i = 0; i < h_.size(); ++i) {
    h_[i] = beta * h_[i] + (1.0 - beta) * gradient[i] * gradient[i];
  }
  ++hessian_updates_;
  return true;
}

double SophiaDirection(double gradient, double hessian, double gamma,
                       double epsilon, double clip) {
  const double raw = gradient / std::max(gamma * hessian, epsilon);
  return std::clamp(raw, -clip, clip);
}

void SophiaState::Step(ParameterVector& theta, const ParameterVector& gradient,
                       double learning_rate) {
  RequireSameSize(theta.size(), gradient.size(), "sophia_step");
  UpdateHessian(gradient.values());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    theta[i] -=
        learning_rate * SophiaDirection(gradient[i], h_[i], options_.gamma,
                                        options_.epsilon, options_.clip);
  }
}

// ---------------------------------------------------------------------------

void ValidateUnlearnConfig(const UnlearnConfig& c) {
  RequirePositive(static_cast<double>(c.num_epochs), "NUM_EPOCHS");
  RequirePositive(c.learning_rate, "LEARNING_RATE");
  RequirePositive(static_cast<double>(c.batch_size), "BATCH_SIZE");
  RequirePositive(static_cast<double>(c.lora_rank), "LORA_RANK");
  RequirePositive(static_cast<double>(c.accumulation_steps),
                  "ACCUMULATION_STEPS");
  RequirePositive(static_cast<double>(c.max_length), "MAX_LENGTH");
  RequirePositive(c.damping_factor, "DAMPING_FACTOR");
  RequirePositive(c.sophia_rho, "SOPHIA_RHO");
  if (c.sophia_rho > 1.0) {
    throw std::invalid_argument("unlearn config: SOPHIA_RHO must be <= 1");
  }
  RequirePositive(c.sophia_gamma, "SOPHIA_GAMMA");
  RequirePositive(c.sophia_clip, "SOPHIA_CLIP");
  RequirePositive(c.sophia_epsilon, "SOPHIA_EPSILON");
  if (!(c.sophia_beta >= 0.0 && c.sophia_beta < 1.0)) {
    throw std::invalid_argument(
        "unlearn config: SOPHIA_BETA must lie in [0, 1)");
  }
  if (!(c.eta_scale >= 0.0) || !std::isfinite(c.eta_scale)) {
    throw std::invalid_argument("unlearn config: ETA_SCALE must be >= 0");
  }
  if (!(c.phase2_retain_weight >= 0.0)) {
    throw std::invalid_argument(
        "unlearn config: PHASE2_RETAIN_WEIGHT must be >= 0");
  }
}

UnlearnConfig PresetConfig(std::string_view name) {
  UnlearnConfig c;
  c.max_length = 1024;
  if (name == "setup1") {
    c.num_epochs = 6;
    c.learning_rate = 4e-5;
    c.batch_size = 4;
    c.lora_rank = 16;
    c.accumulation_steps = 4;
    c.damping_factor = 5e-5;
    c.sophia_rho = 0.1;
    c.sophia_gamma = 1.1;
  } else if (name == "setup2") {
    c.num_epochs = 5;
    c.learning_rate = 3e-5;
    c.batch_size = 6;
    c.lora_rank = 24;
    c.accumulation_steps = 6;
    c.damping_factor = 8e-4;
    c.sophia_rho = 0.08;
    c.sophia_gamma = 1.15;
  } else if (name == "setup3") {
    c.num_epochs = 4;
    c.learning_rate = 2e-5;
    c.batch_size = 4;
    c.lora_rank = 16;
    c.accumulation_steps = 8;
    c.damping_factor = 1e-3;
    c.sophia_rho = 0.06;
    c.sophia_gamma = 1.2;
  } else {
    throw std::invalid_argument("unknown preset '" + std::string(name) +
                                "' (valid: setup1, setup2, setup3)");
  }
  return c;
}

std::vector<std::string> PresetNames() {
  return {"setup1", "setup2", "setup3"};
}

PackedSplits PackSplits(const SplitDataset& dataset, const Vocabulary& vocab,
                        std::size_t max_length) {
  return {PackAll(dataset.retain, vocab, max_length),
          PackAll(dataset.forget, vocab, max_length)};
}

Model WithAdapterRank(const Model& model, std::size_t rank) {
  ModelConfig config = model.config();
  if (config.lora_enabled && config.lora_rank == rank) return model;
  for (const auto& t : model.tensors()) {
    if (!t.adapter || t.name.find("_up") == std::string::npos) continue;
    for (double v : t.value.values()) {
      if (v != 0.0) {
        throw std::invalid_argument(
            "unlearn: cannot change LoRA rank of a model whose adapters are "
            "already trained ('" +
            t.name + "' is non-zero)");
      }
    }
  }
  config.lora_enabled = true;
  config.lora_rank = rank;
  Model rebuilt(config);
  std::vector<Model::NamedTensor> tensors = rebuilt.tensors();
  for (const auto& t : model.tensors()) {
    if (t.adapter) continue;
    auto it = std::find_if(tensors.begin(), tensors.end(),
                           [&](const auto& u) { return u.name == t.name; });
    it->value = t.value;
  }
  rebuilt.LoadTensors(tensors);
  return rebuilt;
}

void RunLibu(Model& model, const PackedSplits& data,
             const UnlearnConfig& config, RunLog* log,
             const Deadline& deadline) {
  ValidateUnlearnConfig(config);
  if (data.forget.empty()) {
    if (log != nullptr) {
      log->warnings.push_back("run_libu: empty forget split, nothing to do");
    }
    return;
  }
  const bool has_retain = !data.retain.empty();
  const double eta = config.EffectiveLearningRate();
  const std::size_t k = config.accumulation_steps;
  constexpr ParameterScope kScope = ParameterScope::kTrainable;
  // Distinct shuffling streams per role.
  const std::uint64_t forget_seed = config.seed;
  const std::uint64_t retain_seed = config.seed ^ 0x5bd1e995ULL;

  auto record = [&](const char* phase, std::size_t epoch, double norm,
                    Clock::time_point start) {
    if (log == nullptr) return;
    log->records.push_back({phase, epoch, MeanOrZero(data.retain, model),
                            MeanOrZero(data.forget, model), norm,
                            MillisecondsSince(start)});
  };

  // Phase 1: influence-based updates. The forget objective is ascent, so the
  // update direction fed to the influence rule is the negated forget gradient.
  std::optional<ParameterVector> weights;
  auto refresh_weights = [&](std::uint64_t epoch) {
    if (has_retain) {
      const auto retain_batches =
          MakeBatches(data.retain, config.batch_size, retain_seed, epoch);
      weights = InfluenceWeights(EstimateFisherDiagonal(model, retain_batches),
                                 config.damping_factor);
    } else {
      FisherDiagonal zero{ParameterVector(model.Layout(kScope))};
      weights = InfluenceWeights(zero, config.damping_factor);
    }
  };

  for (std::size_t epoch = 0; epoch < config.Phase1Epochs(); ++epoch) {
    deadline.Check(log, "phase 1");
    const auto start = Clock::now();
    if (!weights || config.refresh_fisher_each_epoch) refresh_weights(epoch);
    const ParameterVector before = model.Parameters(kScope);
    const auto forget_batches =
        MakeBatches(data.forget, config.batch_size, forget_seed, epoch);
    std::vector<std::span<const Batch>> groups;
    if (config.influence_schedule == InfluenceSchedule::kPerEpoch) {
      groups.push_back(forget_batches);
    } else {
      groups = AccumulationGroups(forget_batches, k);
    }
    for (auto group : groups) {
      deadline.Check(log, "phase 1");
      const AccumulatedGradient ascent =
          AccumulateGradients(model, group, group.size(), -1.0);
      model.SetParameters(kScope,
                          InfluenceUpdate(model.Parameters(kScope), *weights,
                                          ascent.gradient, eta));
    }
    const ParameterVector after = model.Parameters(kScope);
    double norm = 0.0;
    for (std::size_t i = 0; i < after.size(); ++i) {
      norm += (after[i] - before[i]) * (after[i] - before[i]);
    }
    record("phase1", epoch, std::sqrt(norm), start);
  }

  // Phase 2: Sophia on forget ascent plus weighted retain descent.
  SophiaOptions sophia;
  sophia.rho = config.sophia_rho;
  sophia.gamma = config.sophia_gamma;
  sophia.epsilon = config.sophia_epsilon;
  sophia.clip = config.sophia_clip;
  sophia.beta = config.sophia_beta;
  sophia.seed = config.seed ^ 0x2545f4914f6cdd1dULL;
  SophiaState state(model.ParameterCount(kScope), sophia);
  const std::uint64_t phase2_offset = config.Phase1Epochs();

  for (std::size_t epoch = 0; epoch < config.Phase2Epochs(); ++epoch) {
    deadline.Check(log, "phase 2");
    const auto start = Clock::now();
    const ParameterVector before = model.Parameters(kScope);
    const auto forget_batches = MakeBatches(data.forget, config.batch_size,
                                            forget_seed, phase2_offset + epoch);
    std::vector<Batch> retain_batches;
    if (has_retain && config.phase2_retain_weight > 0.0) {
      retain_batches = MakeBatches(data.retain, config.batch_size, retain_seed,
                                   phase2_offset + epoch);
    }
    std::size_t retain_cursor = 0;
    for (auto group : AccumulationGroups(forget_batches, k)) {
      deadline.Check(log, "phase 2");
      AccumulatedGradient g =
          AccumulateGradients(model, group, group.size(), -1.0);
      if (!retain_batches.empty()) {
        std::vector<Batch> paired;
        for (std::size_t i = 0; i < group.size(); ++i) {
          paired.push_back(
              retain_batches[retain_cursor++ % retain_batches.size()]);
        }
        const AccumulatedGradient r =
            AccumulateGradients(model, paired, paired.size(), 1.0);
        for (std::size_t i = 0; i < g.gradient.size(); ++i) {
          g.gradient[i] += config.phase2_retain_weight * r.gradient[i];
        }
      }
      ParameterVector theta = model.Parameters(kScope);
      state.Step(theta, g.gradient, eta);
      model.SetParameters(kScope, theta);
    }
    const ParameterVector after = model.Parameters(kScope);
    double norm = 0.0;
    for (std::size_t i = 0; i < after.size(); ++i) {
      norm += (after[i] - before[i]) * (after[i] - before[i]);
    }
    record("phase2", epoch, std::sqrt(norm), start);
  }
}

}  // namespace libu
