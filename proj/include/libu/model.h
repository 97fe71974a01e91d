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

#ifndef LIBU_MODEL_H_
#define LIBU_MODEL_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "libu/data.h"
#include "libu/diff/tape.h"
#include "libu/diff/tensor.h"
#include "libu/parameters.h"

namespace libu {

struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t d_model = 64;
  std::size_t n_layers = 2;
  std::size_t n_heads = 4;
  std::size_t max_length = 64;
  bool lora_enabled = true;
  std::size_t lora_rank = 16;
  double lora_alpha = 16.0;
  std::uint64_t seed = 0;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Throws std::invalid_argument naming the first offending field.
void ValidateModelConfig(const ModelConfig& config);

// Which tensors a parameter vector covers. kTrainable resolves to the
// adapters when LoRA is enabled and to the base weights otherwise.
enum class ParameterScope { kTrainable, kBase, kAdapters };

class Model;

// Model tensors bound onto one tape. Tensors in the gradient scope become
// differentiable leaves; the rest are borrowed as constants. Without a scope
// nothing is differentiable.
class BoundModel {
 public:
  BoundModel(const Model& model, diff::Tape& tape,
             std::optional<ParameterScope> grad_scope = std::nullopt);

  // Causal language-model logits [T x vocab] for `tokens`.
  diff::Var Logits(std::span<const int> tokens);
  // Masked next-token cross-entropy of a packed example.
  diff::Var SequenceLoss(const PackedExample& example);

  diff::Tape& tape() { return tape_; }

 private:
  diff::Var Attention(std::size_t layer, diff::Var hidden);
  diff::Var Projection(diff::Var x, std::size_t weight, std::ptrdiff_t down,
                       std::ptrdiff_t up);

  const Model& model_;
  diff::Tape& tape_;
  std::vector<diff::Var> vars_;
};

// Tiny decoder-only transformer with optional LoRA adapters on the attention
// query and value projections.
//
// The model is immutable while evaluated and may be shared read-only across
// threads; SetParameters needs exclusive access.
class Model {
 public:
  explicit Model(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }

  // Logits [T x vocab] for a non-empty sequence of at most max_length ids.
  diff::Tensor Logits(std::span<const int> tokens) const;
  double SequenceLoss(const PackedExample& example) const;

  // Greedy completion of `prompt`: argmax with ties to the lowest id, stops
  // after emitting eos (which is not returned) or `max_new` tokens. Never
  // grows the sequence past max_length.
  std::vector<int> GreedyDecode(std::span<const int> prompt,
                                std::size_t max_new) const;

  ParameterVector Parameters(ParameterScope scope) const;
  void SetParameters(ParameterScope scope, const ParameterVector& values);
  std::size_t ParameterCount(ParameterScope scope) const;
  std::shared_ptr<const ParameterLayout> Layout(ParameterScope scope) const;

  // Flattens per-slot gradients from a tape bound with `scope`.
  ParameterVector FlattenGradient(ParameterScope scope,
                                  const std::vector<diff::Tensor>& slots) const;

  struct NamedTensor {
    std::string name;
    diff::Tensor value;
    bool adapter = false;
  };
  const std::vector<NamedTensor>& tensors() const { return tensors_; }
  // Replaces every tensor; names and shapes must match this model's.
  void LoadTensors(const std::vector<NamedTensor>& tensors);

  // Reconstructs from a config and a complete tensor list.
  static Model FromTensors(const ModelConfig& config,
                           const std::vector<NamedTensor>& tensors);

  friend bool operator==(const Model& a, const Model& b);

 private:
  friend class BoundModel;

  struct LayerIndex {
    std::size_t ln1_gain, ln1_bias, wq, wk, wv, wo, ln2_gain, ln2_bias, w1, b1,
        w2, b2;
    std::ptrdiff_t q_down = -1, q_up = -1, v_down = -1, v_up = -1;
  };

  ParameterScope Resolve(ParameterScope scope) const;
  const std::vector<std::size_t>& ScopeIndices(ParameterScope scope) const;
  void BuildScopes();
  std::size_t AddTensor(std::string name, diff::Tensor value, bool adapter);
  void CheckTokens(std::span<const int> tokens) const;

  ModelConfig config_;
  std::vector<NamedTensor> tensors_;
  std::size_t tok_embed_ = 0, pos_embed_ = 0, lnf_gain_ = 0, lnf_bias_ = 0,
              lm_head_ = 0;
  std::vector<LayerIndex> layers_;
  std::vector<std::size_t> base_indices_;
  std::vector<std::size_t> adapter_indices_;
  std::shared_ptr<const ParameterLayout> base_layout_;
  std::shared_ptr<const ParameterLayout> adapter_layout_;
};

// Gradient of the mean sequence loss over `batch` with respect to `scope`,
// scaled by `sign` (use -1 to ascend). Returns the unscaled mean loss.
struct LossAndGradient {
  double loss = 0.0;
  ParameterVector gradient;
  std::vector<double> example_losses;
};
LossAndGradient BatchGradient(const Model& model,
                              std::span<const PackedExample* const> batch,
                              ParameterScope scope, double sign = 1.0);
LossAndGradient BatchGradient(const Model& model,
                              std::span<const PackedExample> batch,
                              ParameterScope scope, double sign = 1.0);

// Mean of per-example sequence losses.
double MeanSequenceLoss(const Model& model,
                        std::span<const PackedExample> examples);

// Greedy decoding reproduces `example`'s output and stops with eos, judged
// from one teacher-forced pass.
bool TeacherForcedExactMatch(const Model& model, const PackedExample& example);

// Versioned binary container: config, vocabulary and every tensor.
struct Checkpoint {
  ModelConfig config;
  std::vector<std::string> vocabulary;
  std::vector<Model::NamedTensor> tensors;

  Model ToModel() const { return Model::FromTensors(config, tensors); }
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void SaveCheckpoint(const std::filesystem::path& path, const Model& model,
                    const Vocabulary& vocab);
Checkpoint LoadCheckpoint(const std::filesystem::path& path);

}  // namespace libu

#endif  // LIBU_MODEL_H_
