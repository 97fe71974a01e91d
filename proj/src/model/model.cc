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

#include "libu/model.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace libu {
namespace {

using diff::Tensor;
using diff::Var;

constexpr double kInitStd = 0.02;
constexpr std::size_t kFfnMultiplier = 4;
constexpr std::uint64_t kAdapterStreamSalt = 0x9e3779b97f4a7c15ULL;

void RequireField(bool ok, const char* field, const std::string& why) {
  if (!ok) {
    throw std::invalid_argument(std::string("model config: ") + field + " " +
                                why);
  }
}

Tensor Gaussian(std::vector<std::size_t> shape, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> dist(0.0, kInitStd);
  for (double& v : t.values()) v = dist(rng);
  return t;
}

}  // namespace

void ValidateModelConfig(const ModelConfig& c) {
  RequireField(c.vocab_size >= 2, "vocab_size",
               "must cover the reserved pad and eos ids");
  RequireField(c.d_model > 0, "d_model", "must be positive");
  RequireField(c.n_layers > 0, "n_layers", "must be positive");
  RequireField(c.n_heads > 0, "n_heads", "must be positive");
  RequireField(c.d_model % c.n_heads == 0, "n_heads",
               "must divide d_model (" + std::to_string(c.d_model) + ")");
  RequireField(c.max_length > 0, "max_length", "must be positive");
  if (c.lora_enabled) {
    RequireField(c.lora_rank > 0, "lora_rank", "must be positive");
    RequireField(c.lora_rank <= c.d_model, "lora_rank",
                 "must not exceed d_model");
    RequireField(c.lora_alpha > 0.0 && std::isfinite(c.lora_alpha),
                 "lora_alpha", "must be positive");
  }
}

Model::Model(const ModelConfig& config) : config_(config) {
  ValidateModelConfig(config_);
  const std::size_t d = config_.d_model, v = config_.vocab_size;
  const std::size_t ffn = kFfnMultiplier * d;
  std::mt19937_64 rng(config_.seed);

  tok_embed_ = AddTensor("tok_embed", Gaussian({v, d}, rng), false);
  pos_embed_ =
      AddTensor("pos_embed", Gaussian({config_.max_length, d}, rng), false);
  for (std::size_t l = 0; l < config_.n_layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    LayerIndex li{};
    li.ln1_gain = AddTensor(p + "ln1.gain", Tensor({d}, 1.0), false);
    li.ln1_bias = AddTensor(p + "ln1.bias", Tensor({d}), false);
    li.wq = AddTensor(p + "attn.wq", Gaussian({d, d}, rng), false);
    li.wk = AddTensor(p + "attn.wk", Gaussian({d, d}, rng), false);
    li.wv = AddTensor(p + "attn.wv", Gaussian({d, d}, rng), false);
    li.wo = AddTensor(p + "attn.wo", Gaussian({d, d}, rng), false);
    li.ln2_gain = AddTensor(p + "ln2.gain", Tensor({d}, 1.0), false);
    li.ln2_bias = AddTensor(p + "ln2.bias", Tensor({d}), false);
    li.w1 = AddTensor(p + "mlp.w1", Gaussian({d, ffn}, rng), false);
    li.b1 = AddTensor(p + "mlp.b1", Tensor({ffn}), false);
    li.w2 = AddTensor(p + "mlp.w2", Gaussian({ffn, d}, rng), false);
    li.b2 = AddTensor(p + "mlp.b2", Tensor({d}), false);
    layers_.push_back(li);
  }
  lnf_gain_ = AddTensor("lnf.gain", Tensor({d}, 1.0), false);
  lnf_bias_ = AddTensor("lnf.bias", Tensor({d}), false);
  lm_head_ = AddTensor("lm_head", Gaussian({d, v}, rng), false);

  if (config_.lora_enabled) {
    // Separate stream so base weights do not depend on the LoRA setting.
    std::mt19937_64 adapter_rng(config_.seed ^ kAdapterStreamSalt);
    const std::size_t r = config_.lora_rank;
    for (std::size_t l = 0; l < config_.n_layers; ++l) {
      const std::string p = "layer" + std::to_string(l) + ".lora.";
      LayerIndex& li = layers_[l];
      li.q_down = static_cast<std::ptrdiff_t>(
          AddTensor(p + "q_down", Gaussian({r, d}, adapter_rng), true));
      li.q_up = static_cast<std::ptrdiff_t>(
          AddTensor(p + "q_up", Tensor({d, r}), true));
      li.v_down = static_cast<std::ptrdiff_t>(
          AddTensor(p + "v_down", Gaussian({r, d}, adapter_rng), true));
      li.v_up = static_cast<std::ptrdiff_t>(
          AddTensor(p + "v_up", Tensor({d, r}), true));
    }
  }
  BuildScopes();
}

std::size_t Model::AddTensor(std::string name, Tensor value, bool adapter) {
  tensors_.push_back({std::move(name), std::move(value), adapter});
  return tensors_.size() - 1;
}

void Model::BuildScopes() {
  base_indices_.clear();
  adapter_indices_.clear();
  auto base = std::make_shared<ParameterLayout>();
  auto adapters = std::make_shared<ParameterLayout>();
  std::size_t base_offset = 0, adapter_offset = 0;
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    const NamedTensor& t = tensors_[i];
    auto& layout = t.adapter ? *adapters : *base;
    std::size_t& offset = t.adapter ? adapter_offset : base_offset;
    layout.push_back({t.name, t.value.shape(), offset, t.value.size()});
    offset += t.value.size();
    (t.adapter ? adapter_indices_ : base_indices_).push_back(i);
  }
  base_layout_ = std::move(base);
  adapter_layout_ = std::move(adapters);
}

ParameterScope Model::Resolve(ParameterScope scope) const {
  if (scope != ParameterScope::kTrainable) return scope;
  return config_.lora_enabled ? ParameterScope::kAdapters
                              : ParameterScope::kBase;
}

const std::vector<std::size_t>& Model::ScopeIndices(
    ParameterScope scope) const {
  return Resolve(scope) == ParameterScope::kAdapters ? adapter_indices_
                                                     : base_indices_;
}

std::shared_ptr<const ParameterLayout> Model::Layout(
    ParameterScope scope) const {
  return Resolve(scope) == ParameterScope::kAdapters ? adapter_layout_
                                                     : base_layout_;
}

std::size_t Model::ParameterCount(ParameterScope scope) const {
  std::size_t n = 0;
  for (std::size_t i : ScopeIndices(scope)) n += tensors_[i].value.size();
  return n;
}

ParameterVector Model::Parameters(ParameterScope scope) const {
  std::vector<double> flat;
  flat.reserve(ParameterCount(scope));
  for (std::size_t i : ScopeIndices(scope)) {
    auto v = tensors_[i].value.values();
    flat.insert(flat.end(), v.begin(), v.end());
  }
  return ParameterVector(Layout(scope), std::move(flat));
}

void Model::SetParameters(ParameterScope scope, const ParameterVector& values) {
  if (values.size() != ParameterCount(scope)) {
    throw std::invalid_argument(
        "model: parameter vector has " + std::to_string(values.size()) +
        " entries, scope holds " + std::to_string(ParameterCount(scope)));
  }
  std::size_t offset = 0;
  for (std::size_t i : ScopeIndices(scope)) {
    auto dst = tensors_[i].value.values();
    std::copy_n(values.values().begin() + static_cast<std::ptrdiff_t>(offset),
                dst.size(), dst.begin());
    offset += dst.size();
  }
}

ParameterVector Model::FlattenGradient(ParameterScope scope,
                                       const std::vector<Tensor>& slots) const {
  const auto& indices = ScopeIndices(scope);
  ParameterVector out(Layout(scope));
  std::size_t offset = 0;
  for (std::size_t s = 0; s < indices.size(); ++s) {
    const std::size_t n = tensors_[indices[s]].value.size();
    if (s < slots.size() && !slots[s].empty()) {
      std::copy_n(slots[s].data(), n,
                  out.values().begin() + static_cast<std::ptrdiff_t>(offset));
    }
    offset += n;
  }
  return out;
}

void Model::LoadTensors(const std::vector<NamedTensor>& tensors) {
  if (tensors.size() != tensors_.size()) {
    throw std::invalid_argument(
        "model: expected " + std::to_string(tensors_.size()) +
        " tensors, got " + std::to_string(tensors.size()));
  }
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    if (tensors[i].name != tensors_[i].name ||
        tensors[i].value.shape() != tensors_[i].value.shape()) {
      throw std::invalid_argument("model: tensor '" + tensors[i].name + "' " +
                                  tensors[i].value.ShapeString() +
                                  " does not match '" + tensors_[i].name +
                                  "' " + tensors_[i].value.ShapeString());
    }
  }
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    tensors_[i].value = tensors[i].value;
  }
}

Model Model::FromTensors(const ModelConfig& config,
                         const std::vector<NamedTensor>& tensors) {
  Model m(config);
  m.LoadTensors(tensors);
  return m;
}

bool operator==(const Model& a, const Model& b) {
  if (!(a.config_ == b.config_) || a.tensors_.size() != b.tensors_.size()) {
    return false;
  }
  for (std::size_t i = 0; i < a.tensors_.size(); ++i) {
    if (a.tensors_[i].name != b.tensors_[i].name ||
        !(a.tensors_[i].value == b.tensors_[i].value)) {
      return false;
    }
  }
  return true;
}

void Model::CheckTokens(std::span<const int> tokens) const {
  if (tokens.empty()) throw std::invalid_argument("model: empty sequence");
  if (tokens.size() > config_.max_length) {
    throw std::invalid_argument(
        "model: sequence of " + std::to_string(tokens.size()) +
        " tokens exceeds max_length " + std::to_string(config_.max_length));
  }
  for (int id : tokens) {
    if (id < 0 || static_cast<std::size_t>(id) >= config_.vocab_size) {
      throw std::invalid_argument("model: token id " + std::to_string(id) +
                                  " outside vocab of " +
                                  std::to_string(config_.vocab_size));
    }
  }
}

Tensor Model::Logits(std::span<const int> tokens) const {
  diff::Tape tape;
  BoundModel bound(*this, tape);
  return bound.Logits(tokens).value();
}

double Model::SequenceLoss(const PackedExample& example) const {
  diff::Tape tape;
  BoundModel bound(*this, tape);
  return bound.SequenceLoss(example).value().item();
}

std::vector<int> Model::GreedyDecode(std::span<const int> prompt,
                                     std::size_t max_new) const {
  CheckTokens(prompt);
  std::vector<int> seq(prompt.begin(), prompt.end());
  std::vector<int> out;
  while (out.size() < max_new && seq.size() < config_.max_length) {
    const Tensor logits = Logits(seq);
    const std::size_t last = logits.rows() - 1;
    int best = 0;
    for (std::size_t j = 1; j < logits.cols(); ++j) {
      if (logits(last, j) > logits(last, best)) best = static_cast<int>(j);
    }
    if (best == kEosId) break;
    out.push_back(best);
    seq.push_back(best);
  }
  return out;
}

BoundModel::BoundModel(const Model& model, diff::Tape& tape,
                       std::optional<ParameterScope> grad_scope)
    : model_(model), tape_(tape) {
  std::vector<int> slot(model.tensors_.size(), -1);
  if (grad_scope) {
    const auto& indices = model.ScopeIndices(*grad_scope);
    for (std::size_t s = 0; s < indices.size(); ++s) {
      slot[indices[s]] = static_cast<int>(s);
    }
  }
  vars_.reserve(model.tensors_.size());
  for (std::size_t i = 0; i < model.tensors_.size(); ++i) {
    const Tensor& t = model.tensors_[i].value;
    vars_.push_back(slot[i] >= 0 ? tape.Parameter(t, slot[i])
                                 : tape.Borrowed(t));
  }
}

Var BoundModel::Projection(Var x, std::size_t weight, std::ptrdiff_t down,
                           std::ptrdiff_t up) {
  Var y = diff::MatMul(x, vars_[weight]);
  if (down < 0) return y;
  const double scaling =
      model_.config_.lora_alpha / static_cast<double>(model_.config_.lora_rank);
  Var low = diff::MatMulTransposed(x, vars_[down]);
  Var delta = diff::MatMulTransposed(low, vars_[up]);
  return diff::Add(y, diff::Scale(delta, scaling));
}

Var BoundModel::Attention(std::size_t layer, Var hidden) {
  const Model::LayerIndex& li = model_.layers_[layer];
  const std::size_t heads = model_.config_.n_heads;
  const std::size_t head_dim = model_.config_.d_model / heads;
  Var q = Projection(hidden, li.wq, li.q_down, li.q_up);
  Var k = diff::MatMul(hidden, vars_[li.wk]);
  Var v = Projection(hidden, li.wv, li.v_down, li.v_up);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));
  std::vector<Var> outputs;
  outputs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    Var qh = diff::SliceColumns(q, h * head_dim, head_dim);
    Var kh = diff::SliceColumns(k, h * head_dim, head_dim);
    Var vh = diff::SliceColumns(v, h * head_dim, head_dim);
    Var scores = diff::Scale(diff::MatMulTransposed(qh, kh), inv_sqrt);
    outputs.push_back(diff::MatMul(diff::CausalSoftmaxRows(scores), vh));
  }
  return diff::MatMul(diff::ConcatColumns(outputs), vars_[li.wo]);
}

Var BoundModel::Logits(std::span<const int> tokens) {
  model_.CheckTokens(tokens);
  std::vector<int> positions(tokens.size());
  std::iota(positions.begin(), positions.end(), 0);
  Var x = diff::Add(diff::EmbeddingLookup(vars_[model_.tok_embed_], tokens),
                    diff::EmbeddingLookup(vars_[model_.pos_embed_], positions));
  for (std::size_t l = 0; l < model_.layers_.size(); ++l) {
    const Model::LayerIndex& li = model_.layers_[l];
    Var h = diff::LayerNormRows(x, vars_[li.ln1_gain], vars_[li.ln1_bias]);
    x = diff::Add(x, Attention(l, h));
    Var h2 = diff::LayerNormRows(x, vars_[li.ln2_gain], vars_[li.ln2_bias]);
    Var ff =
        diff::Gelu(diff::AddBias(diff::MatMul(h2, vars_[li.w1]), vars_[li.b1]));
    x = diff::Add(x,
                  diff::AddBias(diff::MatMul(ff, vars_[li.w2]), vars_[li.b2]));
  }
  x = diff::LayerNormRows(x, vars_[model_.lnf_gain_], vars_[model_.lnf_bias_]);
  return diff::MatMul(x, vars_[model_.lm_head_]);
}

Var BoundModel::SequenceLoss(const PackedExample& example) {
  const std::size_t len = example.attention_length;
  if (len < 2 || len > example.token_ids.size() ||
      example.loss_mask.size() != example.token_ids.size()) {
    throw std::invalid_argument("sequence_loss: malformed packed example");
  }
  std::span<const int> tokens(example.token_ids.data(), len);
  std::vector<int> targets(len, kPadId);
  std::vector<unsigned char> mask(len, 0);
  for (std::size_t p = 0; p + 1 < len; ++p) {
    targets[p] = example.token_ids[p + 1];
    mask[p] = example.loss_mask[p + 1];
  }
  return diff::CrossEntropyLoss(Logits(tokens), targets, mask);
}

LossAndGradient BatchGradient(const Model& model,
                              std::span<const PackedExample* const> batch,
                              ParameterScope scope, double sign) {
  if (batch.empty()) throw std::invalid_argument("batch_gradient: empty batch");
  diff::Tape tape;
  BoundModel bound(model, tape, scope);
  Var total;
  LossAndGradient out;
  for (const PackedExample* ex : batch) {
    Var loss = bound.SequenceLoss(*ex);
    out.example_losses.push_back(loss.value().item());
    total = total.valid() ? diff::Add(total, loss) : loss;
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  Var mean = diff::Scale(total, inv);
  Var objective = sign == 1.0 ? mean : diff::Scale(mean, sign);
  out.loss = mean.value().item();
  out.gradient = model.FlattenGradient(scope, tape.Backward(objective));
  return out;
}

LossAndGradient BatchGradient(const Model& model,
                              std::span<const PackedExample> batch,
                              ParameterScope scope, double sign) {
  std::vector<const PackedExample*> ptrs;
  ptrs.reserve(batch.size());
  for (const auto& ex : batch) ptrs.push_back(&ex);
  return BatchGradient(model, std::span<const PackedExample* const>(ptrs),
                       scope, sign);
}

double MeanSequenceLoss(const Model& model,
                        std::span<const PackedExample> examples) {
  if (examples.empty()) {
    throw std::invalid_argument("mean_sequence_loss: no examples");
  }
  double total = 0.0;
  for (const auto& ex : examples) total += model.SequenceLoss(ex);
  return total / static_cast<double>(examples.size());
}

bool TeacherForcedExactMatch(const Model& model, const PackedExample& example) {
  const std::size_t len = example.attention_length;
  const Tensor logits =
      model.Logits(std::span<const int>(example.token_ids.data(), len));
  for (std::size_t p = 1; p < len; ++p) {
    if (!example.loss_mask[p]) continue;
    const std::size_t row = p - 1;
    int best = 0;
    for (std::size_t j = 1; j < logits.cols(); ++j) {
      if (logits(row, j) > logits(row, best)) best = static_cast<int>(j);
    }
    if (best != example.token_ids[p]) return false;
  }
  return true;
}

}  // namespace libu
