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

#ifndef LIBU_TESTS_TEST_UTIL_H_
#define LIBU_TESTS_TEST_UTIL_H_

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "libu/data.h"
#include "libu/diff/tensor.h"
#include "libu/model.h"
#include "libu/unlearn.h"

namespace libu::testing {

inline diff::Tensor RandomTensor(std::vector<std::size_t> shape,
                                 std::mt19937_64& rng, double scale = 1.0) {
  diff::Tensor t(std::move(shape));
  std::normal_distribution<double> n(0.0, scale);
  for (double& v : t.values()) v = n(rng);
  return t;
}

// A few records per split, short completions.
inline CorpusSpec TinySpec() {
  CorpusSpec s;
  s.forget_count = 4;
  s.retain_count = 4;
  s.utility_count = 4;
  s.mia_member_count = 2;
  s.mia_nonmember_count = 2;
  s.long_form_words = 3;
  s.document_words = 3;
  s.entity_vocabulary = 4;
  s.records_per_entity = 2;
  return s;
}

inline ModelConfig TinyConfig(std::size_t vocab_size) {
  ModelConfig c;
  c.vocab_size = vocab_size;
  c.d_model = 8;
  c.n_layers = 1;
  c.n_heads = 2;
  c.max_length = 24;
  c.lora_rank = 2;
  c.lora_alpha = 4.0;
  c.seed = 11;
  return c;
}

// Perturbs every adapter so that LoRA contributes and all adapter
// gradients are non-zero.
inline void RandomizeAdapters(Model& model, std::uint64_t seed,
                              double scale = 0.2) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  ParameterVector p = model.Parameters(ParameterScope::kAdapters);
  for (double& v : p.values()) v = n(rng);
  model.SetParameters(ParameterScope::kAdapters, p);
}

// Fourth-order central differences of `loss` with respect to `scope`.
inline std::vector<double> FiniteDifferenceGradient(
    Model& model, ParameterScope scope,
    const std::function<double(const Model&)>& loss, double h = 1e-3) {
  ParameterVector theta = model.Parameters(scope);
  std::vector<double> g(theta.size());
  auto at = [&](std::size_t i, double x) {
    theta[i] = x;
    model.SetParameters(scope, theta);
    return loss(model);
  };
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double x = theta[i];
    const double d = -at(i, x + 2 * h) + 8 * at(i, x + h) - 8 * at(i, x - h) +
                     at(i, x - 2 * h);
    theta[i] = x;
    g[i] = d / (12 * h);
  }
  model.SetParameters(scope, theta);
  return g;
}

// Parameter vector over a single flat tensor.
inline ParameterVector Vec(std::vector<double> values) {
  const std::size_t n = values.size();
  return ParameterVector(std::make_shared<const ParameterLayout>(
                             ParameterLayout{{"x", {n}, 0, n}}),
                         std::move(values));
}

inline double RelativeError(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Unique scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("libu_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace libu::testing

#endif  // LIBU_TESTS_TEST_UTIL_H_
