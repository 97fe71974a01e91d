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

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "libu/model.h"

namespace libu {
namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

constexpr char kMagic[8] = {'L', 'I', 'B', 'U', 'C', 'K', 'P', 'T'};

class Writer {
 public:
  explicit Writer(std::ofstream& out) : out_(out) {}

  template <typename T>
  void Pod(T v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void String(const std::string& s) {
    Pod<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }

 private:
  std::ofstream& out_;
};

class Reader {
 public:
  Reader(std::ifstream& in, std::string path)
      : in_(in), path_(std::move(path)) {}

  template <typename T>
  T Pod() {
    T v{};
    in_.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in_) Fail("truncated file");
    return v;
  }
  std::string String() {
    const auto n = Pod<std::uint32_t>();
    if (n > (1u << 20)) Fail("implausible string length");
    std::string s(n, '\0');
    in_.read(s.data(), n);
    if (!in_) Fail("truncated file");
    return s;
  }
  [[noreturn]] void Fail(const std::string& why) const {
    throw std::runtime_error("checkpoint " + path_ + ": " + why);
  }

 private:
  std::ifstream& in_;
  std::string path_;
};

}  // namespace

void SaveCheckpoint(const std::filesystem::path& path, const Model& model,
                    const Vocabulary& vocab) {
  const ModelConfig& c = model.config();
  if (vocab.size() != c.vocab_size) {
    throw std::invalid_argument(
        "checkpoint: vocabulary has " + std::to_string(vocab.size()) +
        " tokens but the model expects " + std::to_string(c.vocab_size));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw std::runtime_error("checkpoint: cannot write " + path.string());
  Writer w(out);
  out.write(kMagic, sizeof(kMagic));
  w.Pod<std::uint32_t>(kCheckpointVersion);
  w.Pod<std::uint64_t>(c.vocab_size);
  w.Pod<std::uint64_t>(c.d_model);
  w.Pod<std::uint64_t>(c.n_layers);
  w.Pod<std::uint64_t>(c.n_heads);
  w.Pod<std::uint64_t>(c.max_length);
  w.Pod<std::uint8_t>(c.lora_enabled ? 1 : 0);
  w.Pod<std::uint64_t>(c.lora_rank);
  w.Pod<double>(c.lora_alpha);
  w.Pod<std::uint64_t>(c.seed);
  w.Pod<std::uint64_t>(vocab.size());
  for (const auto& tok : vocab.tokens()) w.String(tok);
  w.Pod<std::uint64_t>(model.tensors().size());
  for (const auto& t : model.tensors()) {
    w.String(t.name);
    w.Pod<std::uint8_t>(t.adapter ? 1 : 0);
    w.Pod<std::uint32_t>(static_cast<std::uint32_t>(t.value.rank()));
    for (std::size_t d : t.value.shape()) w.Pod<std::uint64_t>(d);
    out.write(reinterpret_cast<const char*>(t.value.data()),
              static_cast<std::streamsize>(t.value.size() * sizeof(double)));
  }
  if (!out)
    throw std::runtime_error("checkpoint: write failed " + path.string());
}

Checkpoint LoadCheckpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path.string());
  Reader r(in, path.string());
  char magic[sizeof(kMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    r.Fail("not a libu checkpoint");
  }
  const auto version = r.Pod<std::uint32_t>();
  if (version != kCheckpointVersion) {
    r.Fail("unsupported version " + std::to_string(version));
  }
  Checkpoint ck;
  ModelConfig& c = ck.config;
  c.vocab_size = r.Pod<std::uint64_t>();
  c.d_model = r.Pod<std::uint64_t>();
  c.n_layers = r.Pod<std::uint64_t>();
  c.n_heads = r.Pod<std::uint64_t>();
  c.max_length = r.Pod<std::uint64_t>();
  c.lora_enabled = r.Pod<std::uint8_t>() != 0;
  c.lora_rank = r.Pod<std::uint64_t>();
  c.lora_alpha = r.Pod<double>();
  c.seed = r.Pod<std::uint64_t>();
  const auto vocab_count = r.Pod<std::uint64_t>();
  if (vocab_count != c.vocab_size) r.Fail("vocabulary size mismatch");
  for (std::uint64_t i = 0; i < vocab_count; ++i) {
    ck.vocabulary.push_back(r.String());
  }
  const auto tensor_count = r.Pod<std::uint64_t>();
  if (tensor_count > 100000) r.Fail("implausible tensor count");
  for (std::uint64_t i = 0; i < tensor_count; ++i) {
    Model::NamedTensor t;
    t.name = r.String();
    t.adapter = r.Pod<std::uint8_t>() != 0;
    const auto rank = r.Pod<std::uint32_t>();
    if (rank == 0 || rank > 4) r.Fail("bad rank for " + t.name);
    std::vector<std::size_t> shape(rank);
    std::size_t count = 1;
    for (auto& d : shape) {
      d = r.Pod<std::uint64_t>();
      if (d == 0 || d > (1u << 24)) r.Fail("bad dimension for " + t.name);
      count *= d;
    }
    std::vector<double> values(count);
    in.read(reinterpret_cast<char*>(values.data()),
            static_cast<std::streamsize>(count * sizeof(double)));
    if (!in) r.Fail("truncated tensor " + t.name);
    t.value = diff::Tensor(std::move(shape), std::move(values));
    ck.tensors.push_back(std::move(t));
  }
  ValidateModelConfig(c);
  return ck;
}

}  // namespace libu
