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

#include "libu/data.h"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace libu {
namespace {

using nlohmann::json;

void CheckUniqueIds(const std::vector<UnlearningExample>& split,
                    const std::string& name) {
  std::set<std::string> seen;
  for (const auto& ex : split) {
    if (!seen.insert(ex.id).second) {
      throw std::invalid_argument("dataset: duplicate id '" + ex.id + "' in " +
                                  name + " split");
    }
  }
}

void CheckDisjoint(const SplitDataset& d) {
  std::set<std::string> retain_ids;
  for (const auto& ex : d.retain) retain_ids.insert(ex.id);
  for (const auto& ex : d.forget) {
    if (retain_ids.contains(ex.id)) {
      throw std::invalid_argument("dataset: id '" + ex.id +
                                  "' appears in both retain and forget");
    }
  }
}

void CollectTokens(std::span<const UnlearningExample> examples,
                   std::set<std::string>& out) {
  for (const auto& ex : examples) {
    for (auto& tok : SplitWhitespace(ex.input)) out.insert(std::move(tok));
    for (auto& tok : SplitWhitespace(ex.output)) out.insert(std::move(tok));
  }
}

Vocabulary FromTokenSet(const std::set<std::string>& tokens) {
  std::vector<std::string> by_id = {kPadToken, kEosToken};
  by_id.insert(by_id.end(), tokens.begin(), tokens.end());
  return Vocabulary(std::move(by_id));
}

}  // namespace

Vocabulary::Vocabulary() : Vocabulary({kPadToken, kEosToken}) {}

Vocabulary::Vocabulary(std::vector<std::string> tokens_by_id)
    : tokens_(std::move(tokens_by_id)) {
  if (tokens_.size() < 2 || tokens_[kPadId] != kPadToken ||
      tokens_[kEosId] != kEosToken) {
    throw std::invalid_argument("vocabulary: ids 0 and 1 must be " +
                                std::string(kPadToken) + " and " + kEosToken);
  }
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!ids_.emplace(tokens_[i], static_cast<int>(i)).second) {
      throw std::invalid_argument("vocabulary: duplicate token '" + tokens_[i] +
                                  "'");
    }
  }
}

bool Vocabulary::Contains(const std::string& token) const {
  return ids_.contains(token);
}

int Vocabulary::Id(const std::string& token) const {
  auto it = ids_.find(token);
  if (it == ids_.end()) {
    throw std::invalid_argument("vocabulary: unknown token '" + token + "'");
  }
  return it->second;
}

const std::string& Vocabulary::Token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw std::out_of_range("vocabulary: id " + std::to_string(id));
  }
  return tokens_[id];
}

std::vector<int> Vocabulary::Encode(const std::string& text) const {
  std::vector<int> ids;
  for (const auto& tok : SplitWhitespace(text)) ids.push_back(Id(tok));
  return ids;
}

std::string Vocabulary::Decode(std::span<const int> ids) const {
  std::string out;
  for (int id : ids) {
    if (id == kPadId || id == kEosId) continue;
    if (!out.empty()) out += ' ';
    out += Token(id);
  }
  return out;
}

std::vector<std::string> SplitWhitespace(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> out;
  for (std::string tok; in >> tok;) out.push_back(std::move(tok));
  return out;
}

std::string NormalizeWhitespace(const std::string& text) {
  std::string out;
  for (const auto& tok : SplitWhitespace(text)) {
    if (!out.empty()) out += ' ';
    out += tok;
  }
  return out;
}

std::vector<UnlearningExample> ReadJsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("dataset: cannot open " + path.string());
  }
  std::vector<UnlearningExample> out;
  std::string line;
  for (std::size_t line_no = 1; std::getline(in, line); ++line_no) {
    if (NormalizeWhitespace(line).empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw std::invalid_argument("dataset: malformed JSON at " + where);
    }
    if (!obj.is_object()) {
      throw std::invalid_argument("dataset: expected an object at " + where);
    }
    UnlearningExample ex;
    for (auto [key, field] : {std::pair{"id", &ex.id},
                              {"input", &ex.input},
                              {"output", &ex.output},
                              {"task", &ex.task}}) {
      auto it = obj.find(key);
      if (it == obj.end() || !it->is_string()) {
        throw std::invalid_argument("dataset: missing string field '" +
                                    std::string(key) + "' at " + where);
      }
      *field = it->get<std::string>();
    }
    out.push_back(std::move(ex));
  }
  return out;
}

void WriteJsonl(const std::filesystem::path& path,
                std::span<const UnlearningExample> examples) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("dataset: cannot write " + path.string());
  for (const auto& ex : examples) {
    json obj = {{"id", ex.id},
                {"input", ex.input},
                {"output", ex.output},
                {"task", ex.task}};
    out << obj.dump() << '\n';
  }
}

SplitDataset LoadDataset(const std::filesystem::path& retain_path,
                         const std::filesystem::path& forget_path) {
  SplitDataset d{ReadJsonl(retain_path), ReadJsonl(forget_path)};
  CheckUniqueIds(d.retain, "retain");
  CheckUniqueIds(d.forget, "forget");
  CheckDisjoint(d);
  return d;
}

void SaveDataset(const SplitDataset& dataset,
                 const std::filesystem::path& retain_path,
                 const std::filesystem::path& forget_path) {
  WriteJsonl(retain_path, dataset.retain);
  WriteJsonl(forget_path, dataset.forget);
}

DatasetBundle LoadDatasetDirectory(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw std::runtime_error("dataset: not a directory: " + dir.string());
  }
  DatasetBundle b;
  b.split = LoadDataset(dir / kRetainFile, dir / kForgetFile);
  b.utility = ReadJsonl(dir / kUtilityFile);
  b.mia_member = ReadJsonl(dir / kMiaMemberFile);
  b.mia_nonmember = ReadJsonl(dir / kMiaNonmemberFile);
  return b;
}

void SaveDatasetDirectory(const DatasetBundle& bundle,
                          const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  SaveDataset(bundle.split, dir / kRetainFile, dir / kForgetFile);
  WriteJsonl(dir / kUtilityFile, bundle.utility);
  WriteJsonl(dir / kMiaMemberFile, bundle.mia_member);
  WriteJsonl(dir / kMiaNonmemberFile, bundle.mia_nonmember);
}

Vocabulary BuildVocabulary(const SplitDataset& dataset) {
  if (dataset.retain.empty() && dataset.forget.empty()) {
    throw std::invalid_argument("vocabulary: empty dataset");
  }
  std::set<std::string> tokens;
  CollectTokens(dataset.retain, tokens);
  CollectTokens(dataset.forget, tokens);
  return FromTokenSet(tokens);
}

Vocabulary BuildVocabulary(const DatasetBundle& bundle) {
  if (bundle.split.retain.empty() && bundle.split.forget.empty() &&
      bundle.utility.empty()) {
    throw std::invalid_argument("vocabulary: empty dataset");
  }
  std::set<std::string> tokens;
  CollectTokens(bundle.split.retain, tokens);
  CollectTokens(bundle.split.forget, tokens);
  CollectTokens(bundle.utility, tokens);
  CollectTokens(bundle.mia_member, tokens);
  CollectTokens(bundle.mia_nonmember, tokens);
  return FromTokenSet(tokens);
}

PackedExample Pack(const UnlearningExample& example, const Vocabulary& vocab,
                   std::size_t max_length) {
  const std::vector<int> input = vocab.Encode(example.input);
  const std::vector<int> output = vocab.Encode(example.output);
  if (input.empty()) {
    throw std::invalid_argument("pack: example '" + example.id +
                                "' has an empty input");
  }
  if (input.size() >= max_length) {
    throw std::invalid_argument(
        "pack: input of example '" + example.id + "' has " +
        std::to_string(input.size()) + " tokens, leaving no room for output " +
        "within max_length " + std::to_string(max_length));
  }
  PackedExample p;
  p.token_ids = input;
  p.loss_mask.assign(input.size(), 0);
  for (int id : output) {
    p.token_ids.push_back(id);
    p.loss_mask.push_back(1);
  }
  p.token_ids.push_back(kEosId);
  p.loss_mask.push_back(1);
  if (p.token_ids.size() > max_length) {
    p.token_ids.resize(max_length);
    p.loss_mask.resize(max_length);
  }
  p.attention_length = p.token_ids.size();
  p.token_ids.resize(max_length, kPadId);
  p.loss_mask.resize(max_length, 0);
  return p;
}

std::vector<PackedExample> PackAll(std::span<const UnlearningExample> examples,
                                   const Vocabulary& vocab,
                                   std::size_t max_length) {
  std::vector<PackedExample> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) out.push_back(Pack(ex, vocab, max_length));
  return out;
}

std::vector<std::vector<std::size_t>> Batches(std::size_t count,
                                              std::size_t batch_size,
                                              std::uint64_t seed,
                                              std::uint64_t epoch) {
  if (batch_size == 0) throw std::invalid_argument("batches: batch_size is 0");
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch),
                    static_cast<std::uint32_t>(epoch >> 32)};
  std::mt19937_64 rng(seq);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < count; start += batch_size) {
    const std::size_t end = std::min(count, start + batch_size);
    out.emplace_back(order.begin() + start, order.begin() + end);
  }
  return out;
}

bool IsQaTask(const std::string& task) {
  return task.size() >= 2 && task.compare(task.size() - 2, 2, "qa") == 0;
}

}  // namespace libu
