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

#ifndef LIBU_DATA_H_
#define LIBU_DATA_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace libu {

inline constexpr int kPadId = 0;
inline constexpr int kEosId = 1;
inline constexpr const char* kPadToken = "<pad>";
inline constexpr const char* kEosToken = "<eos>";

// One dataset record: the model sees `input` and should produce `output`.
struct UnlearningExample {
  std::string id;
  std::string input;
  std::string output;
  std::string task;

  friend bool operator==(const UnlearningExample&,
                         const UnlearningExample&) = default;
};

struct SplitDataset {
  std::vector<UnlearningExample> retain;
  std::vector<UnlearningExample> forget;

  friend bool operator==(const SplitDataset&, const SplitDataset&) = default;
};

// Everything an experiment directory holds.
struct DatasetBundle {
  SplitDataset split;
  std::vector<UnlearningExample> utility;
  std::vector<UnlearningExample> mia_member;
  std::vector<UnlearningExample> mia_nonmember;

  friend bool operator==(const DatasetBundle&, const DatasetBundle&) = default;
};

// Fixed-length token layout: input ++ output ++ eos, truncated on the right
// and then padded. loss_mask marks output and eos positions.
struct PackedExample {
  std::vector<int> token_ids;
  std::vector<unsigned char> loss_mask;
  std::size_t attention_length = 0;

  friend bool operator==(const PackedExample&, const PackedExample&) = default;
};

// Whitespace token vocabulary. Ids 0 and 1 are reserved for padding and
// end of sequence; corpus tokens are numbered from 2 in lexicographic order.
class Vocabulary {
 public:
  Vocabulary();
  explicit Vocabulary(std::vector<std::string> tokens_by_id);

  std::size_t size() const { return tokens_.size(); }
  bool Contains(const std::string& token) const;
  int Id(const std::string& token) const;
  const std::string& Token(int id) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::vector<int> Encode(const std::string& text) const;
  // Joins tokens with single spaces; reserved ids are skipped.
  std::string Decode(std::span<const int> ids) const;

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.tokens_ == b.tokens_;
  }

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, int, std::less<>> ids_;
};

std::vector<std::string> SplitWhitespace(const std::string& text);
std::string NormalizeWhitespace(const std::string& text);

// JSON-lines I/O; one {"id","input","output","task"} object per line.
std::vector<UnlearningExample> ReadJsonl(const std::filesystem::path& path);
void WriteJsonl(const std::filesystem::path& path,
                std::span<const UnlearningExample> examples);

// Reads both splits, preserving file order. Rejects duplicate ids inside a
// split and ids present in both splits.
SplitDataset LoadDataset(const std::filesystem::path& retain_path,
                         const std::filesystem::path& forget_path);
void SaveDataset(const SplitDataset& dataset,
                 const std::filesystem::path& retain_path,
                 const std::filesystem::path& forget_path);

inline constexpr const char* kRetainFile = "retain.jsonl";
inline constexpr const char* kForgetFile = "forget.jsonl";
inline constexpr const char* kUtilityFile = "utility.jsonl";
inline constexpr const char* kMiaMemberFile = "mia_member.jsonl";
inline constexpr const char* kMiaNonmemberFile = "mia_nonmember.jsonl";

DatasetBundle LoadDatasetDirectory(const std::filesystem::path& dir);
void SaveDatasetDirectory(const DatasetBundle& bundle,
                          const std::filesystem::path& dir);

Vocabulary BuildVocabulary(const SplitDataset& dataset);
// Vocabulary over every example list of a bundle.
Vocabulary BuildVocabulary(const DatasetBundle& bundle);

PackedExample Pack(const UnlearningExample& example, const Vocabulary& vocab,
                   std::size_t max_length);
std::vector<PackedExample> PackAll(std::span<const UnlearningExample> examples,
                                   const Vocabulary& vocab,
                                   std::size_t max_length);

// Shuffled partition of indices [0, count) keyed by (seed, epoch). The last
// batch may be short.
std::vector<std::vector<std::size_t>> Batches(std::size_t count,
                                              std::size_t batch_size,
                                              std::uint64_t seed,
                                              std::uint64_t epoch);

// Task tags emitted by the corpus generator.
inline constexpr const char* kTaskLongForm = "long_form";
inline constexpr const char* kTaskPiiQa = "pii_qa";
inline constexpr const char* kTaskDocument = "document";
inline constexpr const char* kTaskGeneralQa = "general_qa";

// QA-style tasks are scored by exact match; everything else by ROUGE-L.
bool IsQaTask(const std::string& task);

struct CorpusSpec {
  std::size_t forget_count = 32;
  std::size_t retain_count = 32;
  std::size_t utility_count = 64;
  std::size_t mia_member_count = 32;
  std::size_t mia_nonmember_count = 32;
  // Relative share of long-form, PII QA and document records in every
  // generated split.
  std::size_t long_form_weight = 1;
  std::size_t pii_qa_weight = 1;
  std::size_t document_weight = 1;
  // Words per long-form and document completion.
  std::size_t long_form_words = 8;
  std::size_t document_words = 6;
  // Topic words each fictional person's completions draw from.
  std::size_t entity_vocabulary = 12;
  // Consecutive records of a split that describe the same fictional person.
  std::size_t records_per_entity = 4;
};

// Deterministic synthetic stand-in for a memorize-then-unlearn benchmark.
// Members are the first mia_member_count forget records; nonmembers come from
// the same generator but are never part of retain or forget.
DatasetBundle GenerateSyntheticCorpus(const CorpusSpec& spec,
                                      std::uint64_t seed);

}  // namespace libu

#endif  // LIBU_DATA_H_
