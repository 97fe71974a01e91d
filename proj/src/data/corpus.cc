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

#include <cstdio>
#include <iterator>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "libu/data.h"

namespace libu {
namespace {

constexpr const char* kConsonants = "bdfgklmnprstvz";
constexpr const char* kVowels = "aeiou";

// Draws pronounceable words that are unique across the whole corpus, so
// that names, answers and filler words never collide.
class WordSource {
 public:
  explicit WordSource(std::uint64_t seed) : rng_(seed) {}

  std::string Fresh(int syllables, bool capitalized) {
    for (;;) {
      std::string w;
      for (int s = 0; s < syllables; ++s) {
        w += kConsonants[Pick(14)];
        w += kVowels[Pick(5)];
      }
      if (capitalized) w[0] = static_cast<char>(w[0] - 'a' + 'A');
      if (used_.insert(w).second) return w;
    }
  }

  std::string FreshCode(const char* prefix, int digits) {
    for (;;) {
      std::string w = prefix;
      for (int d = 0; d < digits; ++d) w += static_cast<char>('0' + Pick(10));
      if (used_.insert(w).second) return w;
    }
  }

  std::size_t Pick(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng_);
  }

 private:
  std::mt19937_64 rng_;
  std::set<std::string> used_;
};

// Fictional person that several consecutive records describe.
struct Entity {
  std::string name;
  std::vector<std::string> topic;
  std::size_t qa_asked = 0;
};

class CorpusBuilder {
 public:
  CorpusBuilder(const CorpusSpec& spec, std::uint64_t seed)
      : spec_(spec), words_(seed) {
    for (std::size_t i = 0; i < spec.long_form_weight; ++i)
      cycle_.push_back(kTaskLongForm);
    for (std::size_t i = 0; i < spec.pii_qa_weight; ++i)
      cycle_.push_back(kTaskPiiQa);
    for (std::size_t i = 0; i < spec.document_weight; ++i)
      cycle_.push_back(kTaskDocument);
  }

  std::vector<UnlearningExample> Split(const std::string& prefix,
                                       std::size_t count) {
    std::vector<UnlearningExample> out;
    Entity entity;
    for (std::size_t i = 0; i < count; ++i) {
      if (i % spec_.records_per_entity == 0) {
        std::string first = words_.Fresh(2, true);
        entity = {first + " " + words_.Fresh(3, true), {}, 0};
        for (std::size_t w = 0; w < spec_.entity_vocabulary; ++w) {
          entity.topic.push_back(
              words_.Fresh(2 + static_cast<int>(w % 2), false));
        }
      }
      const std::string& task = cycle_[i % cycle_.size()];
      UnlearningExample ex = Make(task, entity);
      ex.id = Id(prefix, i);
      out.push_back(std::move(ex));
    }
    return out;
  }

  std::vector<UnlearningExample> Utility(std::size_t count) {
    std::vector<UnlearningExample> out;
    for (std::size_t i = 0; i < count; ++i) {
      UnlearningExample ex;
      ex.id = Id("utility", i);
      ex.task = kTaskGeneralQa;
      ex.input = "What is the capital of " + words_.Fresh(3, true) + " ?";
      ex.output = words_.Fresh(2, true);
      out.push_back(std::move(ex));
    }
    return out;
  }

 private:
  static std::string Id(const std::string& prefix, std::size_t i) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%04zu", i);
    return prefix + "-" + buf;
  }

  std::string Words(const Entity& entity, std::size_t n) {
    std::string out;
    for (std::size_t i = 0; i < n; ++i) {
      if (i > 0) out += ' ';
      out += entity.topic[words_.Pick(entity.topic.size())];
    }
    return out;
  }

  UnlearningExample Make(const std::string& task, Entity& entity) {
    UnlearningExample ex;
    ex.task = task;
    if (task == kTaskLongForm) {
      ex.input = "The story of " + entity.name + " about " +
                 words_.Fresh(2, false) + " :";
      ex.output = Words(entity, spec_.long_form_words);
    } else if (task == kTaskPiiQa) {
      static constexpr const char* kAttributes[] = {
          "phone number", "account", "badge", "locker", "license"};
      static constexpr const char* kPrefixes[] = {"555-", "ACCT-", "B-", "L-",
                                                  "LIC-"};
      const std::size_t k = entity.qa_asked++;
      const std::size_t a = k % std::size(kAttributes);
      std::string attribute = kAttributes[a];
      if (k >= std::size(kAttributes)) {
        attribute += " " + std::to_string(k / std::size(kAttributes) + 1);
      }
      ex.input = "What is the " + attribute + " of " + entity.name + " ?";
      ex.output = words_.FreshCode(kPrefixes[a], 4);
    } else {
      ex.input = "Archive entry " + words_.Fresh(3, true) + " on " +
                 entity.name + " reads :";
      ex.output = Words(entity, spec_.document_words);
    }
    return ex;
  }

  const CorpusSpec& spec_;
  WordSource words_;
  std::vector<std::string> cycle_;
};

void Require(bool ok, const char* field) {
  if (!ok) {
    throw std::invalid_argument(std::string("corpus spec: ") + field +
                                " must be positive");
  }
}

}  // namespace

DatasetBundle GenerateSyntheticCorpus(const CorpusSpec& spec,
                                      std::uint64_t seed) {
  Require(spec.forget_count > 0, "forget_count");
  Require(spec.retain_count > 0, "retain_count");
  Require(spec.utility_count > 0, "utility_count");
  Require(spec.mia_member_count > 0, "mia_member_count");
  Require(spec.mia_nonmember_count > 0, "mia_nonmember_count");
  Require(spec.long_form_words > 0, "long_form_words");
  Require(spec.document_words > 0, "document_words");
  Require(spec.entity_vocabulary > 0, "entity_vocabulary");
  Require(spec.records_per_entity > 0, "records_per_entity");
  Require(spec.long_form_weight + spec.pii_qa_weight + spec.document_weight > 0,
          "task weight total");
  if (spec.mia_member_count > spec.forget_count) {
    throw std::invalid_argument(
        "corpus spec: mia_member_count exceeds forget_count (members are "
        "drawn from the forget split)");
  }

  CorpusBuilder builder(spec, seed);
  DatasetBundle bundle;
  bundle.split.forget = builder.Split("forget", spec.forget_count);
  bundle.split.retain = builder.Split("retain", spec.retain_count);
  bundle.mia_nonmember = builder.Split("nonmember", spec.mia_nonmember_count);
  bundle.utility = builder.Utility(spec.utility_count);
  bundle.mia_member.assign(
      bundle.split.forget.begin(),
      bundle.split.forget.begin() +
          static_cast<std::ptrdiff_t>(spec.mia_member_count));
  return bundle;
}

}  // namespace libu
