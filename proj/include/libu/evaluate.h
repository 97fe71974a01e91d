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

#ifndef LIBU_EVALUATE_H_
#define LIBU_EVALUATE_H_

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "libu/data.h"
#include "libu/model.h"

namespace libu {

// Length of the longest common subsequence of two token lists.
std::size_t LcsLength(std::span<const std::string> a,
                      std::span<const std::string> b);

// ROUGE-L F-measure over whitespace tokens. An empty candidate scores 0; an
// empty reference throws std::invalid_argument.
double RougeL(std::span<const std::string> candidate,
              std::span<const std::string> reference);
double RougeL(const std::string& candidate, const std::string& reference);

// n / sum(1 / v_i), or 0 when any value is 0. Throws on an empty list or a
// value outside [0, 1].
double HarmonicMean(std::span<const double> values);

enum class Split { kRetain, kForget };

struct PromptScore {
  std::string id;
  bool qa = false;
  // Inverted ROUGE-L on forget, raw on retain; 0/1 exact match for QA.
  double score = 0.0;
  bool exact = false;
  bool failed = false;
  std::string error;
};

struct RegurgitationResult {
  double score = 0.0;
  // Share of QA prompts answered exactly, before any inversion.
  double qa_exact_match = 0.0;
  std::size_t completion_prompts = 0;
  std::size_t qa_prompts = 0;
  // Harmonic-mean inputs: one per completion prompt, then the QA term.
  std::vector<double> constituents;
  std::vector<PromptScore> breakdown;
};

// Greedy completion of `input`, decoded to text. At most |output| + 1 new
// tokens are produced.
std::string GreedyAnswer(const Model& model, const Vocabulary& vocab,
                         const UnlearningExample& example);

// Completion prompts contribute one ROUGE-L score each, QA prompts one
// exact-match rate between them; forget-split scores are inverted. Prompts
// that cannot be decoded score 0 and are flagged. Either list may be empty,
// but not both.
RegurgitationResult RegurgitationRate(
    const Model& model, const Vocabulary& vocab,
    std::span<const UnlearningExample> completion_prompts,
    std::span<const UnlearningExample> qa_prompts, Split split);

// Share of examples whose greedy answer equals the reference output after
// whitespace normalization. Throws on an empty list.
double ExactMatchRate(const Model& model, const Vocabulary& vocab,
                      std::span<const UnlearningExample> examples);

// Exact-match accuracy on held-out general QA.
double UtilityScore(const Model& model, const Vocabulary& vocab,
                    std::span<const UnlearningExample> utility);

// P(nonmember score > member score), ties counted half, over all pairs.
double AucFromLosses(std::span<const double> member_losses,
                     std::span<const double> nonmember_losses);
// (AUC - 0.5) / 0.5.
double MiaScoreFromLosses(std::span<const double> member_losses,
                          std::span<const double> nonmember_losses);

// Per-example membership score; higher means "looks less like training data".
using MiaScoreFn = std::function<double(const Model&, const PackedExample&)>;

double MiaScore(const Model& model, std::span<const PackedExample> members,
                std::span<const PackedExample> nonmembers,
                const MiaScoreFn& score = {});

inline constexpr int kReportSchemaVersion = 1;
inline constexpr const char* kAggregateFormula =
    "task_aggregate = HM(forget_regurgitation, retain_regurgitation, "
    "1 - forget_exact_match, retain_exact_match); "
    "final_aggregate = mean(task_aggregate, 1 - |mia_score|, utility)";

struct ReportParts {
  std::optional<double> forget_regurgitation;
  std::optional<double> retain_regurgitation;
  std::optional<double> forget_exact_match;
  std::optional<double> retain_exact_match;
  std::optional<double> mia_score;
  std::optional<double> utility;
};

struct EvalReport {
  std::string label;
  double forget_regurgitation = 0.0;
  double retain_regurgitation = 0.0;
  double forget_exact_match = 0.0;
  double retain_exact_match = 0.0;
  double task_aggregate = 0.0;
  double mia_score = 0.0;
  double utility = 0.0;
  double final_aggregate = 0.0;
  std::string formula = kAggregateFormula;
  // Prompt counts behind each regurgitation score.
  std::size_t forget_completion_prompts = 0;
  std::size_t forget_qa_prompts = 0;
  std::size_t retain_completion_prompts = 0;
  std::size_t retain_qa_prompts = 0;
  std::vector<std::string> flagged_prompts;

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

// Combines the parts; throws std::invalid_argument naming a missing or
// out-of-range part.
EvalReport Aggregate(const ReportParts& parts);

// Full metric suite on a dataset bundle.
EvalReport Evaluate(const Model& model, const Vocabulary& vocab,
                    const DatasetBundle& data, const std::string& label = "");

// Raised when a report's schema_version differs from kReportSchemaVersion.
class ReportSchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string ReportToJson(const EvalReport& report);
// Throws std::runtime_error on malformed input or a schema mismatch; `source`
// names the input in messages.
EvalReport ReportFromJson(const std::string& text, const std::string& source);
void WriteReport(const std::filesystem::path& path, const EvalReport& report);
EvalReport ReadReport(const std::filesystem::path& path);

// Aligned Aggregate / Task Aggregate / MIA / Utility columns; the best entry
// of each column carries a trailing '*'. MIA is best closest to zero.
std::string RenderTable(std::span<const EvalReport> reports);

}  // namespace libu

#endif  // LIBU_EVALUATE_H_
