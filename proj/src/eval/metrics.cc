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

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "libu/evaluate.h"

namespace libu {
namespace {

void RequireUnit(double v, const std::string& what) {
  if (!(v >= 0.0 && v <= 1.0)) {
    throw std::invalid_argument(what + " must lie in [0, 1], got " +
                                std::to_string(v));
  }
}

}  // namespace

std::size_t LcsLength(std::span<const std::string> a,
                      std::span<const std::string> b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1
                                    : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double RougeL(std::span<const std::string> candidate,
              std::span<const std::string> reference) {
  if (reference.empty()) {
    throw std::invalid_argument("rouge_l: reference is empty");
  }
  if (candidate.empty()) return 0.0;
  const auto lcs = static_cast<double>(LcsLength(candidate, reference));
  if (lcs == 0.0) return 0.0;
  const double p = lcs / static_cast<double>(candidate.size());
  const double r = lcs / static_cast<double>(reference.size());
  return 2.0 * p * r / (p + r);
}

double RougeL(const std::string& candidate, const std::string& reference) {
  const auto c = SplitWhitespace(candidate);
  const auto r = SplitWhitespace(reference);
  return RougeL(std::span<const std::string>(c),
                std::span<const std::string>(r));
}

double HarmonicMean(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("harmonic_mean: empty list");
  double inverse_sum = 0.0;
  bool any_zero = false;
  for (double v : values) {
    RequireUnit(v, "harmonic_mean: value");
    if (v == 0.0) {
      any_zero = true;
    } else {
      inverse_sum += 1.0 / v;
    }
  }
  if (any_zero) return 0.0;
  return static_cast<double>(values.size()) / inverse_sum;
}

double AucFromLosses(std::span<const double> member_losses,
                     std::span<const double> nonmember_losses) {
  if (member_losses.empty())
    throw std::invalid_argument("mia: member set is empty");
  if (nonmember_losses.empty()) {
    throw std::invalid_argument("mia: nonmember set is empty");
  }
  double favorable = 0.0;
  for (double n : nonmember_losses) {
    for (double m : member_losses) {
      if (n > m) {
        favorable += 1.0;
      } else if (n == m) {
        favorable += 0.5;
      }
    }
  }
  return favorable / (static_cast<double>(member_losses.size()) *
                      static_cast<double>(nonmember_losses.size()));
}

double MiaScoreFromLosses(std::span<const double> member_losses,
                          std::span<const double> nonmember_losses) {
  return (AucFromLosses(member_losses, nonmember_losses) - 0.5) / 0.5;
}

double MiaScore(const Model& model, std::span<const PackedExample> members,
                std::span<const PackedExample> nonmembers,
                const MiaScoreFn& score) {
  if (members.empty()) throw std::invalid_argument("mia: member set is empty");
  if (nonmembers.empty()) {
    throw std::invalid_argument("mia: nonmember set is empty");
  }
  auto eval = [&](const PackedExample& ex) {
    return score ? score(model, ex) : model.SequenceLoss(ex);
  };
  std::vector<double> m, n;
  m.reserve(members.size());
  n.reserve(nonmembers.size());
  for (const auto& ex : members) m.push_back(eval(ex));
  for (const auto& ex : nonmembers) n.push_back(eval(ex));
  return MiaScoreFromLosses(m, n);
}

std::string GreedyAnswer(const Model& model, const Vocabulary& vocab,
                         const UnlearningExample& example) {
  const std::vector<int> prompt = vocab.Encode(example.input);
  const std::size_t max_new = SplitWhitespace(example.output).size() + 1;
  const std::vector<int> out = model.GreedyDecode(prompt, max_new);
  return vocab.Decode(out);
}

RegurgitationResult RegurgitationRate(
    const Model& model, const Vocabulary& vocab,
    std::span<const UnlearningExample> completion_prompts,
    std::span<const UnlearningExample> qa_prompts, Split split) {
  if (completion_prompts.empty() && qa_prompts.empty()) {
    throw std::invalid_argument("regurgitation: no prompts");
  }
  const bool invert = split == Split::kForget;
  RegurgitationResult result;
  result.completion_prompts = completion_prompts.size();
  result.qa_prompts = qa_prompts.size();

  for (const auto& ex : completion_prompts) {
    PromptScore ps;
    ps.id = ex.id;
    try {
      const double r = RougeL(GreedyAnswer(model, vocab, ex), ex.output);
      ps.exact = r == 1.0;
      ps.score = invert ? 1.0 - r : r;
    } catch (const std::exception& e) {
      ps.failed = true;
      ps.error = e.what();
      ps.score = 0.0;
    }
    result.constituents.push_back(ps.score);
    result.breakdown.push_back(std::move(ps));
  }

  if (!qa_prompts.empty()) {
    std::size_t exact = 0;
    double qa_term = 0.0;
    for (const auto& ex : qa_prompts) {
      PromptScore ps;
      ps.id = ex.id;
      ps.qa = true;
      try {
        ps.exact = NormalizeWhitespace(GreedyAnswer(model, vocab, ex)) ==
                   NormalizeWhitespace(ex.output);
        ps.score = ps.exact != invert ? 1.0 : 0.0;
      } catch (const std::exception& e) {
        ps.failed = true;
        ps.error = e.what();
      }
      if (ps.exact) ++exact;
      qa_term += ps.score;
      result.breakdown.push_back(std::move(ps));
    }
    const auto n = static_cast<double>(qa_prompts.size());
    result.qa_exact_match = static_cast<double>(exact) / n;
    result.constituents.push_back(qa_term / n);
  }
  result.score = HarmonicMean(result.constituents);
  return result;
}

double ExactMatchRate(const Model& model, const Vocabulary& vocab,
                      std::span<const UnlearningExample> examples) {
  if (examples.empty()) throw std::invalid_argument("exact_match: empty set");
  std::size_t hits = 0;
  for (const auto& ex : examples) {
    bool hit = false;
    try {
      hit = NormalizeWhitespace(GreedyAnswer(model, vocab, ex)) ==
            NormalizeWhitespace(ex.output);
    } catch (const std::exception&) {
      hit = false;
    }
    if (hit) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(examples.size());
}

double UtilityScore(const Model& model, const Vocabulary& vocab,
                    std::span<const UnlearningExample> utility) {
  if (utility.empty()) throw std::invalid_argument("utility: empty set");
  return ExactMatchRate(model, vocab, utility);
}

EvalReport Aggregate(const ReportParts& parts) {
  auto need = [](const std::optional<double>& v, const char* name) {
    if (!v)
      throw std::invalid_argument(std::string("aggregate: missing ") + name);
    return *v;
  };
  EvalReport r;
  r.forget_regurgitation =
      need(parts.forget_regurgitation, "forget_regurgitation");
  r.retain_regurgitation =
      need(parts.retain_regurgitation, "retain_regurgitation");
  r.forget_exact_match = need(parts.forget_exact_match, "forget_exact_match");
  r.retain_exact_match = need(parts.retain_exact_match, "retain_exact_match");
  r.mia_score = need(parts.mia_score, "mia_score");
  r.utility = need(parts.utility, "utility");
  RequireUnit(r.forget_regurgitation, "aggregate: forget_regurgitation");
  RequireUnit(r.retain_regurgitation, "aggregate: retain_regurgitation");
  RequireUnit(r.forget_exact_match, "aggregate: forget_exact_match");
  RequireUnit(r.retain_exact_match, "aggregate: retain_exact_match");
  RequireUnit(r.utility, "aggregate: utility");
  if (!(r.mia_score >= -1.0 && r.mia_score <= 1.0)) {
    throw std::invalid_argument("aggregate: mia_score must lie in [-1, 1]");
  }
  const double task[] = {r.forget_regurgitation, r.retain_regurgitation,
                         1.0 - r.forget_exact_match, r.retain_exact_match};
  r.task_aggregate = HarmonicMean(task);
  r.final_aggregate =
      (r.task_aggregate + (1.0 - std::abs(r.mia_score)) + r.utility) / 3.0;
  return r;
}

EvalReport Evaluate(const Model& model, const Vocabulary& vocab,
                    const DatasetBundle& data, const std::string& label) {
  auto partition = [](const std::vector<UnlearningExample>& split) {
    std::pair<std::vector<UnlearningExample>, std::vector<UnlearningExample>> p;
    for (const auto& ex : split) {
      (IsQaTask(ex.task) ? p.second : p.first).push_back(ex);
    }
    return p;
  };
  const auto [forget_completion, forget_qa] = partition(data.split.forget);
  const auto [retain_completion, retain_qa] = partition(data.split.retain);
  const auto forget = RegurgitationRate(model, vocab, forget_completion,
                                        forget_qa, Split::kForget);
  const auto retain = RegurgitationRate(model, vocab, retain_completion,
                                        retain_qa, Split::kRetain);

  const std::size_t max_length = model.config().max_length;
  const auto members = PackAll(data.mia_member, vocab, max_length);
  const auto nonmembers = PackAll(data.mia_nonmember, vocab, max_length);

  ReportParts parts;
  parts.forget_regurgitation = forget.score;
  parts.retain_regurgitation = retain.score;
  parts.forget_exact_match = ExactMatchRate(model, vocab, data.split.forget);
  parts.retain_exact_match = ExactMatchRate(model, vocab, data.split.retain);
  parts.mia_score = MiaScore(model, members, nonmembers);
  parts.utility = UtilityScore(model, vocab, data.utility);

  EvalReport report = Aggregate(parts);
  report.label = label;
  report.forget_completion_prompts = forget.completion_prompts;
  report.forget_qa_prompts = forget.qa_prompts;
  report.retain_completion_prompts = retain.completion_prompts;
  report.retain_qa_prompts = retain.qa_prompts;
  for (const auto* res : {&forget, &retain}) {
    for (const auto& ps : res->breakdown) {
      if (ps.failed) report.flagged_prompts.push_back(ps.id + ": " + ps.error);
    }
  }
  return report;
}

}  // namespace libu
