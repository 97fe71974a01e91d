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

// Acceptance suite: one PASS/FAIL line per exit criterion. Exits non-zero
// when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "libu/cli.h"
#include "libu/data.h"
#include "libu/evaluate.h"
#include "libu/model.h"
#include "libu/unlearn.h"
#include "oracles.h"
#include "test_util.h"

namespace libu {
namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double Seconds(Clock::time_point since) {
  return std::chrono::duration<double>(Clock::now() - since).count();
}

std::string Format(const char* fmt, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), fmt, args...);
  return buf;
}

std::string ReadText(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

// ---------------------------------------------------------------------------

Outcome GradientCorrectness() {
  const auto start = Clock::now();
  const DatasetBundle bundle = GenerateSyntheticCorpus(CorpusSpec{}, 0);
  const Vocabulary vocab = BuildVocabulary(bundle);
  ModelConfig config;
  config.vocab_size = vocab.size();
  config.seed = 1;
  Model model(config);
  testing::RandomizeAdapters(model, 2, 0.1);
  const std::size_t n = model.ParameterCount(ParameterScope::kTrainable);
  if (n > 50000) return {false, Format("%zu trainable scalars", n)};

  const auto batch =
      PackAll(std::span<const UnlearningExample>(bundle.split.forget).first(1),
              vocab, config.max_length);
  const auto analytic =
      BatchGradient(model, batch, ParameterScope::kTrainable).gradient;

  // Two-point central differences.
  const double h = 1e-4;
  ParameterVector theta = model.Parameters(ParameterScope::kTrainable);
  double worst = 0.0;
  std::size_t tiny = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = theta[i];
    theta[i] = x + h;
    model.SetParameters(ParameterScope::kTrainable, theta);
    const double up = MeanSequenceLoss(model, batch);
    theta[i] = x - h;
    model.SetParameters(ParameterScope::kTrainable, theta);
    const double down = MeanSequenceLoss(model, batch);
    theta[i] = x;
    const double numeric = (up - down) / (2 * h);
    if (std::abs(analytic[i]) < 1e-7) ++tiny;
    worst = std::max(worst, testing::RelativeError(analytic[i], numeric, 1e-7));
  }
  model.SetParameters(ParameterScope::kTrainable, theta);
  const double secs = Seconds(start);
  return {worst <= 1e-4 && secs < 60.0,
          Format("%zu coordinates, max relative error %.2e (<= 1e-4, %zu "
                 "below the 1e-7 floor), %.1f s (< 60 s)",
                 n, worst, tiny, secs)};
}

Outcome FisherOracle() {
  const DatasetBundle bundle = GenerateSyntheticCorpus(testing::TinySpec(), 3);
  const Vocabulary vocab = BuildVocabulary(bundle);
  ModelConfig config = testing::TinyConfig(vocab.size());
  config.d_model = 2;
  config.n_heads = 1;
  config.lora_rank = 1;
  Model model(config);
  testing::RandomizeAdapters(model, 4, 0.5);
  const std::size_t n = model.ParameterCount(ParameterScope::kTrainable);

  const auto retain = PackAll(bundle.split.retain, vocab, config.max_length);
  const auto batches = MakeBatches(retain, 2, 5, 0);
  const FisherDiagonal fisher = EstimateFisherDiagonal(model, batches);

  // Per-example gradients averaged by hand, squared, then averaged.
  std::vector<double> expected(n, 0.0);
  for (const Batch& batch : batches) {
    std::vector<double> g(n, 0.0);
    for (const PackedExample* ex : batch) {
      const PackedExample* one[] = {ex};
      const auto ge =
          BatchGradient(model, std::span<const PackedExample* const>(one),
                        ParameterScope::kTrainable)
              .gradient;
      for (std::size_t i = 0; i < n; ++i) g[i] += ge[i] / batch.size();
    }
    for (std::size_t i = 0; i < n; ++i) expected[i] += g[i] * g[i];
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    expected[i] /= static_cast<double>(batches.size());
    worst = std::max(worst, std::abs(fisher.values[i] - expected[i]));
  }
  return {n <= 50 && worst <= 1e-12,
          Format("%zu parameters, %zu batches, max abs error %.2e (<= 1e-12)",
                 n, batches.size(), worst)};
}

using testing::Vec;

Outcome InfluenceLaw() {
  const double lambda = 1e-3;
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  bool exact = true, monotone = true;
  const bool trivial =
      InfluenceWeights(FisherDiagonal{Vec({0.0})}, lambda)[0] == 1000.0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> f(16);
    for (double& v : f) v = std::pow(10.0, -8.0 + 9.0 * u(rng));
    std::sort(f.begin(), f.end());
    const ParameterVector w = InfluenceWeights(FisherDiagonal{Vec(f)}, lambda);
    for (std::size_t i = 0; i < f.size(); ++i) {
      exact = exact && w[i] == 1.0 / (f[i] + lambda);
      if (i > 0 && f[i] > f[i - 1]) monotone = monotone && w[i] < w[i - 1];
    }
  }
  return {trivial && exact && monotone,
          Format("w(F=0) = 1000: %s; exact 1/(F+lambda): %s; strictly "
                 "decreasing over 1000 vectors: %s",
                 trivial ? "yes" : "no", exact ? "yes" : "no",
                 monotone ? "yes" : "no")};
}

Outcome SophiaContracts() {
  std::mt19937_64 rng(23);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::exponential_distribution<double> expo(1.0);
  const double eta = 0.01;

  // 10k (g, h) draws spread over many orders of magnitude.
  SophiaOptions o;
  o.rho = 0.5;
  o.seed = 3;
  const std::size_t dim = 100;
  SophiaState state(dim, o);
  bool clipped = true;
  double largest = 0.0;
  for (int round = 0; round < 100; ++round) {
    std::vector<double> g(dim);
    for (double& v : g) v = normal(rng) * std::pow(10.0, normal(rng) * 3);
    for (double& h : state.mutable_hessian()) {
      h = expo(rng) * std::pow(10.0, normal(rng) * 3);
    }
    ParameterVector theta = Vec(std::vector<double>(dim, 0.0));
    state.Step(theta, Vec(g), eta);
    for (std::size_t i = 0; i < dim; ++i) {
      largest = std::max(largest, std::abs(theta[i]));
      clipped = clipped && std::abs(theta[i]) <= eta * o.clip;
    }
  }

  // h = 0 with the refresh gated off: the step is -eta * clamp(g / eps).
  SophiaOptions off = o;
  off.rho = 1e-300;
  SophiaState zero(dim, off);
  bool floor_ok = true;
  for (int round = 0; round < 10; ++round) {
    std::vector<double> g(dim);
    for (double& v : g) v = normal(rng) * 1e-8;
    ParameterVector theta = Vec(std::vector<double>(dim, 0.0));
    zero.Step(theta, Vec(g), eta);
    for (std::size_t i = 0; i < dim; ++i) {
      const double expected =
          -eta * std::clamp(g[i] / off.epsilon, -off.clip, off.clip);
      floor_ok = floor_ok && theta[i] == expected;
    }
  }
  floor_ok = floor_ok && zero.hessian_updates() == 0;

  bool binomial = true;
  std::string counts;
  for (double rho : {0.06, 0.1, 0.5}) {
    SophiaOptions go;
    go.rho = rho;
    go.seed = 41;
    SophiaState s(1, go);
    const std::vector<double> grad = {1.0};
    for (int step = 0; step < 1000; ++step) s.UpdateHessian(grad);
    const double mean = 1000 * rho;
    const double sigma = std::sqrt(1000 * rho * (1 - rho));
    const double count = static_cast<double>(s.hessian_updates());
    binomial = binomial && std::abs(count - mean) <= 3 * sigma;
    counts += Format(" rho=%.2f:%zu", rho, s.hessian_updates());
  }
  return {clipped && floor_ok && binomial,
          Format("max |step| %.4g <= %.4g over 10000 draws; h=0 floor %s; "
                 "refreshes per 1000 steps within 3 sigma:%s",
                 largest, eta * o.clip, floor_ok ? "exact" : "wrong",
                 counts.c_str())};
}

Outcome AccumulationEquivalence() {
  const DatasetBundle bundle = GenerateSyntheticCorpus(CorpusSpec{}, 0);
  const Vocabulary vocab = BuildVocabulary(bundle);
  ModelConfig config;
  config.vocab_size = vocab.size();
  Model model(config);
  testing::RandomizeAdapters(model, 8, 0.1);
  const auto forget = PackAll(bundle.split.forget, vocab, config.max_length);
  const auto micro = MakeBatches(forget, 4, 2, 0);
  const std::size_t k = micro.size();
  const AccumulatedGradient acc = AccumulateGradients(model, micro, k, -1.0);
  Batch all;
  for (const Batch& b : micro) all.insert(all.end(), b.begin(), b.end());
  const auto whole =
      BatchGradient(model, std::span<const PackedExample* const>(all),
                    ParameterScope::kTrainable, -1.0);
  double worst = 0.0;
  for (std::size_t i = 0; i < whole.gradient.size(); ++i) {
    worst = std::max(worst, std::abs(acc.gradient[i] - whole.gradient[i]));
  }
  return {acc.effective_k == k && worst <= 1e-10,
          Format("k=%zu micro-batches of 4, max abs difference %.2e (<= 1e-10)",
                 k, worst)};
}

Outcome MetricOracles() {
  std::mt19937_64 rng(31);
  std::uniform_int_distribution<std::size_t> len(0, 10);
  std::uniform_int_distribution<int> pick(0, 4);
  auto tokens = [&](std::size_t n) {
    std::vector<std::string> t;
    for (std::size_t i = 0; i < n; ++i)
      t.push_back(std::string(1, 'a' + pick(rng)));
    return t;
  };
  int lcs_mismatch = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto a = tokens(len(rng));
    const auto b = tokens(len(rng));
    if (LcsLength(a, b) != testing::BruteForceLcs(a, b)) ++lcs_mismatch;
  }
  const double hm = HarmonicMean(std::vector<double>{0.5, 1.0});
  const bool hm_ok = std::abs(hm - 2.0 / 3.0) <= 1e-12;

  std::uniform_int_distribution<std::size_t> size(1, 200);
  std::uniform_int_distribution<int> coarse(0, 30);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> m(size(rng)), n(size(rng));
    for (double& v : m) v = coarse(rng) * 0.1;
    for (double& v : n) v = coarse(rng) * 0.1 + 0.4;
    const double auc = testing::MannWhitneyAuc(m, n);
    worst =
        std::max(worst, std::abs(MiaScoreFromLosses(m, n) - (auc - 0.5) / 0.5));
  }
  return {lcs_mismatch == 0 && hm_ok && worst <= 1e-12,
          Format("LCS mismatches %d/1000; harmonic_mean([0.5, 1]) = %.15f; "
                 "MIA vs rank statistic max error %.2e (<= 1e-12)",
                 lcs_mismatch, hm, worst)};
}

Outcome PresetFidelity() {
  struct Row {
    const char* name;
    std::size_t epochs;
    double lr;
    std::size_t batch, rank, accum, max_len;
    double damping, rho, gamma;
  };
  const Row rows[] = {
      {"setup1", 6, 4e-5, 4, 16, 4, 1024, 5e-5, 0.1, 1.1},
      {"setup2", 5, 3e-5, 6, 24, 6, 1024, 8e-4, 0.08, 1.15},
      {"setup3", 4, 2e-5, 4, 16, 8, 1024, 1e-3, 0.06, 1.2},
  };
  std::string bad;
  for (const Row& r : rows) {
    const UnlearnConfig c = PresetConfig(r.name);
    const bool same = c.num_epochs == r.epochs && c.learning_rate == r.lr &&
                      c.batch_size == r.batch && c.lora_rank == r.rank &&
                      c.accumulation_steps == r.accum &&
                      c.max_length == r.max_len &&
                      c.damping_factor == r.damping && c.sophia_rho == r.rho &&
                      c.sophia_gamma == r.gamma;
    if (!same) bad += std::string(" ") + r.name;
  }
  return {bad.empty(),
          bad.empty() ? "setup1, setup2, setup3 match" : "mismatch:" + bad};
}

// ---------------------------------------------------------------------------
// Pipeline criteria share one seeded run through the command layer.

struct Pipeline {
  fs::path root;
  cli::ExperimentConfig config;
  EvalReport memorized, libu, ga;
  std::string memorized_json, libu_json;
  std::string memorize_message;
  double seconds = 0.0;
};

Pipeline RunPipeline(const fs::path& root, bool with_baseline) {
  Pipeline p;
  p.root = root;
  p.config = cli::ResolveConfig("setup3", std::nullopt, {}, false);
  p.config.seed = 7;
  const auto start = Clock::now();
  cli::CmdGenCorpus({p.config, root / "data", true});
  p.memorize_message =
      cli::CmdMemorize({p.config, root / "data", root / "mem"});
  cli::CmdEval({root / "mem" / cli::kCheckpointFile, root / "data",
                root / "eval_mem", "memorized"});
  cli::CmdUnlearn({p.config, root / "mem" / cli::kCheckpointFile, root / "data",
                   root / "libu"});
  cli::CmdEval({root / "libu" / cli::kCheckpointFile, root / "data",
                root / "eval_libu", "libu"});
  p.seconds = Seconds(start);
  p.memorized_json = ReadText(root / "eval_mem" / "report.json");
  p.libu_json = ReadText(root / "eval_libu" / "report.json");
  p.memorized = ReportFromJson(p.memorized_json, "memorized");
  p.libu = ReportFromJson(p.libu_json, "libu");
  if (with_baseline) {
    cli::ExperimentConfig ga = p.config;
    ga.algorithm = "ga";
    cli::CmdUnlearn(
        {ga, root / "mem" / cli::kCheckpointFile, root / "data", root / "ga"});
    cli::CmdEval({root / "ga" / cli::kCheckpointFile, root / "data",
                  root / "eval_ga", "ga"});
    p.ga = ReadReport(root / "eval_ga" / "report.json");
  }
  return p;
}

Outcome EndToEnd(const Pipeline& p) {
  const EvalReport& m = p.memorized;
  const EvalReport& u = p.libu;
  const bool memorized =
      m.forget_exact_match >= 0.99 && m.retain_exact_match >= 0.99;
  const bool forgot = u.forget_exact_match <= 0.20;
  const bool kept = u.retain_exact_match >= 0.80;
  const bool mia = std::abs(u.mia_score) < std::abs(m.mia_score);
  const bool fast = p.seconds < 600.0;
  return {memorized && forgot && kept && mia && fast,
          Format("memorized EM forget %.3f retain %.3f (>= 0.99); after LIBU "
                 "forget EM %.3f (<= 0.20), retain EM %.3f (>= 0.80), |mia| "
                 "%.3f -> %.3f (must decrease); %.0f s (< 600 s)",
                 m.forget_exact_match, m.retain_exact_match,
                 u.forget_exact_match, u.retain_exact_match,
                 std::abs(m.mia_score), std::abs(u.mia_score), p.seconds)};
}

Outcome ComparativeOrdering(const Pipeline& p) {
  const double libu_drop = p.memorized.utility - p.libu.utility;
  const double ga_drop = p.memorized.utility - p.ga.utility;
  const bool utility = ga_drop > libu_drop;
  const bool retain = p.libu.retain_regurgitation > p.ga.retain_regurgitation;
  const BaselineConfig b = cli::BaselineFor([&] {
    cli::ExperimentConfig c = p.config;
    c.algorithm = "ga";
    return c;
  }());
  return {utility && retain,
          Format("%zu epochs each, GA lr %.4g = LIBU eta_eff/lambda; utility "
                 "drop GA %.3f vs LIBU %.3f; retain regurgitation LIBU %.3f vs "
                 "GA %.3f",
                 b.epochs, b.learning_rate, ga_drop, libu_drop,
                 p.libu.retain_regurgitation, p.ga.retain_regurgitation)};
}

// Same checkpoint, more Phase-2 epochs and a heavier retain term. Printed as
// information only.
std::string LongerRefinement(const Pipeline& p) {
  cli::ExperimentConfig c = p.config;
  cli::ApplySetting(c, "PHASE2_EPOCHS", "40");
  cli::ApplySetting(c, "PHASE2_RETAIN_WEIGHT", "10");
  cli::ApplySetting(c, "ETA_SCALE", "200");
  const auto start = Clock::now();
  cli::CmdUnlearn({c, p.root / "mem" / cli::kCheckpointFile, p.root / "data",
                   p.root / "libu_long"});
  cli::CmdEval({p.root / "libu_long" / cli::kCheckpointFile, p.root / "data",
                p.root / "eval_long", "libu_long"});
  const EvalReport r = ReadReport(p.root / "eval_long" / "report.json");
  return Format(
      "setup3 with 40 Phase-2 epochs, retain weight 10, eta scale "
      "200: forget EM %.3f, retain EM %.3f, mia %.3f, utility %.3f "
      "(%.0f s)",
      r.forget_exact_match, r.retain_exact_match, r.mia_score, r.utility,
      Seconds(start));
}

int failures = 0;

void Report(const char* name, const std::function<Outcome()>& check) {
  Outcome o;
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  if (!o.pass) ++failures;
  std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
  std::fflush(stdout);
}

}  // namespace
}  // namespace libu

int main() {
  using namespace libu;
  Report("gradient_correctness", GradientCorrectness);
  Report("fisher_oracle", FisherOracle);
  Report("influence_weight_law", InfluenceLaw);
  Report("sophia_contracts", SophiaContracts);
  Report("accumulation_equivalence", AccumulationEquivalence);

  testing::TempDir first("acceptance_a");
  testing::TempDir second("acceptance_b");
  std::optional<Pipeline> run;
  std::string pipeline_error;
  try {
    run = RunPipeline(first.path(), true);
  } catch (const std::exception& e) {
    pipeline_error = e.what();
  }
  auto need_run = [&](auto fn) {
    return [&, fn] {
      if (!run) return Outcome{false, "pipeline failed: " + pipeline_error};
      return fn(*run);
    };
  };
  Report("end_to_end_unlearning", need_run(EndToEnd));
  Report("comparative_ordering", need_run(ComparativeOrdering));
  Report("metric_oracles", MetricOracles);
  Report("preset_fidelity", PresetFidelity);
  Report("reproducibility", need_run([&](const Pipeline& a) {
           const Pipeline b = RunPipeline(second.path(), false);
           const bool same = a.memorized_json == b.memorized_json &&
                             a.libu_json == b.libu_json;
           return Outcome{same, same ? "memorized and unlearned reports are "
                                       "byte-identical across two runs"
                                     : "reports differ between runs"};
         }));
  if (run) {
    try {
      std::printf("info: %s\n", LongerRefinement(*run).c_str());
    } catch (const std::exception& e) {
      std::printf("info: longer refinement failed: %s\n", e.what());
    }
  }
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
