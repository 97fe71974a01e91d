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

#include "libu/unlearn.h"

#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <memory>
#include <random>
#include <stdexcept>

#include "libu/data.h"
#include "libu/model.h"
#include "test_util.h"

namespace libu {
namespace {

using testing::Vec;

// Tiny corpus and a model whose adapters are non-zero.
class ToyProblem : public ::testing::Test {
 protected:
  void SetUp() override {
    bundle_ = GenerateSyntheticCorpus(testing::TinySpec(), 3);
    vocab_ = BuildVocabulary(bundle_);
    model_ = std::make_unique<Model>(testing::TinyConfig(vocab_.size()));
    testing::RandomizeAdapters(*model_, 4);
    splits_ = PackSplits(bundle_.split, vocab_, 24);
  }

  DatasetBundle bundle_;
  Vocabulary vocab_;
  std::unique_ptr<Model> model_;
  PackedSplits splits_;
};

// ---------------------------------------------------------------------------

TEST(MakeBatchesTest, PointsIntoExamples) {
  std::vector<PackedExample> ex(5);
  for (std::size_t i = 0; i < ex.size(); ++i) ex[i].attention_length = i;
  const auto b = MakeBatches(ex, 2, 1, 0);
  ASSERT_EQ(b.size(), 3u);
  EXPECT_EQ(b.back().size(), 1u);
  const auto idx = Batches(5, 2, 1, 0);
  for (std::size_t i = 0; i < b.size(); ++i) {
    for (std::size_t j = 0; j < b[i].size(); ++j) {
      EXPECT_EQ(b[i][j], &ex[idx[i][j]]);
    }
  }
}

// ---------------------------------------------------------------------------

TEST_F(ToyProblem, FisherSingleBatchIsSquaredGradient) {
  const auto batches = MakeBatches(splits_.retain, 4, 0, 0);
  ASSERT_EQ(batches.size(), 1u);
  const auto g = BatchGradient(*model_, batches[0], ParameterScope::kTrainable);
  const FisherDiagonal f = EstimateFisherDiagonal(*model_, batches);
  for (std::size_t i = 0; i < g.gradient.size(); ++i) {
    EXPECT_DOUBLE_EQ(f.values[i], g.gradient[i] * g.gradient[i]);
  }
}

TEST_F(ToyProblem, FisherMatchesMeanOfSquaredPerBatchGradients) {
  const auto batches = MakeBatches(splits_.retain, 1, 0, 0);
  const Model before = *model_;
  const FisherDiagonal f = EstimateFisherDiagonal(*model_, batches);
  EXPECT_TRUE(*model_ == before);
  std::vector<double> oracle(f.values.size(), 0.0);
  for (const auto& batch : batches) {
    const PackedExample& ex = *batch[0];
    const auto numeric = testing::FiniteDifferenceGradient(
        *model_, ParameterScope::kTrainable,
        [&](const Model& m) { return m.SequenceLoss(ex); });
    for (std::size_t i = 0; i < oracle.size(); ++i) {
      oracle[i] +=
          numeric[i] * numeric[i] / static_cast<double>(batches.size());
    }
  }
  for (std::size_t i = 0; i < oracle.size(); ++i) {
    EXPECT_NEAR(f.values[i], oracle[i], 1e-9 + 1e-6 * oracle[i]);
    EXPECT_GE(f.values[i], 0.0);
  }
}

TEST_F(ToyProblem, FisherIgnoresGradientSign) {
  const auto batches = MakeBatches(splits_.retain, 2, 0, 0);
  const FisherDiagonal once = EstimateFisherDiagonal(*model_, batches);
  std::vector<Batch> doubled = batches;
  doubled.insert(doubled.end(), batches.begin(), batches.end());
  const FisherDiagonal twice = EstimateFisherDiagonal(*model_, doubled);
  for (std::size_t i = 0; i < once.values.size(); ++i) {
    EXPECT_NEAR(once.values[i], twice.values[i], 1e-15);
  }
  EXPECT_THROW(EstimateFisherDiagonal(*model_, {}), std::invalid_argument);
}

// ---------------------------------------------------------------------------

TEST(InfluenceWeightsTest, AnalyticValues) {
  const ParameterVector w =
      InfluenceWeights(FisherDiagonal{Vec({0.0, 4.0})}, 1e-3);
  EXPECT_DOUBLE_EQ(w[0], 1000.0);
  EXPECT_DOUBLE_EQ(w[1], 1.0 / 4.001);
  EXPECT_NEAR(w[1], 0.24994, 1e-5);
}

TEST(InfluenceWeightsTest, RejectsBadInputs) {
  EXPECT_THROW(InfluenceWeights(FisherDiagonal{Vec({1.0})}, 0.0),
               std::invalid_argument);
  EXPECT_THROW(InfluenceWeights(FisherDiagonal{Vec({1.0})}, -1.0),
               std::invalid_argument);
  EXPECT_THROW(InfluenceWeights(FisherDiagonal{Vec({-1.0})}, 1e-3),
               std::invalid_argument);
}

TEST(InfluenceWeightsTest, StrictlyDecreasingInFisher) {
  std::mt19937_64 rng(17);
  std::exponential_distribution<double> fisher(1e3);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> f(16);
    for (double& v : f) v = fisher(rng);
    const double lambda = 1e-4 + 1e-3 * static_cast<double>(trial % 10);
    const ParameterVector w = InfluenceWeights(FisherDiagonal{Vec(f)}, lambda);
    for (std::size_t i = 0; i < f.size(); ++i) {
      EXPECT_EQ(w[i], 1.0 / (f[i] + lambda));
      for (std::size_t j = 0; j < f.size(); ++j) {
        if (f[i] > f[j]) {
          EXPECT_LT(w[i], w[j]);
        }
      }
    }
  }
}

TEST(InfluenceUpdateTest, Arithmetic) {
  const ParameterVector t =
      InfluenceUpdate(Vec({1.0}), Vec({0.5}), Vec({2.0}), 0.1);
  EXPECT_DOUBLE_EQ(t[0], 0.9);
  const ParameterVector same =
      InfluenceUpdate(Vec({1.0, 2.0}), Vec({3.0, 4.0}), Vec({0.0, 0.0}), 0.5);
  EXPECT_EQ(same, Vec({1.0, 2.0}));
  EXPECT_THROW(InfluenceUpdate(Vec({1.0}), Vec({1.0, 2.0}), Vec({1.0}), 0.1),
               std::invalid_argument);
}

TEST(InfluenceUpdateTest, RetainCriticalCoordinateMovesLeast) {
  const ParameterVector w =
      InfluenceWeights(FisherDiagonal{Vec({0.0, 0.5, 50.0})}, 1e-3);
  const ParameterVector theta = Vec({0.0, 0.0, 0.0});
  const ParameterVector next =
      InfluenceUpdate(theta, w, Vec({1.0, 1.0, 1.0}), 0.01);
  EXPECT_LT(std::abs(next[2]), std::abs(next[1]));
  EXPECT_LT(std::abs(next[1]), std::abs(next[0]));
}

TEST(InfluenceUpdateTest, RetainProtectionBound) {
  // Coordinates 0..3 carry retain gradients (Fisher >= f_min); 4..7 only
  // forget gradients. Forget gradients have equal magnitude everywhere.
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const double lambda = 1e-4 + 1e-2 * u(rng);
    const double f_min = 1e-3 + u(rng);
    std::vector<double> f(8, 0.0);
    for (int i = 0; i < 4; ++i) f[i] = f_min * (1.0 + 3.0 * u(rng));
    const double mag = 0.1 + u(rng);
    std::vector<double> g(8);
    for (int i = 0; i < 8; ++i) g[i] = (i % 2 ? -mag : mag);
    const auto w = InfluenceWeights(FisherDiagonal{Vec(f)}, lambda);
    const auto next =
        InfluenceUpdate(Vec(std::vector<double>(8, 0.0)), w, Vec(g), 0.3);
    const double bound = lambda / (f_min + lambda);
    for (int r = 0; r < 4; ++r) {
      for (int k = 4; k < 8; ++k) {
        EXPECT_LE(std::abs(next[r]), bound * std::abs(next[k]) * (1 + 1e-12));
      }
    }
  }
}

TEST_F(ToyProblem, MeanForgetGradientAveragesBatches) {
  const auto batches = MakeBatches(splits_.forget, 2, 1, 0);
  const ParameterVector mean = MeanForgetGradient(*model_, batches);
  std::vector<double> oracle(mean.size(), 0.0);
  for (const auto& b : batches) {
    const auto g = BatchGradient(*model_, b, ParameterScope::kTrainable);
    for (std::size_t i = 0; i < oracle.size(); ++i) oracle[i] += g.gradient[i];
  }
  for (std::size_t i = 0; i < oracle.size(); ++i) {
    EXPECT_NEAR(mean[i], oracle[i] / static_cast<double>(batches.size()),
                1e-12);
  }
  const std::vector<Batch> one = {batches[0]};
  EXPECT_EQ(
      MeanForgetGradient(*model_, one),
      BatchGradient(*model_, batches[0], ParameterScope::kTrainable).gradient);
  std::vector<Batch> twice = batches;
  twice.insert(twice.end(), batches.begin(), batches.end());
  const ParameterVector dup = MeanForgetGradient(*model_, twice);
  for (std::size_t i = 0; i < dup.size(); ++i)
    EXPECT_NEAR(dup[i], mean[i], 1e-15);
  EXPECT_THROW(MeanForgetGradient(*model_, {}), std::invalid_argument);
}

// ---------------------------------------------------------------------------

TEST_F(ToyProblem, AccumulationWithOneStepIsSingleBatch) {
  const auto batches = MakeBatches(splits_.forget, 2, 1, 0);
  const auto acc = AccumulateGradients(*model_, batches, 1);
  EXPECT_EQ(acc.effective_k, 1u);
  EXPECT_EQ(
      acc.gradient,
      BatchGradient(*model_, batches[0], ParameterScope::kTrainable).gradient);
}

TEST_F(ToyProblem, AccumulationEqualsConcatenatedBatch) {
  std::vector<PackedExample> all = splits_.forget;
  all.insert(all.end(), splits_.retain.begin(), splits_.retain.end());
  const auto micro = MakeBatches(all, 2, 3, 0);
  ASSERT_EQ(micro.size(), 4u);
  const Model before = *model_;
  const auto acc = AccumulateGradients(*model_, micro, 4);
  EXPECT_TRUE(*model_ == before);
  EXPECT_EQ(acc.effective_k, 4u);
  Batch concat;
  for (const auto& b : micro) concat.insert(concat.end(), b.begin(), b.end());
  const auto whole = BatchGradient(*model_, concat, ParameterScope::kTrainable);
  EXPECT_NEAR(acc.mean_loss, whole.loss, 1e-12);
  for (std::size_t i = 0; i < whole.gradient.size(); ++i) {
    EXPECT_NEAR(acc.gradient[i], whole.gradient[i], 1e-10);
  }
  const auto ascent = AccumulateGradients(*model_, micro, 4, -1.0);
  EXPECT_EQ(ascent.gradient[3], -acc.gradient[3]);
}

TEST_F(ToyProblem, ShortFinalGroupReportsEffectiveK) {
  const auto micro = MakeBatches(splits_.forget, 1, 0, 0);
  const auto groups = AccumulationGroups(micro, 3);
  ASSERT_EQ(groups.size(), 2u);
  EXPECT_EQ(groups[0].size(), 3u);
  EXPECT_EQ(groups[1].size(), 1u);
  EXPECT_EQ(AccumulateGradients(*model_, groups[1], 3).effective_k, 1u);
  EXPECT_THROW(AccumulateGradients(*model_, micro, 0), std::invalid_argument);
  EXPECT_THROW(AccumulationGroups(micro, 0), std::invalid_argument);
}

// ---------------------------------------------------------------------------

TEST(SophiaTest, DegenerateEmaAndDecay) {
  SophiaOptions o;
  o.rho = 1.0;
  o.beta = 0.0;
  SophiaState s(1, o);
  EXPECT_TRUE(s.UpdateHessian(std::vector<double>{3.0}));
  EXPECT_DOUBLE_EQ(s.hessian()[0], 9.0);

  o.beta = 0.99;
  SophiaState d(1, o);
  d.mutable_hessian()[0] = 1.0;
  d.UpdateHessian(std::vector<double>{0.0});
  EXPECT_DOUBLE_EQ(d.hessian()[0], 0.99);
  EXPECT_EQ(d.step(), 1u);
}

TEST(SophiaTest, GatedUpdateCountWithinBinomialBounds) {
  for (double rho : {0.06, 0.1, 0.5}) {
    SophiaOptions o;
    o.rho = rho;
    o.seed = 123;
    SophiaState s(2, o);
    for (int i = 0; i < 1000; ++i)
      s.UpdateHessian(std::vector<double>{1.0, 2.0});
    const double mean = 1000 * rho;
    const double sigma = std::sqrt(1000 * rho * (1 - rho));
    EXPECT_EQ(s.step(), 1000u);
    EXPECT_GE(static_cast<double>(s.hessian_updates()), mean - 3 * sigma);
    EXPECT_LE(static_cast<double>(s.hessian_updates()), mean + 3 * sigma);
  }
}

TEST(SophiaTest, DenominatorFloor) {
  EXPECT_DOUBLE_EQ(SophiaDirection(1e-8, 0.0, 1.2, 1e-8, 1.0), 1.0);
  EXPECT_DOUBLE_EQ(SophiaDirection(10.0, 0.0, 1.2, 1e-8, 1.0), 1.0);
  EXPECT_DOUBLE_EQ(SophiaDirection(-10.0, 0.0, 1.2, 1e-8, 1.0), -1.0);
  EXPECT_DOUBLE_EQ(SophiaDirection(3e-9, 0.0, 1.2, 1e-8, 1.0), 0.3);
}

TEST(SophiaTest, GammaRatioLaw) {
  const double g = 0.5, h = 2.0;
  const double a = SophiaDirection(g, h, 1.2, 1e-8, 1.0);
  const double b = SophiaDirection(g, h, 1.1, 1e-8, 1.0);
  EXPECT_NEAR(a / b, 1.1 / 1.2, 1e-15);
}

TEST(SophiaTest, StepWithZeroHessianUsesFloor) {
  SophiaOptions o;
  o.rho = 1e-12;
  SophiaState s(2, o);
  ParameterVector theta = Vec({1.0, 1.0});
  s.Step(theta, Vec({1e-8, 10.0}), 0.5);
  EXPECT_DOUBLE_EQ(theta[0], 0.5);
  EXPECT_DOUBLE_EQ(theta[1], 0.5);
}

TEST(SophiaTest, StepNeverExceedsClipBound) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n(0.0, 1.0);
  std::exponential_distribution<double> e(1.0);
  SophiaOptions o;
  o.rho = 0.3;
  o.clip = 0.7;
  o.seed = 2;
  const std::size_t dim = 100;
  SophiaState s(dim, o);
  const double eta = 0.05;
  for (int step = 0; step < 100; ++step) {
    std::vector<double> g(dim);
    for (double& v : g) v = n(rng) * std::pow(10.0, n(rng) * 3);
    for (double& h : s.mutable_hessian())
      h = e(rng) * std::pow(10.0, n(rng) * 3);
    ParameterVector theta = Vec(std::vector<double>(dim, 0.0));
    s.Step(theta, Vec(g), eta);
    for (std::size_t i = 0; i < dim; ++i) {
      EXPECT_LE(std::abs(theta[i]), eta * o.clip * (1 + 1e-15));
      EXPECT_GE(s.hessian()[i], 0.0);
    }
  }
}

TEST(SophiaTest, InvalidOptionsRejected) {
  SophiaOptions o;
  o.rho = 0.0;
  EXPECT_THROW(SophiaState(1, o), std::invalid_argument);
  o = SophiaOptions{};
  o.epsilon = 0.0;
  EXPECT_THROW(SophiaState(1, o), std::invalid_argument);
  o = SophiaOptions{};
  o.beta = 1.0;
  EXPECT_THROW(SophiaState(1, o), std::invalid_argument);
}

// ---------------------------------------------------------------------------

TEST(PresetTest, TableValues) {
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
  for (const Row& r : rows) {
    const UnlearnConfig c = PresetConfig(r.name);
    EXPECT_EQ(c.num_epochs, r.epochs) << r.name;
    EXPECT_EQ(c.learning_rate, r.lr) << r.name;
    EXPECT_EQ(c.batch_size, r.batch) << r.name;
    EXPECT_EQ(c.lora_rank, r.rank) << r.name;
    EXPECT_EQ(c.accumulation_steps, r.accum) << r.name;
    EXPECT_EQ(c.max_length, r.max_len) << r.name;
    EXPECT_EQ(c.damping_factor, r.damping) << r.name;
    EXPECT_EQ(c.sophia_rho, r.rho) << r.name;
    EXPECT_EQ(c.sophia_gamma, r.gamma) << r.name;
    EXPECT_NO_THROW(ValidateUnlearnConfig(c));
  }
  EXPECT_EQ(PresetNames(),
            (std::vector<std::string>{"setup1", "setup2", "setup3"}));
  EXPECT_THROW(PresetConfig("setup4"), std::invalid_argument);
}

TEST(UnlearnConfigTest, ValidationNamesField) {
  UnlearnConfig c;
  c.damping_factor = 0.0;
  try {
    ValidateUnlearnConfig(c);
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("DAMPING_FACTOR"), std::string::npos);
  }
  c = UnlearnConfig{};
  c.sophia_rho = 1.5;
  EXPECT_THROW(ValidateUnlearnConfig(c), std::invalid_argument);
  c = UnlearnConfig{};
  c.eta_scale = -1.0;
  EXPECT_THROW(ValidateUnlearnConfig(c), std::invalid_argument);
  c = UnlearnConfig{};
  c.phase1_epochs = 2;
  EXPECT_EQ(c.Phase1Epochs(), 2u);
  EXPECT_EQ(c.Phase2Epochs(), c.num_epochs);
  EXPECT_DOUBLE_EQ(c.EffectiveLearningRate(), c.learning_rate * c.eta_scale);
}

// ---------------------------------------------------------------------------

UnlearnConfig FastConfig() {
  UnlearnConfig c = PresetConfig("setup3");
  c.num_epochs = 2;
  c.batch_size = 2;
  c.accumulation_steps = 2;
  c.seed = 9;
  return c;
}

TEST_F(ToyProblem, ZeroLearningRateLeavesModelBitwiseUnchanged) {
  UnlearnConfig c = FastConfig();
  c.eta_scale = 0.0;
  const Model before = *model_;
  RunLog log;
  RunLibu(*model_, splits_, c, &log);
  EXPECT_TRUE(*model_ == before);
  EXPECT_EQ(log.records.size(), 4u);
}

TEST_F(ToyProblem, RunIsDeterministicAndFreezesBase) {
  const UnlearnConfig c = FastConfig();
  const Model before = *model_;
  Model a = *model_, b = *model_;
  RunLog la, lb;
  RunLibu(a, splits_, c, &la);
  RunLibu(b, splits_, c, &lb);
  EXPECT_TRUE(a == b);
  EXPECT_EQ(a.Parameters(ParameterScope::kBase),
            before.Parameters(ParameterScope::kBase));
  EXPECT_NE(a.Parameters(ParameterScope::kAdapters),
            before.Parameters(ParameterScope::kAdapters));
  ASSERT_EQ(la.records.size(), 4u);
  EXPECT_EQ(la.records[0].phase, "phase1");
  EXPECT_EQ(la.records[3].phase, "phase2");
  for (std::size_t i = 0; i < la.records.size(); ++i) {
    EXPECT_EQ(la.records[i].retain_loss, lb.records[i].retain_loss);
    EXPECT_GT(la.records[i].update_norm, 0.0);
  }
}

TEST_F(ToyProblem, PhaseTwoStepsRespectClip) {
  UnlearnConfig c = FastConfig();
  c.phase1_epochs = 0;
  c.phase2_epochs = 1;
  c.accumulation_steps = 64;
  const ParameterVector before = model_->Parameters(ParameterScope::kTrainable);
  RunLibu(*model_, splits_, c, nullptr);
  const ParameterVector after = model_->Parameters(ParameterScope::kTrainable);
  const double bound = c.EffectiveLearningRate() * c.sophia_clip;
  for (std::size_t i = 0; i < after.size(); ++i) {
    EXPECT_LE(std::abs(after[i] - before[i]), bound * (1 + 1e-12));
  }
}

TEST_F(ToyProblem, PhaseOneRaisesForgetLoss) {
  UnlearnConfig c = FastConfig();
  c.phase2_epochs = 0;
  c.eta_scale = 10.0;
  const double before = MeanSequenceLoss(*model_, splits_.forget);
  RunLibu(*model_, splits_, c, nullptr);
  EXPECT_GT(MeanSequenceLoss(*model_, splits_.forget), before);
}

TEST_F(ToyProblem, EmptyForgetIsLoggedNoOp) {
  PackedSplits data{splits_.retain, {}};
  const Model before = *model_;
  RunLog log;
  RunLibu(*model_, data, FastConfig(), &log);
  EXPECT_TRUE(*model_ == before);
  ASSERT_EQ(log.warnings.size(), 1u);
  EXPECT_TRUE(log.records.empty());
}

TEST_F(ToyProblem, ExpiredDeadlineAbortsRun) {
  RunLog log;
  const Deadline expired(std::chrono::duration<double>(0.0));
  EXPECT_THROW(RunLibu(*model_, splits_, FastConfig(), &log, expired),
               BudgetExceeded);
  EXPECT_TRUE(log.aborted);
  EXPECT_FALSE(Deadline().Expired());
}

TEST_F(ToyProblem, AdapterRankChangeKeepsBase) {
  Model fresh(testing::TinyConfig(vocab_.size()));
  const Model wider = WithAdapterRank(fresh, 4);
  EXPECT_EQ(wider.config().lora_rank, 4u);
  EXPECT_EQ(wider.Parameters(ParameterScope::kBase),
            fresh.Parameters(ParameterScope::kBase));
  const std::vector<int> tokens = {2, 3, 4};
  EXPECT_EQ(wider.Logits(tokens), fresh.Logits(tokens));
  EXPECT_TRUE(WithAdapterRank(fresh, fresh.config().lora_rank) == fresh);
  EXPECT_THROW(WithAdapterRank(*model_, 4), std::invalid_argument);
}

TEST(RunLogTest, JsonLinesRoundTrip) {
  testing::TempDir dir("runlog");
  RunLog log;
  log.records.push_back({"phase1", 0, 1.5, 2.25, 0.125, 3.0});
  log.records.push_back({"phase2", 1, 0.1, 0.2, 0.3, 4.0});
  WriteRunLog(dir.path() / "log.jsonl", log);
  const auto back = ReadRunLog(dir.path() / "log.jsonl");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].phase, "phase2");
  EXPECT_EQ(back[1].epoch, 1u);
  EXPECT_EQ(back[0].forget_loss, 2.25);
  EXPECT_EQ(back[1].update_norm, 0.3);
}

}  // namespace
}  // namespace libu
