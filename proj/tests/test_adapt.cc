// tests/test_adapt.cc

// Copyright 2026  OTLID Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "doctest.h"
#include "otlid/adapt.h"
#include "otlid/dataset.h"
#include "otlid/errors.h"
#include "otlid/model.h"
#include "otlid/ot.h"
#include "test_util.h"

using otlid::AdamState;
using otlid::AdaptConfig;
using otlid::AdaptOutcome;
using otlid::AdaptationCostMatrix;
using otlid::BackendModel;
using otlid::BatchStep;
using otlid::ComputeBatchStep;
using otlid::CostKind;
using otlid::CostMatrix;
using otlid::Dataset;
using otlid::DomainTag;
using otlid::InputError;
using otlid::OtObjective;
using otlid::PretrainOptions;
using otlid::PretrainSource;
using otlid::RunAdaptation;
using otlid::StepRecord;
using otlid::SweepCell;
using otlid::TransportPlan;
using testutil::ScratchDir;

namespace {

std::pair<Dataset, Dataset> SmallShiftedPair(std::uint64_t seed = 42,
                                             int per_class = 40) {
  otlid::SynthSpec spec;
  spec.class_count = 3;
  spec.dim = 16;
  spec.per_class_count = per_class;
  spec.rotation_angle = 0.6;
  spec.shift_vector_norm = 4.0;
  spec.seed = seed;
  return otlid::SynthDomainPair(spec);
}

AdaptConfig SmallConfig() {
  AdaptConfig config;
  config.batch_size = 32;
  config.epochs = 4;
  config.pretrain_epochs = 4;
  config.seed = 7;
  return config;
}

Eigen::MatrixXd OneHot(const std::vector<int>& labels, int class_count) {
  Eigen::MatrixXd m =
      Eigen::MatrixXd::Zero(static_cast<int>(labels.size()), class_count);
  for (size_t i = 0; i < labels.size(); ++i) m(static_cast<int>(i), labels[i]) = 1.0;
  return m;
}

}  // namespace

TEST_CASE("adaptation cost with both weights zero is the zero matrix") {
  Eigen::MatrixXd z = testutil::RandomMatrix(3, 4, 1, -1.0, 1.0);
  Eigen::MatrixXd p = Eigen::MatrixXd::Constant(3, 2, 0.5);
  CostMatrix cost = AdaptationCostMatrix(z, z, OneHot({0, 1, 0}, 2), p, 0, 0);
  CHECK(cost.values.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("feature cost vanishes on the diagonal for identical latents") {
  Eigen::MatrixXd z = testutil::RandomMatrix(4, 3, 2, -1.0, 1.0);
  Eigen::MatrixXd p = Eigen::MatrixXd::Constant(4, 2, 0.5);
  CostMatrix cost =
      AdaptationCostMatrix(z, z, OneHot({0, 1, 0, 1}, 2), p, 1.0, 0.0);
  CHECK(cost.kind == CostKind::kFeature);
  CHECK(cost.values.diagonal().cwiseAbs().maxCoeff() < 1e-15);
  CHECK(cost.values.minCoeff() >= 0.0);
}

TEST_CASE("feature cost matches the hand example 0.1 * [[1,2],[2,1]]") {
  Eigen::MatrixXd zs(2, 2), zt(2, 2);
  zs << 0.0, 0.0, 1.0, 0.0;
  zt << 0.0, 1.0, 1.0, 1.0;
  Eigen::MatrixXd p = Eigen::MatrixXd::Constant(2, 2, 0.5);
  CostMatrix cost =
      AdaptationCostMatrix(zs, zt, OneHot({0, 1}, 2), p, 0.1, 0.0);
  CHECK(cost.values(0, 0) == doctest::Approx(0.1));
  CHECK(cost.values(0, 1) == doctest::Approx(0.2));
  CHECK(cost.values(1, 0) == doctest::Approx(0.2));
  CHECK(cost.values(1, 1) == doctest::Approx(0.1));
}

TEST_CASE("classifier cost compares one-hots with target posteriors") {
  Eigen::MatrixXd z = Eigen::MatrixXd::Zero(2, 3);
  Eigen::MatrixXd p(2, 2);
  p << 0.5, 0.5, 1.0, 0.0;
  CostMatrix cost =
      AdaptationCostMatrix(z, z, OneHot({0, 1}, 2), p, 0.0, 2.0);
  CHECK(cost.kind == CostKind::kClassifier);
  CHECK(cost.values(0, 0) == doctest::Approx(1.0));  // 2 * |(1,0)-(.5,.5)|^2
  CHECK(cost.values(0, 1) == doctest::Approx(0.0));
  CHECK(cost.values(1, 0) == doctest::Approx(1.0));
  CHECK(cost.values(1, 1) == doctest::Approx(4.0));  // 2 * |(0,1)-(1,0)|^2
}

TEST_CASE("adaptation cost validates shapes and normalization") {
  Eigen::MatrixXd z3 = Eigen::MatrixXd::Zero(3, 2);
  Eigen::MatrixXd z2 = Eigen::MatrixXd::Zero(2, 2);
  Eigen::MatrixXd p3 = Eigen::MatrixXd::Constant(3, 2, 0.5);
  Eigen::MatrixXd y3 = OneHot({0, 1, 0}, 2);
  CHECK_THROWS_AS(AdaptationCostMatrix(z3, z2, y3, p3, 1, 1), InputError);
  CHECK_THROWS_AS(
      AdaptationCostMatrix(z3, Eigen::MatrixXd::Zero(3, 4), y3, p3, 1, 1),
      InputError);
  Eigen::MatrixXd bad = p3;
  bad(1, 0) = 0.9;  // row sums to 1.4
  CHECK_THROWS_WITH_AS(AdaptationCostMatrix(z3, z3, y3, bad, 1, 1),
                       doctest::Contains("not normalized"), InputError);
  CHECK_THROWS_AS(AdaptationCostMatrix(z3, z3, y3, p3, -1.0, 1.0), InputError);
}

TEST_CASE("batch step satisfies total = ce + lambda * ot") {
  auto [source, target] = SmallShiftedPair();
  BackendModel m = BackendModel::Init(16, 8, 3, 11);
  AdaptConfig config = SmallConfig();
  config.lambda = 0.7;
  std::vector<int> idx = {0, 5, 41, 80, 90, 100, 110, 17};
  BatchStep step = ComputeBatchStep(
      m, source.Batch(idx), source.LabelsForRows(idx), target.Batch(idx),
      config, nullptr, /*want_grads=*/false);
  CHECK(step.total ==
        doctest::Approx(step.ce + config.lambda * step.ot).epsilon(1e-6));
  CHECK(step.ot >= 0.0);
  CHECK(step.plan.gamma.rows() == 8);
}

TEST_CASE("batch step ot term equals the plan objective exactly") {
  auto [source, target] = SmallShiftedPair();
  BackendModel m = BackendModel::Init(16, 8, 3, 12);
  AdaptConfig config = SmallConfig();
  std::vector<int> idx = {1, 2, 3, 4, 5, 6, 7, 8};
  BatchStep step = ComputeBatchStep(
      m, source.Batch(idx), source.LabelsForRows(idx), target.Batch(idx),
      config, nullptr, false);
  // Rebuild the cost matrix independently and re-dot with the plan.
  auto ts = otlid::Forward(m, source.Batch(idx));
  auto tt = otlid::Forward(m, target.Batch(idx));
  CostMatrix cost = AdaptationCostMatrix(
      ts.latent, tt.latent, OneHot(source.LabelsForRows(idx), 3),
      tt.posteriors, config.alpha, config.beta);
  CHECK(std::abs(OtObjective(cost.values, step.plan) - step.ot) < 1e-9);
}

TEST_CASE("batch step with lambda zero skips the target branch") {
  auto [source, target] = SmallShiftedPair();
  BackendModel m = BackendModel::Init(16, 8, 3, 13);
  AdaptConfig config = SmallConfig();
  config.lambda = 0.0;
  std::vector<int> idx = {0, 1, 2, 3};
  BatchStep step = ComputeBatchStep(
      m, source.Batch(idx), source.LabelsForRows(idx), target.Batch(idx),
      config, nullptr, true);
  CHECK(step.ot == 0.0);
  CHECK(step.total == step.ce);
  CHECK(step.plan.gamma.size() == 0);
  // Gradients coincide bitwise with a plain classification backward pass.
  auto trace = otlid::Forward(m, source.Batch(idx));
  const std::vector<int> labels = source.LabelsForRows(idx);
  otlid::Gradients plain =
      otlid::Backward(m, trace, nullptr, nullptr, &labels);
  CHECK(step.grads.w_proj == plain.w_proj);
  CHECK(step.grads.b_proj == plain.b_proj);
  CHECK(step.grads.w_cls == plain.w_cls);
  CHECK(step.grads.b_cls == plain.b_cls);
}

TEST_CASE("full batch loss gradients match finite differences with the plan fixed") {
  const int b = 8, latent = 5, classes = 3, input = 7;
  BackendModel m = BackendModel::Init(input, latent, classes, 404);
  Eigen::MatrixXd xs = testutil::RandomMatrix(b, input, 405, -1.0, 1.0);
  Eigen::MatrixXd xt = testutil::RandomMatrix(b, input, 406, -1.0, 1.0);
  std::vector<int> ys = {0, 1, 2, 0, 1, 2, 0, 1};
  AdaptConfig config;
  config.alpha = 0.1;
  config.beta = 0.3;  // large enough to exercise the posterior path
  config.lambda = 0.7;
  config.batch_size = b;
  config.solver = otlid::SolverKind::kExact;

  BatchStep base = ComputeBatchStep(m, xs, ys, xt, config, nullptr, false);
  TransportPlan fixed = base.plan;
  BatchStep withgrads = ComputeBatchStep(m, xs, ys, xt, config, &fixed, true);
  auto loss = [&]() {
    return ComputeBatchStep(m, xs, ys, xt, config, &fixed, false).total;
  };
  const double err =
      testutil::MaxParamGradError(&m, loss, withgrads.grads, 1e-5);
  CHECK(err < 1e-3);
}

TEST_CASE("adaptation with lambda zero reproduces source-only training bitwise") {
  auto [source, target] = SmallShiftedPair(21);
  AdaptConfig config = SmallConfig();
  config.lambda = 0.0;
  config.pretrain_epochs = 0;
  config.epochs = 3;
  config.latent_dim = 8;
  config.seed = 99;
  AdaptOutcome outcome = RunAdaptation(source, target, config);

  BackendModel reference =
      BackendModel::Init(source.Dim(), 8, source.ClassCount(), 99);
  AdamState adam = AdamState::Init(reference, config.lr);
  PretrainOptions pre;
  pre.epochs = 3;
  pre.batch_size = config.batch_size;
  pre.policy = config.policy;
  pre.seed = 99;
  PretrainSource(&reference, source, pre, &adam);

  CHECK(outcome.model.w_proj == reference.w_proj);
  CHECK(outcome.model.b_proj == reference.b_proj);
  CHECK(outcome.model.w_cls == reference.w_cls);
  CHECK(outcome.model.b_cls == reference.b_cls);
  CHECK(outcome.log.solver_used == "none");
}

TEST_CASE("zero weights make the transport cost identically zero in the log") {
  auto [source, target] = SmallShiftedPair(22);
  AdaptConfig config = SmallConfig();
  config.alpha = 0.0;
  config.beta = 0.0;
  config.epochs = 2;
  config.pretrain_epochs = 0;
  AdaptOutcome outcome = RunAdaptation(source, target, config);
  int adapt_steps = 0;
  for (const StepRecord& r : outcome.log.records) {
    if (r.phase != "adapt") continue;
    ++adapt_steps;
    CHECK(r.ot == 0.0);
    CHECK(r.total == doctest::Approx(r.ce).epsilon(1e-12));
  }
  CHECK(adapt_steps > 0);
}

TEST_CASE("every logged step satisfies the loss identity") {
  auto [source, target] = SmallShiftedPair(23);
  AdaptConfig config = SmallConfig();
  config.epochs = 3;
  config.pretrain_epochs = 2;
  AdaptOutcome outcome = RunAdaptation(source, target, config);
  int checked = 0;
  for (const StepRecord& r : outcome.log.records) {
    if (r.phase == "adapt") {
      CHECK(r.total ==
            doctest::Approx(r.ce + config.lambda * r.ot).epsilon(1e-6));
      CHECK(r.marginal_violation < 1e-6);
      ++checked;
    } else {
      CHECK(r.total == doctest::Approx(r.ce).epsilon(1e-12));
    }
  }
  CHECK(checked > 0);
}

TEST_CASE("the mean transport loss drops from the first to the last epoch") {
  auto [source, target] = SmallShiftedPair(42, /*per_class=*/60);
  AdaptConfig config = SmallConfig();
  config.epochs = 8;
  config.pretrain_epochs = 6;
  AdaptOutcome outcome = RunAdaptation(source, target, config);
  double first = 0.0, last = 0.0;
  int nf = 0, nl = 0;
  for (const StepRecord& r : outcome.log.records) {
    if (r.phase != "adapt") continue;
    if (r.epoch == 0) {
      first += r.ot;
      ++nf;
    }
    if (r.epoch == config.epochs - 1) {
      last += r.ot;
      ++nl;
    }
  }
  REQUIRE(nf > 0);
  REQUIRE(nl > 0);
  CHECK(last / nl < first / nf);
}

TEST_CASE("adaptation with zero epochs returns the pretrained model unchanged") {
  auto [source, target] = SmallShiftedPair(24);
  AdaptConfig config = SmallConfig();
  config.epochs = 0;
  config.pretrain_epochs = 3;
  AdaptOutcome outcome = RunAdaptation(source, target, config);
  CHECK(outcome.before.eer == outcome.after.eer);
  CHECK(outcome.before.cavg == outcome.after.cavg);
  CHECK(outcome.log.solver_used == "none");
  CHECK(outcome.pretrain_epoch_ce.size() == 3);
}

TEST_CASE("adaptation runs are deterministic in the seed") {
  auto [source, target] = SmallShiftedPair(25);
  AdaptConfig config = SmallConfig();
  config.epochs = 2;
  config.pretrain_epochs = 2;
  AdaptOutcome a = RunAdaptation(source, target, config);
  AdaptOutcome b = RunAdaptation(source, target, config);
  CHECK(a.after.eer == b.after.eer);
  CHECK(a.after.cavg == b.after.cavg);
  REQUIRE(a.log.records.size() == b.log.records.size());
  for (size_t i = 0; i < a.log.records.size(); ++i) {
    CHECK(a.log.records[i].total == b.log.records[i].total);
    CHECK(a.log.records[i].ot == b.log.records[i].ot);
  }
  CHECK(a.model.w_proj == b.model.w_proj);
}

TEST_CASE("target labels are never read during adaptation") {
  auto [source, target] = SmallShiftedPair(26);
  AdaptConfig config = SmallConfig();
  config.epochs = 3;
  AdaptOutcome outcome = RunAdaptation(source, target, config);
  CHECK(outcome.target_label_reads_during_adaptation == 0);
}

TEST_CASE("run_adaptation validates its inputs") {
  auto [source, target] = SmallShiftedPair(27);
  AdaptConfig config = SmallConfig();
  SUBCASE("unlabeled source") {
    Dataset unlabeled =
        Dataset::Unlabeled(source.Embeddings(), DomainTag::kSource, 3);
    CHECK_THROWS_AS(RunAdaptation(unlabeled, target, config), InputError);
  }
  SUBCASE("dim mismatch") {
    Eigen::MatrixXf narrow = target.Embeddings().leftCols(8);
    Dataset bad(narrow, target.Labels(), DomainTag::kTarget, 3);
    CHECK_THROWS_AS(RunAdaptation(source, bad, config), InputError);
  }
  SUBCASE("config validation") {
    config.batch_size = 1;
    CHECK_THROWS_AS(RunAdaptation(source, target, config), InputError);
    config = SmallConfig();
    config.lr = 0.0;
    CHECK_THROWS_AS(RunAdaptation(source, target, config), InputError);
    config = SmallConfig();
    config.alpha = std::nan("");
    CHECK_THROWS_AS(RunAdaptation(source, target, config), InputError);
    config = SmallConfig();
    config.sinkhorn.epsilon = 0.0;
    CHECK_THROWS_AS(RunAdaptation(source, target, config), InputError);
  }
}

TEST_CASE("solver resolution follows the batch size under auto") {
  AdaptConfig config;
  config.solver = otlid::SolverKind::kAuto;
  config.batch_size = 128;
  CHECK(otlid::ResolveSolverName(config) == "exact");
  config.batch_size = 512;
  CHECK(otlid::ResolveSolverName(config) == "sinkhorn");
  config.solver = otlid::SolverKind::kSinkhorn;
  config.batch_size = 8;
  CHECK(otlid::ResolveSolverName(config) == "sinkhorn");
}

TEST_CASE("sinkhorn solver is usable end to end for adaptation") {
  auto [source, target] = SmallShiftedPair(28);
  AdaptConfig config = SmallConfig();
  config.solver = otlid::SolverKind::kSinkhorn;
  config.epochs = 2;
  config.pretrain_epochs = 1;
  AdaptOutcome outcome = RunAdaptation(source, target, config);
  CHECK(outcome.log.solver_used == "sinkhorn");
  for (const StepRecord& r : outcome.log.records) {
    if (r.phase == "adapt") CHECK(r.solver_iterations > 0);
  }
}

TEST_CASE("a singleton sweep reproduces run_adaptation") {
  auto [source, target] = SmallShiftedPair(29);
  AdaptConfig config = SmallConfig();
  config.epochs = 2;
  config.pretrain_epochs = 2;
  AdaptOutcome direct = RunAdaptation(source, target, config);
  std::vector<SweepCell> cells = otlid::HyperSweep(
      source, target, {{config.alpha, config.beta}}, config);
  REQUIRE(cells.size() == 1);
  CHECK_FALSE(cells[0].failed);
  CHECK(cells[0].eer == direct.after.eer);
  CHECK(cells[0].cavg == direct.after.cavg);
  CHECK(cells[0].before_eer == direct.before.eer);
}

TEST_CASE("a failing sweep cell is recorded without aborting the grid") {
  auto [source, target] = SmallShiftedPair(30);
  AdaptConfig config = SmallConfig();
  config.epochs = 1;
  config.pretrain_epochs = 1;
  std::vector<SweepCell> cells = otlid::HyperSweep(
      source, target, {{std::nan(""), 0.0}, {0.1, 0.0003}}, config);
  REQUIRE(cells.size() == 2);
  CHECK(cells[0].failed);
  CHECK_FALSE(cells[0].message.empty());
  CHECK(std::isnan(cells[0].eer));
  CHECK_FALSE(cells[1].failed);
  CHECK(std::isfinite(cells[1].eer));
  CHECK_THROWS_AS(otlid::HyperSweep(source, target, {}, config), InputError);
}

TEST_CASE("sweep csv lists one row per cell with a status column") {
  ScratchDir dir("sweep_csv");
  const std::string path = dir.Sub("sweep.csv");
  std::vector<SweepCell> cells(2);
  cells[0].alpha = 0.1;
  cells[0].beta = 0.0003;
  cells[0].eer = 0.05;
  cells[0].cavg = 0.04;
  cells[1].alpha = 0.0;
  cells[1].beta = 0.0;
  cells[1].failed = true;
  cells[1].message = "bad cell";
  cells[1].eer = std::nan("");
  cells[1].cavg = std::nan("");
  otlid::WriteSweepCsv(path, cells);
  const std::string body = testutil::ReadFile(path);
  CHECK(body.rfind("alpha,beta,eer,cavg,status\n", 0) == 0);
  CHECK(body.find("ok") != std::string::npos);
  CHECK(body.find("failed") != std::string::npos);
  CHECK(std::count(body.begin(), body.end(), '\n') == 3);
}

TEST_CASE("train log serializes one json object per step") {
  ScratchDir dir("trainlog");
  const std::string path = dir.Sub("log.jsonl");
  otlid::TrainLog log;
  log.solver_used = "exact";
  StepRecord r;
  r.phase = "adapt";
  r.epoch = 1;
  r.batch = 2;
  r.ce = 0.5;
  r.ot = 0.25;
  r.total = 0.75;
  log.records.push_back(r);
  log.records.push_back(r);
  otlid::WriteTrainLogJsonl(path, log);
  const std::string body = testutil::ReadFile(path);
  CHECK(std::count(body.begin(), body.end(), '\n') == 2);
  CHECK(body.find("\"phase\"") != std::string::npos);
  CHECK(body.find("\"ot\"") != std::string::npos);
}

TEST_CASE("feature alignment beats the classifier-only cell on a shifted pair") {
  otlid::SynthSpec spec;
  spec.class_count = 4;
  spec.dim = 32;
  spec.per_class_count = 80;
  spec.seed = 5;
  auto [source, target] = otlid::SynthDomainPair(spec);
  AdaptConfig config;
  config.batch_size = 64;
  config.epochs = 20;
  // A converged source model isolates the adaptation effect; with a short
  // pretrain both cells would mostly continue plain source training.
  config.pretrain_epochs = 25;
  config.seed = 5;
  std::vector<SweepCell> cells = otlid::HyperSweep(
      source, target, {{0.0, 0.0001}, {0.1, 0.0001}}, config);
  REQUIRE(cells.size() == 2);
  REQUIRE_FALSE(cells[0].failed);
  REQUIRE_FALSE(cells[1].failed);
  // Moving features (alpha > 0) must help; nudging the classifier alone
  // cannot close a feature-space shift.
  CHECK(cells[1].eer < cells[0].eer);
  CHECK(cells[1].eer < cells[1].before_eer);
}
