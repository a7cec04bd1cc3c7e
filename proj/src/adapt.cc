// src/adapt.cc

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

#include "otlid/adapt.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "otlid/errors.h"

namespace otlid {

namespace {

bool UseSinkhorn(const AdaptConfig& config) {
  switch (config.solver) {
    case SolverKind::kExact:
      return false;
    case SolverKind::kSinkhorn:
      return true;
    case SolverKind::kAuto:
    default:
      return config.batch_size > 256;
  }
}

Eigen::MatrixXd OneHot(const std::vector<int>& labels, int class_count) {
  Eigen::MatrixXd out =
      Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(labels.size()),
                            class_count);
  for (size_t i = 0; i < labels.size(); ++i) out(i, labels[i]) = 1.0;
  return out;
}

void CheckWeight(double value, const char* name) {
  if (!std::isfinite(value) || value < 0.0) {
    throw InputError(std::string(name) + " must be finite and >= 0");
  }
}

}  // namespace

void ValidateAdaptConfig(const AdaptConfig& config) {
  CheckWeight(config.alpha, "alpha");
  CheckWeight(config.beta, "beta");
  CheckWeight(config.lambda, "lambda");
  if (config.batch_size < 2) {
    throw InputError("batch_size must be >= 2 (got " +
                     std::to_string(config.batch_size) + ")");
  }
  if (config.epochs < 0) throw InputError("epochs must be >= 0");
  if (config.pretrain_epochs < 0) {
    throw InputError("pretrain_epochs must be >= 0");
  }
  if (!(config.lr > 0.0) || !std::isfinite(config.lr)) {
    throw InputError("lr must be > 0");
  }
  if (config.latent_dim < 0) throw InputError("latent_dim must be >= 0");
  if (!(config.sinkhorn.epsilon > 0.0) ||
      !std::isfinite(config.sinkhorn.epsilon)) {
    throw InputError("sinkhorn epsilon must be > 0");
  }
  if (config.sinkhorn.max_iters < 1) {
    throw InputError("sinkhorn max_iters must be >= 1");
  }
  if (!(config.p_target > 0.0) || !(config.p_target < 1.0)) {
    throw InputError("p_target must lie in (0, 1)");
  }
}

std::string ResolveSolverName(const AdaptConfig& config) {
  return UseSinkhorn(config) ? "sinkhorn" : "exact";
}

CostMatrix AdaptationCostMatrix(const Eigen::MatrixXd& latent_s,
                                const Eigen::MatrixXd& latent_t,
                                const Eigen::MatrixXd& onehot_s,
                                const Eigen::MatrixXd& posterior_t,
                                double alpha, double beta) {
  CheckWeight(alpha, "alpha");
  CheckWeight(beta, "beta");
  const Eigen::Index b = latent_s.rows();
  if (latent_t.rows() != b || onehot_s.rows() != b || posterior_t.rows() != b) {
    throw InputError("adaptation cost: batch sizes differ");
  }
  if (latent_s.cols() != latent_t.cols()) {
    throw InputError("adaptation cost: latent widths differ");
  }
  if (onehot_s.cols() != posterior_t.cols()) {
    throw InputError("adaptation cost: class counts differ");
  }
  for (Eigen::Index j = 0; j < b; ++j) {
    if (std::abs(posterior_t.row(j).sum() - 1.0) > 1e-6) {
      throw InputError("adaptation cost: target posterior row " +
                       std::to_string(j) + " is not normalized");
    }
  }

  CostMatrix cost;
  cost.values = Eigen::MatrixXd::Zero(b, b);
  for (Eigen::Index i = 0; i < b; ++i) {
    for (Eigen::Index j = 0; j < b; ++j) {
      double entry = 0.0;
      if (alpha > 0.0) {
        entry += alpha * (latent_s.row(i) - latent_t.row(j)).squaredNorm();
      }
      if (beta > 0.0) {
        entry += beta * (onehot_s.row(i) - posterior_t.row(j)).squaredNorm();
      }
      cost.values(i, j) = entry;
    }
  }
  if (alpha > 0.0 && beta > 0.0) {
    cost.kind = CostKind::kCombined;
  } else if (beta > 0.0) {
    cost.kind = CostKind::kClassifier;
  } else if (alpha > 0.0) {
    cost.kind = CostKind::kFeature;
  } else {
    cost.kind = CostKind::kCombined;
  }
  return cost;
}

BatchStep ComputeBatchStep(const BackendModel& model,
                           const Eigen::MatrixXd& source_x,
                           const std::vector<int>& source_labels,
                           const Eigen::MatrixXd& target_x,
                           const AdaptConfig& config,
                           const TransportPlan* fixed_plan, bool want_grads) {
  if (static_cast<Eigen::Index>(source_labels.size()) != source_x.rows()) {
    throw InputError("batch step: label count does not match source rows");
  }

  BatchStep step;
  const ForwardTrace source_trace = Forward(model, source_x);
  step.ce = CrossEntropy(source_trace.posteriors, source_labels);

  if (config.lambda == 0.0) {
    // Degenerate case: pure source cross-entropy. The target branch is
    // skipped so the arithmetic matches source-only training exactly.
    step.total = step.ce;
    if (want_grads) {
      step.grads =
          Backward(model, source_trace, nullptr, nullptr, &source_labels);
    }
    return step;
  }

  if (target_x.rows() != source_x.rows()) {
    throw InputError("batch step: source and target batch sizes differ");
  }
  const ForwardTrace target_trace = Forward(model, target_x);
  const Eigen::MatrixXd onehot = OneHot(source_labels, model.ClassCount());
  const CostMatrix cost =
      AdaptationCostMatrix(source_trace.latent, target_trace.latent, onehot,
                           target_trace.posteriors, config.alpha, config.beta);

  if (fixed_plan != nullptr) {
    step.plan = *fixed_plan;
  } else if (UseSinkhorn(config)) {
    step.plan = SinkhornPlan(cost.values, config.sinkhorn);
    step.used_sinkhorn = true;
  } else {
    step.plan = ExactPlanUniform(cost.values);
  }

  step.ot = OtObjective(cost.values, step.plan);
  step.total = step.ce + config.lambda * step.ot;
  if (!want_grads) return step;

  // Gradients of lambda * sum_ij gamma_ij * (alpha |zs_i - zt_j|^2 +
  // beta |ys_i - pt_j|^2) with gamma constant. Marginals are taken from the
  // actual plan so the gradient is exact even when Sinkhorn stops short of
  // feasibility.
  const Eigen::MatrixXd& gamma = step.plan.gamma;
  const Eigen::VectorXd row_mass = gamma.rowwise().sum();
  const Eigen::VectorXd col_mass = gamma.colwise().sum().transpose();
  const double la = 2.0 * config.lambda * config.alpha;
  const double lb = 2.0 * config.lambda * config.beta;

  const Eigen::MatrixXd grad_zs =
      la * (row_mass.asDiagonal() * source_trace.latent -
            gamma * target_trace.latent);
  const Eigen::MatrixXd grad_zt =
      la * (col_mass.asDiagonal() * target_trace.latent -
            gamma.transpose() * source_trace.latent);
  const Eigen::MatrixXd grad_pt =
      lb * (col_mass.asDiagonal() * target_trace.posteriors -
            gamma.transpose() * onehot);

  step.grads =
      Backward(model, source_trace, &grad_zs, nullptr, &source_labels);
  step.grads.Accumulate(
      Backward(model, target_trace, &grad_zt, &grad_pt, nullptr));
  return step;
}

void AdaptEpoch(BackendModel* model, const Dataset& source,
                const Dataset& target, const AdaptConfig& config,
                AdamState* adam, BatchSampler* sampler, int epoch_index,
                TrainLog* log) {
  if (!source.HasLabels()) {
    throw InputError("adaptation needs a labeled source dataset");
  }
  if (source.Dim() != target.Dim()) {
    throw InputError("source and target dims differ");
  }

  const std::uint64_t reads_before = target.LabelReadCount();
  const int batches =
      sampler->BatchesPerEpoch(source.NumRows(), target.NumRows());
  if (batches == 0) {
    throw InputError("no full batch fits the datasets under DropLast");
  }

  for (int b = 0; b < batches; ++b) {
    BatchPair pair = sampler->NextBatchPair(source, target);
    try {
      const std::vector<int> labels = source.LabelsForRows(pair.source);
      const BatchStep step = ComputeBatchStep(
          *model, source.Batch(pair.source), labels, target.Batch(pair.target),
          config, nullptr, /*want_grads=*/true);
      AdamStep(model, adam, step.grads);
      if (log != nullptr) {
        StepRecord record;
        record.phase = "adapt";
        record.epoch = epoch_index;
        record.batch = b;
        record.ce = step.ce;
        record.ot = step.ot;
        record.total = step.total;
        record.marginal_violation =
            config.lambda == 0.0 ? 0.0 : MaxMarginalViolation(step.plan);
        record.solver_iterations =
            config.lambda == 0.0 ? 0 : step.plan.iterations;
        log->records.push_back(record);
      }
    } catch (const NumericError& e) {
      throw NumericError("epoch " + std::to_string(epoch_index) + " batch " +
                         std::to_string(b) + ": " + e.what());
    }
  }

  if (target.LabelReadCount() != reads_before) {
    throw std::logic_error("target labels were read during adaptation");
  }
}

AdaptOutcome RunAdaptation(const Dataset& source, const Dataset& target,
                           const AdaptConfig& config) {
  ValidateAdaptConfig(config);
  if (!source.HasLabels()) {
    throw InputError("adaptation needs a labeled source dataset");
  }
  if (source.Dim() != target.Dim()) {
    throw InputError("source dim " + std::to_string(source.Dim()) +
                     " does not match target dim " +
                     std::to_string(target.Dim()));
  }
  if (source.ClassCount() < 2) {
    throw InputError("source must contain at least 2 classes");
  }
  if (!target.HasLabels()) {
    throw InputError(
        "target needs labels for evaluation (they are never read during "
        "adaptation)");
  }

  const int input_dim = source.Dim();
  const int latent_dim = config.latent_dim > 0
                             ? config.latent_dim
                             : std::min(200, input_dim);

  AdaptOutcome outcome;
  outcome.model = BackendModel::Init(input_dim, latent_dim,
                                     source.ClassCount(), config.seed);
  if (config.lda_init) InitProjectionFromLda(&outcome.model, source);

  if (config.pretrain_epochs > 0) {
    PretrainOptions pre;
    pre.epochs = config.pretrain_epochs;
    pre.batch_size = config.batch_size;
    pre.policy = config.policy;
    pre.seed = config.seed;
    AdamState pre_adam = AdamState::Init(outcome.model, config.lr);
    outcome.pretrain_epoch_ce = PretrainSource(
        &outcome.model, source, pre, &pre_adam,
        [&outcome](int epoch, int batch, double ce) {
          StepRecord record;
          record.phase = "pretrain";
          record.epoch = epoch;
          record.batch = batch;
          record.ce = ce;
          record.total = ce;
          outcome.log.records.push_back(record);
        });
  }

  outcome.before = Evaluate(outcome.model, target, config.p_target);

  outcome.log.solver_used = (config.epochs > 0 && config.lambda > 0.0)
                                ? ResolveSolverName(config)
                                : "none";
  const std::uint64_t reads_before = target.LabelReadCount();
  if (config.epochs > 0) {
    BatchSampler sampler(config.batch_size, config.seed, config.policy);
    AdamState adam = AdamState::Init(outcome.model, config.lr);
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
      AdaptEpoch(&outcome.model, source, target, config, &adam, &sampler,
                 epoch, &outcome.log);
    }
  }
  outcome.target_label_reads_during_adaptation =
      static_cast<std::int64_t>(target.LabelReadCount() - reads_before);

  outcome.after = Evaluate(outcome.model, target, config.p_target);
  return outcome;
}

std::vector<SweepCell> HyperSweep(
    const Dataset& source, const Dataset& target,
    const std::vector<std::pair<double, double>>& grid,
    const AdaptConfig& base_config) {
  if (grid.empty()) throw InputError("sweep grid is empty");

  std::vector<SweepCell> cells;
  cells.reserve(grid.size());
  for (const auto& [alpha, beta] : grid) {
    SweepCell cell;
    cell.alpha = alpha;
    cell.beta = beta;
    AdaptConfig config = base_config;
    config.alpha = alpha;
    config.beta = beta;
    try {
      const AdaptOutcome outcome = RunAdaptation(source, target, config);
      cell.eer = outcome.after.eer;
      cell.cavg = outcome.after.cavg;
      cell.before_eer = outcome.before.eer;
      cell.before_cavg = outcome.before.cavg;
    } catch (const std::exception& e) {
      cell.failed = true;
      cell.message = e.what();
      cell.eer = std::nan("");
      cell.cavg = std::nan("");
    }
    cells.push_back(std::move(cell));
  }
  return cells;
}

void WriteSweepCsv(const std::string& path,
                   const std::vector<SweepCell>& cells) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot open for writing: " + path);
  out << "alpha,beta,eer,cavg,status\n";
  char buf[160];
  for (const SweepCell& cell : cells) {
    std::snprintf(buf, sizeof(buf), "%.9g,%.9g,%.9g,%.9g,%s\n", cell.alpha,
                  cell.beta, cell.eer, cell.cavg,
                  cell.failed ? "failed" : "ok");
    out << buf;
  }
  if (!out.good()) throw InputError("write failed: " + path);
}

void WriteTrainLogJsonl(const std::string& path, const TrainLog& log) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot open for writing: " + path);
  for (const StepRecord& r : log.records) {
    nlohmann::json j;
    j["phase"] = r.phase;
    j["epoch"] = r.epoch;
    j["batch"] = r.batch;
    j["ce"] = r.ce;
    j["ot"] = r.ot;
    j["total"] = r.total;
    j["marginal_violation"] = r.marginal_violation;
    j["solver_iterations"] = r.solver_iterations;
    out << j.dump() << "\n";
  }
  if (!out.good()) throw InputError("write failed: " + path);
}

}  // namespace otlid
