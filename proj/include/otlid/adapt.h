// include/otlid/adapt.h

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

#ifndef OTLID_ADAPT_H_
#define OTLID_ADAPT_H_

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "otlid/dataset.h"
#include "otlid/metrics.h"
#include "otlid/model.h"
#include "otlid/ot.h"

namespace otlid {

enum class SolverKind {
  kAuto,     // exact for batch_size <= 256, Sinkhorn above
  kExact,
  kSinkhorn,
};

struct AdaptConfig {
  double alpha = 0.1;     // feature-distance weight
  double beta = 0.0003;   // classifier-distance weight
  double lambda = 1.0;    // adaptation-loss weight
  int batch_size = 128;
  int epochs = 30;
  int pretrain_epochs = 20;
  SolverKind solver = SolverKind::kAuto;
  SinkhornConfig sinkhorn;
  double lr = 0.001;
  std::uint64_t seed = 42;
  BatchPolicy policy = BatchPolicy::kWrapAround;
  int latent_dim = 0;  // 0: min(200, input dim)
  bool lda_init = false;
  double p_target = 0.5;
};

void ValidateAdaptConfig(const AdaptConfig& config);

// One logged optimization step. total == ce + lambda * ot at every step.
struct StepRecord {
  std::string phase;  // "pretrain" or "adapt"
  int epoch = 0;
  int batch = 0;
  double ce = 0.0;
  double ot = 0.0;
  double total = 0.0;
  double marginal_violation = 0.0;
  int solver_iterations = 0;
};

struct TrainLog {
  std::vector<StepRecord> records;
  std::string solver_used;  // "exact", "sinkhorn", or "none"
};

// Pairwise adaptation cost: entry (i, j) =
//   alpha * |latent_s_i - latent_t_j|^2 + beta * |onehot_s_i - posterior_t_j|^2.
// Rows of posterior_t must sum to 1.
CostMatrix AdaptationCostMatrix(const Eigen::MatrixXd& latent_s,
                                const Eigen::MatrixXd& latent_t,
                                const Eigen::MatrixXd& onehot_s,
                                const Eigen::MatrixXd& posterior_t,
                                double alpha, double beta);

// Loss, transport plan, and (optionally) parameter gradients for one paired
// mini-batch. The plan is solved from the current model state unless
// fixed_plan is given, in which case the plan is held constant; gradients
// never flow through the plan either way. With lambda == 0 the target branch
// is skipped entirely and the arithmetic reduces to the plain source
// cross-entropy step.
struct BatchStep {
  double ce = 0.0;
  double ot = 0.0;
  double total = 0.0;
  TransportPlan plan;  // valid only when lambda > 0
  bool used_sinkhorn = false;
  Gradients grads;
};

BatchStep ComputeBatchStep(const BackendModel& model,
                           const Eigen::MatrixXd& source_x,
                           const std::vector<int>& source_labels,
                           const Eigen::MatrixXd& target_x,
                           const AdaptConfig& config,
                           const TransportPlan* fixed_plan, bool want_grads);

// One epoch of alternating minimization over paired mini-batches: solve the
// plan with the network fixed, then take one Adam step with the plan fixed.
// Target labels are never read; an access-counter check enforces this.
void AdaptEpoch(BackendModel* model, const Dataset& source,
                const Dataset& target, const AdaptConfig& config,
                AdamState* adam, BatchSampler* sampler, int epoch_index,
                TrainLog* log);

struct AdaptOutcome {
  BackendModel model;
  TrainLog log;
  EvalReport before;  // target-domain report of the unadapted model
  EvalReport after;   // target-domain report after adaptation
  std::vector<double> pretrain_epoch_ce;
  std::int64_t target_label_reads_during_adaptation = 0;
};

// Full pipeline: init (seeded), optional source pretraining, target
// evaluation, adaptation epochs, target evaluation again.
AdaptOutcome RunAdaptation(const Dataset& source, const Dataset& target,
                           const AdaptConfig& config);

struct SweepCell {
  double alpha = 0.0;
  double beta = 0.0;
  double eer = 0.0;
  double cavg = 0.0;
  double before_eer = 0.0;
  double before_cavg = 0.0;
  bool failed = false;
  std::string message;  // failure reason when failed
};

// One RunAdaptation per (alpha, beta) cell with a shared seed. A failing
// cell is marked failed and the sweep continues; output preserves grid order.
std::vector<SweepCell> HyperSweep(
    const Dataset& source, const Dataset& target,
    const std::vector<std::pair<double, double>>& grid,
    const AdaptConfig& base_config);

// CSV with header alpha,beta,eer,cavg,status; one row per cell.
void WriteSweepCsv(const std::string& path,
                   const std::vector<SweepCell>& cells);

// One JSON object per line, one line per StepRecord.
void WriteTrainLogJsonl(const std::string& path, const TrainLog& log);

// Name of the solver a config resolves to at a given batch size.
std::string ResolveSolverName(const AdaptConfig& config);

}  // namespace otlid

#endif  // OTLID_ADAPT_H_
