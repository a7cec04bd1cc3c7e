// include/otlid/metrics.h

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

#ifndef OTLID_METRICS_H_
#define OTLID_METRICS_H_

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "otlid/dataset.h"
#include "otlid/model.h"

namespace otlid {

// Detection trials for one labeled evaluation set. Each (utterance, language)
// pair is one trial: N*c trials total, exactly N of them targets. Scores are
// natural-log posteriors.
struct TrialSet {
  Eigen::MatrixXd scores;  // N x c
  std::vector<int> labels;  // length N, values in [0, c)

  int NumUtterances() const { return static_cast<int>(scores.rows()); }
  int ClassCount() const { return static_cast<int>(scores.cols()); }
};

struct EerResult {
  double eer = 0.0;
  double threshold = 0.0;
};

// One operating point of the pooled detection staircase.
struct DetPoint {
  double threshold = 0.0;
  double p_miss = 0.0;
  double p_fa = 0.0;
};

struct EvalReport {
  double eer = 0.0;
  double eer_threshold = 0.0;
  double cavg = 0.0;
  double p_target = 0.5;
  Eigen::VectorXd miss_by_language;     // P_miss(L), length c
  Eigen::MatrixXd fa_by_language_pair;  // P_fa(L, L'), c x c, diagonal 0
};

// Throws InputError when shapes, label ranges, or score finiteness fail.
void ValidateTrialSet(const TrialSet& trials);

// Runs the model forward over the whole dataset and records log posteriors.
// The dataset must be labeled and match the model dimensions.
TrialSet ScoreDataset(const BackendModel& model, const Dataset& data);

// Pooled equal error rate over explicit target/nontarget score lists.
// Sweeps the staircase of accept-iff-score>=t decisions over all distinct
// scores, then linearly interpolates between the two operating points that
// straddle miss == fa. Ties break toward the lower threshold.
EerResult ComputeEerFromScores(const std::vector<double>& target_scores,
                               const std::vector<double>& nontarget_scores);

// Pools all N*c trials of the set and delegates to ComputeEerFromScores.
EerResult ComputeEer(const TrialSet& trials);

// Average detection cost with hard per-language decisions: accept language L
// for utterance i iff scores(i, L) - log(1/c) > 0. Every language must have
// at least one trial utterance.
double ComputeCavg(const TrialSet& trials, double p_target = 0.5);

// All operating points (threshold, P_miss, P_fa) of the pooled staircase,
// in ascending threshold order. Suitable for DET-curve export.
std::vector<DetPoint> DetCurve(const TrialSet& trials);

EvalReport EvaluateTrials(const TrialSet& trials, double p_target = 0.5);
EvalReport Evaluate(const BackendModel& model, const Dataset& data,
                    double p_target = 0.5);

// JSON serialization of a report, including the decision-rule constants so
// numbers are self-describing.
std::string ReportToJson(const EvalReport& report);

void WriteDetCsv(const std::string& path, const std::vector<DetPoint>& points);

}  // namespace otlid

#endif  // OTLID_METRICS_H_
