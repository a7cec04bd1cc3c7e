// src/metrics.cc

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

#include "otlid/metrics.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "otlid/errors.h"

namespace otlid {

namespace {

constexpr double kScoreClamp = 1e-12;

// Operating points of the rule "accept iff score >= t" at every distinct
// score plus one sentinel above the maximum. miss is nondecreasing and fa
// nonincreasing along the sweep, so miss - fa crosses zero exactly once.
struct Staircase {
  std::vector<double> thresholds;
  std::vector<double> miss;
  std::vector<double> fa;
};

Staircase BuildStaircase(std::vector<double> targets,
                         std::vector<double> nontargets) {
  for (double s : targets) {
    if (!std::isfinite(s)) throw InputError("non-finite target trial score");
  }
  for (double s : nontargets) {
    if (!std::isfinite(s)) {
      throw InputError("non-finite nontarget trial score");
    }
  }
  if (targets.empty()) throw InputError("trial set has no target trials");
  if (nontargets.empty()) throw InputError("trial set has no nontarget trials");

  std::sort(targets.begin(), targets.end());
  std::sort(nontargets.begin(), nontargets.end());

  std::vector<double> candidates;
  candidates.reserve(targets.size() + nontargets.size() + 1);
  candidates.insert(candidates.end(), targets.begin(), targets.end());
  candidates.insert(candidates.end(), nontargets.begin(), nontargets.end());
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()),
                   candidates.end());
  candidates.push_back(candidates.back() + 1.0);  // sentinel: miss 1, fa 0

  const double nt = static_cast<double>(targets.size());
  const double nn = static_cast<double>(nontargets.size());

  Staircase stairs;
  stairs.thresholds = candidates;
  stairs.miss.reserve(candidates.size());
  stairs.fa.reserve(candidates.size());
  for (double t : candidates) {
    const auto below_t =
        std::lower_bound(targets.begin(), targets.end(), t) - targets.begin();
    const auto below_n =
        std::lower_bound(nontargets.begin(), nontargets.end(), t) -
        nontargets.begin();
    stairs.miss.push_back(static_cast<double>(below_t) / nt);
    stairs.fa.push_back((nn - static_cast<double>(below_n)) / nn);
  }
  return stairs;
}

void SplitTrials(const TrialSet& trials, std::vector<double>* targets,
                 std::vector<double>* nontargets) {
  const int n = trials.NumUtterances();
  const int c = trials.ClassCount();
  targets->reserve(n);
  nontargets->reserve(static_cast<size_t>(n) * (c - 1));
  for (int i = 0; i < n; ++i) {
    for (int l = 0; l < c; ++l) {
      if (trials.labels[i] == l) {
        targets->push_back(trials.scores(i, l));
      } else {
        nontargets->push_back(trials.scores(i, l));
      }
    }
  }
}

// Per-language hard-decision error rates behind Cavg. Detection score for
// (utterance, L) is log posterior minus log uniform prior; accept iff > 0.
void LanguageErrorRates(const TrialSet& trials, Eigen::VectorXd* miss,
                        Eigen::MatrixXd* fa) {
  const int n = trials.NumUtterances();
  const int c = trials.ClassCount();
  if (c < 2) {
    throw InputError("cavg needs at least 2 languages, got " +
                     std::to_string(c));
  }

  std::vector<int> count(c, 0);
  for (int i = 0; i < n; ++i) ++count[trials.labels[i]];
  for (int l = 0; l < c; ++l) {
    if (count[l] == 0) {
      throw InputError("language " + std::to_string(l) +
                       " has zero trial utterances");
    }
  }

  const double log_prior = -std::log(static_cast<double>(c));
  *miss = Eigen::VectorXd::Zero(c);
  *fa = Eigen::MatrixXd::Zero(c, c);
  for (int i = 0; i < n; ++i) {
    const int truth = trials.labels[i];
    for (int l = 0; l < c; ++l) {
      const bool accept = trials.scores(i, l) - log_prior > 0.0;
      if (l == truth) {
        if (!accept) (*miss)(l) += 1.0;
      } else if (accept) {
        (*fa)(l, truth) += 1.0;
      }
    }
  }
  for (int l = 0; l < c; ++l) {
    (*miss)(l) /= count[l];
    for (int lp = 0; lp < c; ++lp) {
      if (lp != l) (*fa)(l, lp) /= count[lp];
    }
  }
}

double CavgFromRates(const Eigen::VectorXd& miss, const Eigen::MatrixXd& fa,
                     double p_target) {
  const int c = static_cast<int>(miss.size());
  double total = 0.0;
  for (int l = 0; l < c; ++l) {
    double fa_sum = 0.0;
    for (int lp = 0; lp < c; ++lp) {
      if (lp != l) fa_sum += fa(l, lp);
    }
    total += p_target * miss(l) + (1.0 - p_target) / (c - 1) * fa_sum;
  }
  return total / c;
}

}  // namespace

void ValidateTrialSet(const TrialSet& trials) {
  const int n = trials.NumUtterances();
  const int c = trials.ClassCount();
  if (n < 1 || c < 1) throw InputError("trial set is empty");
  if (static_cast<int>(trials.labels.size()) != n) {
    throw InputError("trial set has " + std::to_string(trials.labels.size()) +
                     " labels for " + std::to_string(n) + " utterances");
  }
  if (!trials.scores.allFinite()) {
    throw InputError("trial scores contain non-finite values");
  }
  for (int i = 0; i < n; ++i) {
    if (trials.labels[i] < 0 || trials.labels[i] >= c) {
      throw InputError("trial label out of range at row " + std::to_string(i));
    }
  }
}

TrialSet ScoreDataset(const BackendModel& model, const Dataset& data) {
  if (!data.HasLabels()) {
    throw InputError("score_dataset requires a labeled dataset");
  }
  if (data.Dim() != model.InputDim()) {
    throw InputError("dataset dim " + std::to_string(data.Dim()) +
                     " does not match model input dim " +
                     std::to_string(model.InputDim()));
  }
  if (data.ClassCount() > model.ClassCount()) {
    throw InputError("dataset has " + std::to_string(data.ClassCount()) +
                     " classes but model outputs " +
                     std::to_string(model.ClassCount()));
  }

  std::vector<int> all(data.NumRows());
  std::iota(all.begin(), all.end(), 0);
  const ForwardTrace trace = Forward(model, data.Batch(all));

  TrialSet trials;
  trials.scores = trace.posteriors.array().max(kScoreClamp).log();
  trials.labels = data.LabelsForRows(all);
  ValidateTrialSet(trials);
  return trials;
}

EerResult ComputeEerFromScores(const std::vector<double>& target_scores,
                               const std::vector<double>& nontarget_scores) {
  const Staircase stairs = BuildStaircase(target_scores, nontarget_scores);
  const size_t m = stairs.thresholds.size();

  // d = miss - fa runs from -1 at the minimum score to +1 at the sentinel.
  // Take the first straddling pair; d_k < 0 strictly there, so the
  // interpolation weight is well defined.
  for (size_t k = 0; k + 1 < m; ++k) {
    const double dk = stairs.miss[k] - stairs.fa[k];
    const double dk1 = stairs.miss[k + 1] - stairs.fa[k + 1];
    if (dk <= 0.0 && dk1 >= 0.0) {
      EerResult result;
      if (dk == 0.0) {
        result.eer = stairs.miss[k];
        result.threshold = stairs.thresholds[k];
        return result;
      }
      const double lambda = -dk / (dk1 - dk);
      result.eer =
          stairs.miss[k] + lambda * (stairs.miss[k + 1] - stairs.miss[k]);
      result.threshold =
          stairs.thresholds[k] +
          lambda * (stairs.thresholds[k + 1] - stairs.thresholds[k]);
      return result;
    }
  }
  throw NumericError("eer sweep found no miss/fa crossing");
}

EerResult ComputeEer(const TrialSet& trials) {
  ValidateTrialSet(trials);
  std::vector<double> targets, nontargets;
  SplitTrials(trials, &targets, &nontargets);
  return ComputeEerFromScores(targets, nontargets);
}

double ComputeCavg(const TrialSet& trials, double p_target) {
  ValidateTrialSet(trials);
  if (!(p_target > 0.0) || !(p_target < 1.0)) {
    throw InputError("p_target must lie in (0, 1)");
  }
  Eigen::VectorXd miss;
  Eigen::MatrixXd fa;
  LanguageErrorRates(trials, &miss, &fa);
  return CavgFromRates(miss, fa, p_target);
}

std::vector<DetPoint> DetCurve(const TrialSet& trials) {
  ValidateTrialSet(trials);
  std::vector<double> targets, nontargets;
  SplitTrials(trials, &targets, &nontargets);
  const Staircase stairs = BuildStaircase(targets, nontargets);

  std::vector<DetPoint> points(stairs.thresholds.size());
  for (size_t k = 0; k < points.size(); ++k) {
    points[k] = {stairs.thresholds[k], stairs.miss[k], stairs.fa[k]};
  }
  return points;
}

EvalReport EvaluateTrials(const TrialSet& trials, double p_target) {
  ValidateTrialSet(trials);
  if (!(p_target > 0.0) || !(p_target < 1.0)) {
    throw InputError("p_target must lie in (0, 1)");
  }

  EvalReport report;
  const EerResult eer = ComputeEer(trials);
  report.eer = eer.eer;
  report.eer_threshold = eer.threshold;
  report.p_target = p_target;
  LanguageErrorRates(trials, &report.miss_by_language,
                     &report.fa_by_language_pair);
  report.cavg =
      CavgFromRates(report.miss_by_language, report.fa_by_language_pair,
                    p_target);
  return report;
}

EvalReport Evaluate(const BackendModel& model, const Dataset& data,
                    double p_target) {
  return EvaluateTrials(ScoreDataset(model, data), p_target);
}

std::string ReportToJson(const EvalReport& report) {
  nlohmann::json j;
  j["eer"] = report.eer;
  j["eer_threshold"] = report.eer_threshold;
  j["cavg"] = report.cavg;
  j["cavg_rule"] = {
      {"p_target", report.p_target},
      {"decision", "accept iff log posterior - log uniform prior > 0"},
  };
  j["miss_by_language"] = std::vector<double>(
      report.miss_by_language.data(),
      report.miss_by_language.data() + report.miss_by_language.size());
  std::vector<std::vector<double>> fa;
  for (Eigen::Index l = 0; l < report.fa_by_language_pair.rows(); ++l) {
    std::vector<double> row;
    for (Eigen::Index lp = 0; lp < report.fa_by_language_pair.cols(); ++lp) {
      row.push_back(report.fa_by_language_pair(l, lp));
    }
    fa.push_back(std::move(row));
  }
  j["fa_by_language_pair"] = fa;
  return j.dump(2);
}

void WriteDetCsv(const std::string& path,
                 const std::vector<DetPoint>& points) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot open for writing: " + path);
  out << "threshold,p_miss,p_fa\n";
  char buf[128];
  for (const DetPoint& p : points) {
    std::snprintf(buf, sizeof(buf), "%.9g,%.9g,%.9g\n", p.threshold, p.p_miss,
                  p.p_fa);
    out << buf;
  }
  if (!out.good()) throw InputError("write failed: " + path);
}

}  // namespace otlid
