// otlid/ot.h

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

#ifndef OTLID_OT_H_
#define OTLID_OT_H_

#include <vector>

#include <Eigen/Core>

namespace otlid {

enum class CostKind { kFeature, kClassifier, kCombined };

// A pairwise transport cost matrix tagged with what it measures.
struct CostMatrix {
  Eigen::MatrixXd values;
  CostKind kind = CostKind::kCombined;
};

// Discrete coupling with prescribed marginals. For the uniform equal-size
// case both marginals are 1/b and the total mass is 1.
struct TransportPlan {
  Eigen::MatrixXd gamma;
  Eigen::VectorXd row_marginal;
  Eigen::VectorXd col_marginal;
  double marginal_violation = 0.0;  // max |achieved - prescribed| over rows+cols
  int iterations = 0;               // 0 for the exact solver
  bool converged = true;
};

struct SinkhornConfig {
  double epsilon = 0.1;       // entropic regularizer on max-normalized costs
  int max_iters = 10000;
  double marginal_tol = 1e-9;
};

// Entry (i, j) = ||a_i - b_j||^2, computed row pair by row pair.
Eigen::MatrixXd PairwiseSquaredEuclidean(const Eigen::MatrixXd& a,
                                         const Eigen::MatrixXd& b);

// Minimum-cost assignment (Hungarian method, O(b^3)). Returns row -> column.
// Among cost-equal optima the lexicographically smallest permutation is
// returned.
std::vector<int> SolveAssignment(const Eigen::MatrixXd& cost);

// Exact optimal transport for uniform equal-size marginals: (1/b) times the
// optimal assignment permutation matrix.
TransportPlan ExactPlanUniform(const Eigen::MatrixXd& cost);

// Entropically regularized plan via log-domain Sinkhorn iterations on the
// max-normalized cost. Stops when both marginal violations drop below
// marginal_tol; hitting max_iters is reported via `converged`, not fatal.
TransportPlan SinkhornPlan(const Eigen::MatrixXd& cost,
                           const SinkhornConfig& config);

// Transport cost sum(cost .* gamma); no entropy term.
double OtObjective(const Eigen::MatrixXd& cost, const TransportPlan& plan);

// Largest deviation of the plan's row/column sums from its stated marginals.
double MaxMarginalViolation(const TransportPlan& plan);

}  // namespace otlid

#endif  // OTLID_OT_H_
