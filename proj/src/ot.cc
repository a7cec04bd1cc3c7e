// src/ot.cc

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

#include "otlid/ot.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "otlid/errors.h"

namespace otlid {

namespace {

void ValidateCost(const Eigen::MatrixXd& cost, bool require_square) {
  if (cost.rows() < 1 || cost.cols() < 1) {
    throw InputError("cost matrix must be non-empty");
  }
  if (require_square && cost.rows() != cost.cols()) {
    throw InputError("cost matrix must be square (got " +
                     std::to_string(cost.rows()) + "x" +
                     std::to_string(cost.cols()) + ")");
  }
  if (!cost.allFinite()) {
    throw NumericError("cost matrix contains non-finite values");
  }
  if (cost.minCoeff() < 0.0) {
    throw NumericError("cost matrix contains negative entries");
  }
}

struct HungarianResult {
  std::vector<int> row_to_col;
  std::vector<double> u;  // row potentials
  std::vector<double> v;  // column potentials
};

// Hungarian method with potentials and augmenting paths, O(n^3). The duals
// satisfy u_i + v_j <= c_ij with equality on matched edges; they drive the
// tie refinement below.
HungarianResult Hungarian(const Eigen::MatrixXd& cost) {
  const int n = static_cast<int>(cost.rows());
  const double kInf = std::numeric_limits<double>::infinity();

  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1, 0);

  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), kInf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = kInf;
      int j1 = -1;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  HungarianResult result;
  result.row_to_col.assign(n, -1);
  result.u.assign(n, 0.0);
  result.v.assign(n, 0.0);
  for (int j = 1; j <= n; ++j) {
    result.row_to_col[p[j] - 1] = j - 1;
  }
  for (int i = 1; i <= n; ++i) result.u[i - 1] = u[i];
  for (int j = 1; j <= n; ++j) result.v[j - 1] = v[j];
  return result;
}

// Augmenting search inside the tight-edge graph; columns in `blocked` are
// unavailable. Ascending column order keeps the walk deterministic.
bool TryAugment(int row, const std::vector<std::vector<char>>& tight,
                const std::vector<char>& blocked, std::vector<char>* visited,
                std::vector<int>* col_to_row, std::vector<int>* row_to_col) {
  const int n = static_cast<int>(tight.size());
  for (int j = 0; j < n; ++j) {
    if (blocked[j] || (*visited)[j] || !tight[row][j]) continue;
    (*visited)[j] = 1;
    if ((*col_to_row)[j] < 0 ||
        TryAugment((*col_to_row)[j], tight, blocked, visited, col_to_row,
                   row_to_col)) {
      (*col_to_row)[j] = row;
      (*row_to_col)[row] = j;
      return true;
    }
  }
  return false;
}

// Rewrites an optimal assignment into the lexicographically smallest optimal
// one. Every optimal assignment lies inside the graph of dual-tight edges,
// so rows are fixed in order to the smallest tight column that still leaves
// the remaining rows perfectly matchable.
std::vector<int> LexSmallestOptimal(const Eigen::MatrixXd& cost,
                                    const HungarianResult& solved) {
  const int n = static_cast<int>(cost.rows());
  const double scale = std::max(1.0, cost.cwiseAbs().maxCoeff());
  const double tol = 1e-12 * scale;

  std::vector<std::vector<char>> tight(n, std::vector<char>(n, 0));
  int tight_edges = 0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (cost(i, j) - solved.u[i] - solved.v[j] <= tol) {
        tight[i][j] = 1;
        ++tight_edges;
      }
    }
  }
  // Unique optimum: the matching is the whole tight graph.
  if (tight_edges == n) return solved.row_to_col;

  std::vector<int> row_to_col = solved.row_to_col;
  std::vector<int> col_to_row(n, -1);
  for (int i = 0; i < n; ++i) col_to_row[row_to_col[i]] = i;

  std::vector<char> fixed_col(n, 0);
  std::vector<char> visited(n, 0);

  for (int i = 0; i < n; ++i) {
    const int current = row_to_col[i];
    for (int j = 0; j < current; ++j) {
      if (fixed_col[j] || !tight[i][j]) continue;
      // Steal column j for row i and try to reroute the displaced row into
      // the column row i is giving up.
      const int displaced = col_to_row[j];
      col_to_row[current] = -1;
      col_to_row[j] = i;
      row_to_col[i] = j;
      std::vector<char> blocked = fixed_col;
      blocked[j] = 1;
      std::fill(visited.begin(), visited.end(), 0);
      if (TryAugment(displaced, tight, blocked, &visited, &col_to_row,
                     &row_to_col)) {
        break;
      }
      // Roll back.
      col_to_row[j] = displaced;
      row_to_col[i] = current;
      col_to_row[current] = i;
    }
    fixed_col[row_to_col[i]] = 1;
  }
  return row_to_col;
}

}  // namespace

Eigen::MatrixXd PairwiseSquaredEuclidean(const Eigen::MatrixXd& a,
                                         const Eigen::MatrixXd& b) {
  if (a.cols() != b.cols()) {
    throw InputError("pairwise distance: width mismatch (" +
                     std::to_string(a.cols()) + " vs " +
                     std::to_string(b.cols()) + ")");
  }
  Eigen::MatrixXd out(a.rows(), b.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < b.rows(); ++j) {
      out(i, j) = (a.row(i) - b.row(j)).squaredNorm();
    }
  }
  return out;
}

std::vector<int> SolveAssignment(const Eigen::MatrixXd& cost) {
  ValidateCost(cost, /*require_square=*/true);
  HungarianResult solved = Hungarian(cost);
  return LexSmallestOptimal(cost, solved);
}

TransportPlan ExactPlanUniform(const Eigen::MatrixXd& cost) {
  std::vector<int> assignment = SolveAssignment(cost);
  const int b = static_cast<int>(cost.rows());
  const double mass = 1.0 / b;

  TransportPlan plan;
  plan.gamma = Eigen::MatrixXd::Zero(b, b);
  for (int i = 0; i < b; ++i) plan.gamma(i, assignment[i]) = mass;
  plan.row_marginal = Eigen::VectorXd::Constant(b, mass);
  plan.col_marginal = Eigen::VectorXd::Constant(b, mass);
  plan.iterations = 0;
  plan.converged = true;
  plan.marginal_violation = 0.0;
  return plan;
}

TransportPlan SinkhornPlan(const Eigen::MatrixXd& cost,
                           const SinkhornConfig& config) {
  ValidateCost(cost, /*require_square=*/true);
  if (!(config.epsilon > 0.0) || !std::isfinite(config.epsilon)) {
    throw InputError("sinkhorn epsilon must be > 0");
  }
  if (config.max_iters < 1) {
    throw InputError("sinkhorn max_iters must be >= 1");
  }

  const int b = static_cast<int>(cost.rows());
  const double mass = 1.0 / b;

  TransportPlan plan;
  plan.row_marginal = Eigen::VectorXd::Constant(b, mass);
  plan.col_marginal = Eigen::VectorXd::Constant(b, mass);

  const double scale = cost.maxCoeff();
  if (scale <= 0.0) {
    // Zero cost: every feasible plan is optimal; return the product coupling.
    plan.gamma = Eigen::MatrixXd::Constant(b, b, mass * mass);
    plan.iterations = 0;
    plan.converged = true;
    plan.marginal_violation = 0.0;
    return plan;
  }

  const Eigen::MatrixXd c_hat = cost / scale;
  const double eps = config.epsilon;
  const double log_mass = std::log(mass);

  Eigen::VectorXd f = Eigen::VectorXd::Zero(b);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(b);
  Eigen::MatrixXd gamma(b, b);

  auto rebuild_plan = [&]() {
    for (int i = 0; i < b; ++i) {
      for (int j = 0; j < b; ++j) {
        gamma(i, j) = std::exp((f(i) + g(j) - c_hat(i, j)) / eps);
      }
    }
  };
  auto violation = [&]() {
    const double row = (gamma.rowwise().sum().array() - mass).abs().maxCoeff();
    const double col = (gamma.colwise().sum().array() - mass).abs().maxCoeff();
    return std::max(row, col);
  };

  int iter = 0;
  bool converged = false;
  double achieved = std::numeric_limits<double>::infinity();
  while (iter < config.max_iters) {
    ++iter;
    // f_i <- eps * (log a_i - LSE_j((g_j - C_ij)/eps))
    for (int i = 0; i < b; ++i) {
      double best = -std::numeric_limits<double>::infinity();
      for (int j = 0; j < b; ++j) {
        best = std::max(best, (g(j) - c_hat(i, j)) / eps);
      }
      double sum = 0.0;
      for (int j = 0; j < b; ++j) {
        sum += std::exp((g(j) - c_hat(i, j)) / eps - best);
      }
      f(i) = eps * (log_mass - best - std::log(sum));
    }
    // g_j <- eps * (log b_j - LSE_i((f_i - C_ij)/eps))
    for (int j = 0; j < b; ++j) {
      double best = -std::numeric_limits<double>::infinity();
      for (int i = 0; i < b; ++i) {
        best = std::max(best, (f(i) - c_hat(i, j)) / eps);
      }
      double sum = 0.0;
      for (int i = 0; i < b; ++i) {
        sum += std::exp((f(i) - c_hat(i, j)) / eps - best);
      }
      g(j) = eps * (log_mass - best - std::log(sum));
    }
    rebuild_plan();
    achieved = violation();
    if (achieved < config.marginal_tol) {
      converged = true;
      break;
    }
  }

  plan.gamma = gamma;
  plan.iterations = iter;
  plan.converged = converged;
  plan.marginal_violation = achieved;
  return plan;
}

double OtObjective(const Eigen::MatrixXd& cost, const TransportPlan& plan) {
  if (cost.rows() != plan.gamma.rows() || cost.cols() != plan.gamma.cols()) {
    throw InputError("ot_objective: cost and plan shapes differ");
  }
  return (cost.array() * plan.gamma.array()).sum();
}

double MaxMarginalViolation(const TransportPlan& plan) {
  const double row =
      (plan.gamma.rowwise().sum() - plan.row_marginal).cwiseAbs().maxCoeff();
  const double col =
      (plan.gamma.colwise().sum().transpose() - plan.col_marginal)
          .cwiseAbs()
          .maxCoeff();
  return std::max(row, col);
}

}  // namespace otlid
