// src/projection.cc

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

#include "otlid/projection.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include "otlid/errors.h"

namespace otlid {

Eigen::MatrixXd Projection2D::Apply(const Eigen::MatrixXd& rows) const {
  if (rows.cols() != components.rows()) {
    throw InputError("projection: row width " + std::to_string(rows.cols()) +
                     " does not match fitted dim " +
                     std::to_string(components.rows()));
  }
  return (rows.rowwise() - mean) * components;
}

Projection2D FitPca2(const Eigen::MatrixXd& rows) {
  const Eigen::Index n = rows.rows();
  const Eigen::Index d = rows.cols();
  if (n < 2) throw InputError("pca needs at least 2 rows");
  if (d < 2) throw InputError("pca needs at least 2 dimensions");
  if (!rows.allFinite()) throw InputError("pca input has non-finite values");

  Projection2D proj;
  proj.mean = rows.colwise().mean();
  const Eigen::MatrixXd centered = rows.rowwise() - proj.mean;
  const Eigen::MatrixXd cov =
      centered.transpose() * centered / static_cast<double>(n - 1);

  // Eigenvalues come out ascending; take the last two.
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) {
    throw NumericError("pca eigendecomposition failed");
  }
  proj.components.resize(d, 2);
  proj.components.col(0) = solver.eigenvectors().col(d - 1);
  proj.components.col(1) = solver.eigenvectors().col(d - 2);
  proj.variance << solver.eigenvalues()(d - 1), solver.eigenvalues()(d - 2);

  for (int k = 0; k < 2; ++k) {
    Eigen::Index pivot = 0;
    proj.components.col(k).cwiseAbs().maxCoeff(&pivot);
    if (proj.components(pivot, k) < 0.0) {
      proj.components.col(k) = -proj.components.col(k);
    }
  }
  return proj;
}

double MeanSameClassCentroidDistance(const Eigen::MatrixXd& a,
                                     const std::vector<int>& labels_a,
                                     const Eigen::MatrixXd& b,
                                     const std::vector<int>& labels_b) {
  if (a.rows() != static_cast<Eigen::Index>(labels_a.size()) ||
      b.rows() != static_cast<Eigen::Index>(labels_b.size())) {
    throw InputError("centroid distance: label count mismatch");
  }
  if (a.cols() != b.cols()) {
    throw InputError("centroid distance: widths differ");
  }

  std::map<int, std::pair<Eigen::RowVectorXd, int>> sums_a, sums_b;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    auto [it, fresh] = sums_a.try_emplace(
        labels_a[i], Eigen::RowVectorXd::Zero(a.cols()), 0);
    it->second.first += a.row(i);
    ++it->second.second;
  }
  for (Eigen::Index i = 0; i < b.rows(); ++i) {
    auto [it, fresh] = sums_b.try_emplace(
        labels_b[i], Eigen::RowVectorXd::Zero(b.cols()), 0);
    it->second.first += b.row(i);
    ++it->second.second;
  }

  double total = 0.0;
  int shared = 0;
  for (const auto& [label, sum_a] : sums_a) {
    const auto it = sums_b.find(label);
    if (it == sums_b.end()) continue;
    const Eigen::RowVectorXd ca = sum_a.first / sum_a.second;
    const Eigen::RowVectorXd cb = it->second.first / it->second.second;
    total += (ca - cb).norm();
    ++shared;
  }
  if (shared == 0) throw InputError("centroid distance: no shared classes");
  return total / shared;
}

}  // namespace otlid
