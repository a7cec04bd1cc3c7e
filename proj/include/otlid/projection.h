// include/otlid/projection.h

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

#ifndef OTLID_PROJECTION_H_
#define OTLID_PROJECTION_H_

#include <vector>

#include <Eigen/Dense>

namespace otlid {

// Two-component PCA. Deterministic: components are ordered by descending
// variance and sign-fixed so each component's largest-magnitude coefficient
// is positive.
struct Projection2D {
  Eigen::RowVectorXd mean;     // 1 x d
  Eigen::MatrixXd components;  // d x 2, orthonormal columns
  Eigen::Vector2d variance;    // explained variance per component, descending

  Eigen::MatrixXd Apply(const Eigen::MatrixXd& rows) const;  // n x 2
};

// Fits on all rows jointly (callers stack source and target first).
Projection2D FitPca2(const Eigen::MatrixXd& rows);

// Mean over classes of the distance between the class centroid in `a` and
// the class centroid in `b`. Only classes present in both sides count.
double MeanSameClassCentroidDistance(const Eigen::MatrixXd& a,
                                     const std::vector<int>& labels_a,
                                     const Eigen::MatrixXd& b,
                                     const std::vector<int>& labels_b);

}  // namespace otlid

#endif  // OTLID_PROJECTION_H_
