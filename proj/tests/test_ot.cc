// tests/test_ot.cc

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
#include <limits>
#include <vector>

#include "doctest.h"
#include "otlid/errors.h"
#include "otlid/ot.h"
#include "test_util.h"

using otlid::ExactPlanUniform;
using otlid::InputError;
using otlid::MaxMarginalViolation;
using otlid::NumericError;
using otlid::OtObjective;
using otlid::PairwiseSquaredEuclidean;
using otlid::SinkhornConfig;
using otlid::SinkhornPlan;
using otlid::SolveAssignment;
using otlid::TransportPlan;

TEST_CASE("pairwise squared distances: single point gives [[0]]") {
  Eigen::MatrixXd a(1, 3), b(1, 3);
  a << 1.0, 2.0, 3.0;
  b << 1.0, 2.0, 3.0;
  Eigen::MatrixXd d = PairwiseSquaredEuclidean(a, b);
  REQUIRE(d.rows() == 1);
  REQUIRE(d.cols() == 1);
  CHECK(d(0, 0) == doctest::Approx(0.0));
}

TEST_CASE("pairwise squared distances match a hand example") {
  Eigen::MatrixXd a(2, 1), b(2, 1);
  a << 0.0, 1.0;
  b << 1.0, -1.0;
  Eigen::MatrixXd d = PairwiseSquaredEuclidean(a, b);
  CHECK(d(0, 0) == doctest::Approx(1.0));
  CHECK(d(0, 1) == doctest::Approx(1.0));
  CHECK(d(1, 0) == doctest::Approx(0.0));
  CHECK(d(1, 1) == doctest::Approx(4.0));
}

TEST_CASE("pairwise squared distances match the naive triple loop") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    Eigen::MatrixXd a = testutil::RandomMatrix(7, 5, seed, -2.0, 2.0);
    Eigen::MatrixXd b = testutil::RandomMatrix(9, 5, seed + 50, -2.0, 2.0);
    Eigen::MatrixXd d = PairwiseSquaredEuclidean(a, b);
    for (int i = 0; i < a.rows(); ++i) {
      for (int j = 0; j < b.rows(); ++j) {
        double acc = 0.0;
        for (int k = 0; k < a.cols(); ++k) {
          const double diff = a(i, k) - b(j, k);
          acc += diff * diff;
        }
        CHECK(std::abs(d(i, j) - acc) < 1e-9);
      }
    }
  }
}

TEST_CASE("pairwise squared distances validate widths") {
  CHECK_THROWS_AS(PairwiseSquaredEuclidean(Eigen::MatrixXd::Zero(2, 3),
                                           Eigen::MatrixXd::Zero(2, 4)),
                  InputError);
}

TEST_CASE("exact plan on a single point is the trivial coupling") {
  Eigen::MatrixXd cost(1, 1);
  cost << 0.7;
  TransportPlan plan = ExactPlanUniform(cost);
  CHECK(plan.gamma(0, 0) == doctest::Approx(1.0));
  CHECK(OtObjective(cost, plan) == doctest::Approx(0.7));
  CHECK(plan.iterations == 0);
  CHECK(plan.converged);
}

TEST_CASE("exact plan matches the hand example [[1,2],[2,1]]") {
  Eigen::MatrixXd cost(2, 2);
  cost << 1.0, 2.0, 2.0, 1.0;
  TransportPlan plan = ExactPlanUniform(cost);
  CHECK(plan.gamma(0, 0) == doctest::Approx(0.5));
  CHECK(plan.gamma(1, 1) == doctest::Approx(0.5));
  CHECK(plan.gamma(0, 1) == doctest::Approx(0.0));
  CHECK(plan.gamma(1, 0) == doctest::Approx(0.0));
  CHECK(OtObjective(cost, plan) == doctest::Approx(1.0));
}

TEST_CASE("exact plan objective equals the factorial brute-force minimum") {
  std::uint64_t seed = 1000;
  for (int rep = 0; rep < 60; ++rep) {
    const int b = 1 + rep % 5;
    Eigen::MatrixXd cost = testutil::RandomMatrix(b, b, seed++, 0.0, 10.0);
    TransportPlan plan = ExactPlanUniform(cost);
    const double expected = testutil::BruteForceAssignmentCost(cost) / b;
    CHECK(std::abs(OtObjective(cost, plan) - expected) < 1e-9);
    CHECK(MaxMarginalViolation(plan) < 1e-12);
  }
}

TEST_CASE("assignment ties break to the lexicographically smallest permutation") {
  SUBCASE("constant cost picks the identity") {
    Eigen::MatrixXd cost = Eigen::MatrixXd::Constant(4, 4, 2.5);
    std::vector<int> perm = SolveAssignment(cost);
    CHECK(perm == std::vector<int>({0, 1, 2, 3}));
  }
  SUBCASE("block tie picks the identity inside the block") {
    Eigen::MatrixXd cost(3, 3);
    cost << 0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0;
    std::vector<int> perm = SolveAssignment(cost);
    CHECK(perm == std::vector<int>({0, 1, 2}));
  }
  SUBCASE("random duplicated-column instances agree with enumeration") {
    std::uint64_t seed = 4000;
    for (int rep = 0; rep < 40; ++rep) {
      const int b = 2 + rep % 4;
      // Integer-valued costs in a tiny range force many exact ties.
      Eigen::MatrixXd cost(b, b);
      std::mt19937_64 rng(seed++);
      std::uniform_int_distribution<int> dist(0, 2);
      for (int i = 0; i < b; ++i) {
        for (int j = 0; j < b; ++j) cost(i, j) = dist(rng);
      }
      std::vector<int> expected =
          testutil::BruteForceLexSmallestAssignment(cost, 1e-9);
      CAPTURE(rep);
      CHECK(SolveAssignment(cost) == expected);
    }
  }
}

TEST_CASE("exact objective is invariant in permutation and scales with cost") {
  Eigen::MatrixXd cost = testutil::RandomMatrix(6, 6, 71, 0.0, 5.0);
  TransportPlan base = ExactPlanUniform(cost);
  for (double s : {2.0, 10.0, 0.25}) {
    TransportPlan plan = ExactPlanUniform(s * cost);
    CHECK(OtObjective(s * cost, plan) ==
          doctest::Approx(s * OtObjective(cost, base)).epsilon(1e-9));
    // Scaling cannot change the argmin.
    CHECK(plan.gamma == base.gamma);
  }
}

TEST_CASE("solvers validate the cost matrix") {
  CHECK_THROWS_AS(ExactPlanUniform(Eigen::MatrixXd::Zero(2, 3)), InputError);
  CHECK_THROWS_AS(ExactPlanUniform(Eigen::MatrixXd()), InputError);
  Eigen::MatrixXd negative(2, 2);
  negative << 1.0, -0.5, 0.0, 1.0;
  CHECK_THROWS_AS(ExactPlanUniform(negative), NumericError);
  Eigen::MatrixXd nan_cost = Eigen::MatrixXd::Zero(2, 2);
  nan_cost(0, 1) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(ExactPlanUniform(nan_cost), NumericError);
  CHECK_THROWS_AS(SinkhornPlan(nan_cost, SinkhornConfig()), NumericError);
}

TEST_CASE("sinkhorn on a single point is the trivial coupling") {
  Eigen::MatrixXd cost(1, 1);
  cost << 3.0;
  TransportPlan plan = SinkhornPlan(cost, SinkhornConfig());
  CHECK(plan.gamma(0, 0) == doctest::Approx(1.0));
  CHECK(plan.converged);
}

TEST_CASE("sinkhorn on a constant cost returns the product coupling") {
  Eigen::MatrixXd cost = Eigen::MatrixXd::Constant(3, 3, 4.0);
  SinkhornConfig config;
  config.epsilon = 0.5;
  TransportPlan plan = SinkhornPlan(cost, config);
  CHECK((plan.gamma.array() - 1.0 / 9.0).abs().maxCoeff() < 1e-9);
}

TEST_CASE("small epsilon recovers the exact plan on [[0,1],[1,0]]") {
  Eigen::MatrixXd cost(2, 2);
  cost << 0.0, 1.0, 1.0, 0.0;
  SinkhornConfig config;
  config.epsilon = 0.01;
  TransportPlan plan = SinkhornPlan(cost, config);
  Eigen::MatrixXd expected(2, 2);
  expected << 0.5, 0.0, 0.0, 0.5;
  CHECK((plan.gamma - expected).cwiseAbs().maxCoeff() < 1e-3);
  CHECK(plan.converged);
  CHECK(plan.iterations > 0);
}

TEST_CASE("sinkhorn marginals are feasible within 1e-6") {
  for (std::uint64_t seed : {11u, 12u, 13u}) {
    Eigen::MatrixXd cost = testutil::RandomMatrix(16, 16, seed, 0.0, 3.0);
    SinkhornConfig config;
    config.epsilon = 0.05;
    TransportPlan plan = SinkhornPlan(cost, config);
    CHECK(plan.converged);
    CHECK(MaxMarginalViolation(plan) < 1e-6);
    CHECK(plan.marginal_violation < 1e-6);
    CHECK(plan.gamma.minCoeff() >= 0.0);
  }
}

TEST_CASE("sinkhorn objective dominates the exact optimum") {
  Eigen::MatrixXd cost = testutil::RandomMatrix(12, 12, 21, 0.0, 2.0);
  const double exact = OtObjective(cost, ExactPlanUniform(cost));
  for (double eps : {1.0, 0.1, 0.01, 0.001}) {
    SinkhornConfig config;
    config.epsilon = eps;
    TransportPlan plan = SinkhornPlan(cost, config);
    CHECK(OtObjective(cost, plan) >= exact - 1e-6);
  }
}

TEST_CASE("the entropic gap shrinks monotonically with epsilon") {
  Eigen::MatrixXd cost = testutil::RandomMatrix(32, 32, 22, 0.0, 1.0);
  const double exact = OtObjective(cost, ExactPlanUniform(cost));
  std::vector<double> gaps;
  for (double eps : {1.0, 0.1, 0.01}) {
    SinkhornConfig config;
    config.epsilon = eps;
    TransportPlan plan = SinkhornPlan(cost, config);
    gaps.push_back(OtObjective(cost, plan) - exact);
  }
  CHECK(gaps[0] >= gaps[1] - 1e-9);
  CHECK(gaps[1] >= gaps[2] - 1e-9);
  CHECK(gaps[2] >= -1e-9);
}

TEST_CASE("sinkhorn epsilon acts on the max-normalized cost") {
  // Scaling the cost must not change the plan, only the objective scale.
  Eigen::MatrixXd cost = testutil::RandomMatrix(8, 8, 23, 0.0, 1.0);
  SinkhornConfig config;
  config.epsilon = 0.1;
  TransportPlan a = SinkhornPlan(cost, config);
  TransportPlan b = SinkhornPlan(100.0 * cost, config);
  CHECK((a.gamma - b.gamma).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("sinkhorn config validation") {
  Eigen::MatrixXd cost = Eigen::MatrixXd::Ones(2, 2);
  SinkhornConfig config;
  config.epsilon = 0.0;
  CHECK_THROWS_AS(SinkhornPlan(cost, config), InputError);
  config.epsilon = 0.1;
  config.max_iters = 0;
  CHECK_THROWS_AS(SinkhornPlan(cost, config), InputError);
}

TEST_CASE("sinkhorn reports non-convergence instead of throwing") {
  Eigen::MatrixXd cost = testutil::RandomMatrix(16, 16, 24, 0.0, 1.0);
  SinkhornConfig config;
  config.epsilon = 0.01;
  config.max_iters = 2;  // far too few
  TransportPlan plan = SinkhornPlan(cost, config);
  CHECK_FALSE(plan.converged);
  CHECK(plan.iterations == 2);
}

TEST_CASE("ot objective: zero cost gives zero and shapes must agree") {
  Eigen::MatrixXd cost = Eigen::MatrixXd::Zero(3, 3);
  TransportPlan plan = ExactPlanUniform(Eigen::MatrixXd::Ones(3, 3));
  CHECK(OtObjective(cost, plan) == doctest::Approx(0.0));
  CHECK_THROWS_AS(OtObjective(Eigen::MatrixXd::Zero(2, 2), plan), InputError);
}
