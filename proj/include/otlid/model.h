// otlid/model.h

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

#ifndef OTLID_MODEL_H_
#define OTLID_MODEL_H_

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "otlid/dataset.h"

namespace otlid {

// Trainable back-end f = g(h(x)): an affine dimension-reduction layer (the
// LDA stand-in), length normalization onto the unit sphere, and an affine
// classifier with softmax.
struct BackendModel {
  Eigen::MatrixXd w_proj;  // latent_dim x input_dim
  Eigen::VectorXd b_proj;  // latent_dim
  Eigen::MatrixXd w_cls;   // class_count x latent_dim
  Eigen::VectorXd b_cls;   // class_count

  int InputDim() const { return static_cast<int>(w_proj.cols()); }
  int LatentDim() const { return static_cast<int>(w_proj.rows()); }
  int ClassCount() const { return static_cast<int>(w_cls.rows()); }

  // Xavier-uniform initialization of both layers.
  static BackendModel Init(int input_dim, int latent_dim, int class_count,
                           std::uint64_t seed);
};

// Replaces the Xavier projection with a closed-form LDA fit on labeled
// source data. Directions beyond the LDA rank (at most class_count - 1)
// keep their random initialization.
void InitProjectionFromLda(BackendModel* model, const Dataset& source);

// All intermediate activations of one forward pass, kept for the analytic
// backward pass.
struct ForwardTrace {
  Eigen::MatrixXd input;       // batch x input_dim
  Eigen::MatrixXd pre_norm;    // batch x latent_dim
  Eigen::VectorXd norms;       // guarded row norms of pre_norm
  Eigen::MatrixXd latent;      // batch x latent_dim, unit rows
  Eigen::MatrixXd logits;      // batch x class_count
  Eigen::MatrixXd posteriors;  // batch x class_count, rows sum to 1
};

ForwardTrace Forward(const BackendModel& model, const Eigen::MatrixXd& batch);

// Mean over the batch of -log posterior[label], posteriors clamped at 1e-12.
double CrossEntropy(const Eigen::MatrixXd& posteriors,
                    const std::vector<int>& labels);

struct Gradients {
  Eigen::MatrixXd w_proj;
  Eigen::VectorXd b_proj;
  Eigen::MatrixXd w_cls;
  Eigen::VectorXd b_cls;

  static Gradients Zero(const BackendModel& model);
  void Accumulate(const Gradients& other);
  bool AllFinite() const;
};

// Exact gradients of
//   (labels ? mean cross-entropy : 0)
//   + sum(grad_latent .* latent) + sum(grad_posteriors .* posteriors)
// with respect to all four parameter blocks. Null adjoints are treated as
// zero and skipped entirely, so a labels-only call performs the same
// arithmetic as a plain classification backward pass.
Gradients Backward(const BackendModel& model, const ForwardTrace& trace,
                   const Eigen::MatrixXd* grad_latent,
                   const Eigen::MatrixXd* grad_posteriors,
                   const std::vector<int>* labels);

struct AdamState {
  Gradients m;  // first moments
  Gradients v;  // second moments
  std::int64_t step = 0;
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState Init(const BackendModel& model, double lr);
};

// One Adam update. Throws NumericError on non-finite gradients without
// touching the model.
void AdamStep(BackendModel* model, AdamState* state, const Gradients& grads);

struct PretrainOptions {
  int epochs = 20;
  int batch_size = 128;
  BatchPolicy policy = BatchPolicy::kWrapAround;
  std::uint64_t seed = 42;
};

// Minimizes the source cross-entropy alone. Returns the mean training CE
// per epoch (empty when epochs == 0). on_step, when set, is called after
// every optimizer step with (epoch, batch, batch CE).
using StepCallback = std::function<void(int, int, double)>;
std::vector<double> PretrainSource(BackendModel* model, const Dataset& source,
                                   const PretrainOptions& options,
                                   AdamState* adam,
                                   const StepCallback& on_step = nullptr);

// Fraction of rows whose argmax posterior equals the label.
double Accuracy(const BackendModel& model, const Dataset& dataset);

// Checkpoint file: magic line, JSON header line (dims, seed, config hash),
// then float32 blobs in the order w_proj, b_proj, w_cls, b_cls.
void SaveCheckpoint(const BackendModel& model, const std::string& path,
                    std::uint64_t seed, const std::string& config_hash);
BackendModel LoadCheckpoint(const std::string& path);

}  // namespace otlid

#endif  // OTLID_MODEL_H_
