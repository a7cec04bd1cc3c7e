// src/model.cc

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

#include "otlid/model.h"

#include <cmath>
#include <fstream>
#include <random>

#include <Eigen/Eigenvalues>

#include "json.hpp"

#include "otlid/errors.h"

namespace otlid {

namespace {

constexpr double kNormGuard = 1e-12;
constexpr double kPosteriorClamp = 1e-12;

void XavierFill(Eigen::MatrixXd* w, std::mt19937_64* rng) {
  const double bound =
      std::sqrt(6.0 / static_cast<double>(w->rows() + w->cols()));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Eigen::Index i = 0; i < w->rows(); ++i) {
    for (Eigen::Index j = 0; j < w->cols(); ++j) {
      (*w)(i, j) = dist(*rng);
    }
  }
}

void CheckFinite(const Eigen::MatrixXd& m, const char* what) {
  if (!m.allFinite()) {
    throw NumericError(std::string("non-finite values in ") + what);
  }
}

}  // namespace

BackendModel BackendModel::Init(int input_dim, int latent_dim, int class_count,
                                std::uint64_t seed) {
  if (input_dim < 1 || latent_dim < 1 || class_count < 1) {
    throw InputError("model dims must be positive");
  }
  if (latent_dim > input_dim) {
    throw InputError("latent_dim " + std::to_string(latent_dim) +
                     " must not exceed input_dim " + std::to_string(input_dim));
  }
  BackendModel model;
  model.w_proj.resize(latent_dim, input_dim);
  model.b_proj = Eigen::VectorXd::Zero(latent_dim);
  model.w_cls.resize(class_count, latent_dim);
  model.b_cls = Eigen::VectorXd::Zero(class_count);
  std::mt19937_64 rng(seed);
  XavierFill(&model.w_proj, &rng);
  XavierFill(&model.w_cls, &rng);
  return model;
}

void InitProjectionFromLda(BackendModel* model, const Dataset& source) {
  if (!source.HasLabels()) {
    throw InputError("LDA initialization needs a labeled source dataset");
  }
  const int n = source.NumRows();
  const int dim = source.Dim();
  const int classes = source.ClassCount();
  if (dim != model->InputDim()) {
    throw InputError("LDA initialization: dataset dim does not match model");
  }

  Eigen::MatrixXd x = source.Embeddings().cast<double>();
  Eigen::VectorXd global_mean = x.colwise().mean();

  Eigen::MatrixXd class_means = Eigen::MatrixXd::Zero(classes, dim);
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(classes);
  for (int i = 0; i < n; ++i) {
    int label = source.Label(i);
    class_means.row(label) += x.row(i);
    counts(label) += 1.0;
  }
  for (int k = 0; k < classes; ++k) {
    if (counts(k) > 0.0) class_means.row(k) /= counts(k);
  }

  Eigen::MatrixXd within = Eigen::MatrixXd::Zero(dim, dim);
  Eigen::MatrixXd between = Eigen::MatrixXd::Zero(dim, dim);
  for (int i = 0; i < n; ++i) {
    int label = source.Label(i);
    Eigen::VectorXd d = (x.row(i) - class_means.row(label)).transpose();
    within += d * d.transpose();
  }
  for (int k = 0; k < classes; ++k) {
    Eigen::VectorXd d = (class_means.row(k) - global_mean.transpose()).transpose();
    between += counts(k) * d * d.transpose();
  }
  within /= static_cast<double>(n);
  between /= static_cast<double>(n);
  // Ridge keeps the within-class scatter invertible.
  within += 1e-6 * Eigen::MatrixXd::Identity(dim, dim);

  // Whiten by within^{-1/2}, then take leading eigenvectors of the
  // whitened between-class scatter.
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> within_eig(within);
  Eigen::MatrixXd w_inv_sqrt =
      within_eig.eigenvectors() *
      within_eig.eigenvalues().cwiseMax(1e-12).cwiseSqrt().cwiseInverse().asDiagonal() *
      within_eig.eigenvectors().transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> between_eig(
      w_inv_sqrt * between * w_inv_sqrt);

  const int rank = std::min(model->LatentDim(), classes - 1);
  for (int r = 0; r < rank; ++r) {
    // Eigenvalues ascend; take from the top.
    Eigen::VectorXd direction =
        w_inv_sqrt * between_eig.eigenvectors().col(dim - 1 - r);
    model->w_proj.row(r) = direction.transpose();
  }
  model->b_proj = -(model->w_proj * global_mean);
}

ForwardTrace Forward(const BackendModel& model, const Eigen::MatrixXd& batch) {
  if (batch.cols() != model.InputDim()) {
    throw InputError("forward: input width " + std::to_string(batch.cols()) +
                     " does not match model input_dim " +
                     std::to_string(model.InputDim()));
  }
  CheckFinite(batch, "forward input");

  ForwardTrace trace;
  trace.input = batch;
  trace.pre_norm =
      (batch * model.w_proj.transpose()).rowwise() + model.b_proj.transpose();

  const Eigen::Index rows = trace.pre_norm.rows();
  trace.norms.resize(rows);
  trace.latent.resizeLike(trace.pre_norm);
  for (Eigen::Index i = 0; i < rows; ++i) {
    double norm = trace.pre_norm.row(i).norm();
    trace.norms(i) = std::max(norm, kNormGuard);
    trace.latent.row(i) = trace.pre_norm.row(i) / trace.norms(i);
  }

  trace.logits =
      (trace.latent * model.w_cls.transpose()).rowwise() + model.b_cls.transpose();

  // Row softmax with max subtraction.
  trace.posteriors.resizeLike(trace.logits);
  for (Eigen::Index i = 0; i < rows; ++i) {
    Eigen::RowVectorXd shifted =
        trace.logits.row(i).array() - trace.logits.row(i).maxCoeff();
    Eigen::RowVectorXd exps = shifted.array().exp();
    trace.posteriors.row(i) = exps / exps.sum();
  }
  return trace;
}

double CrossEntropy(const Eigen::MatrixXd& posteriors,
                    const std::vector<int>& labels) {
  if (static_cast<Eigen::Index>(labels.size()) != posteriors.rows()) {
    throw InputError("cross_entropy: label count does not match batch");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= posteriors.cols()) {
      throw InputError("cross_entropy: label " + std::to_string(labels[i]) +
                       " out of range");
    }
    double p = std::max(posteriors(static_cast<Eigen::Index>(i), labels[i]),
                        kPosteriorClamp);
    total -= std::log(p);
  }
  return total / static_cast<double>(labels.size());
}

Gradients Gradients::Zero(const BackendModel& model) {
  Gradients g;
  g.w_proj = Eigen::MatrixXd::Zero(model.w_proj.rows(), model.w_proj.cols());
  g.b_proj = Eigen::VectorXd::Zero(model.b_proj.size());
  g.w_cls = Eigen::MatrixXd::Zero(model.w_cls.rows(), model.w_cls.cols());
  g.b_cls = Eigen::VectorXd::Zero(model.b_cls.size());
  return g;
}

void Gradients::Accumulate(const Gradients& other) {
  w_proj += other.w_proj;
  b_proj += other.b_proj;
  w_cls += other.w_cls;
  b_cls += other.b_cls;
}

bool Gradients::AllFinite() const {
  return w_proj.allFinite() && b_proj.allFinite() && w_cls.allFinite() &&
         b_cls.allFinite();
}

Gradients Backward(const BackendModel& model, const ForwardTrace& trace,
                   const Eigen::MatrixXd* grad_latent,
                   const Eigen::MatrixXd* grad_posteriors,
                   const std::vector<int>* labels) {
  const Eigen::Index batch = trace.input.rows();
  const Eigen::Index latent_dim = model.LatentDim();
  const Eigen::Index classes = model.ClassCount();

  if (grad_latent != nullptr &&
      (grad_latent->rows() != batch || grad_latent->cols() != latent_dim)) {
    throw NumericError("backward: grad_latent shape mismatch");
  }
  if (grad_posteriors != nullptr &&
      (grad_posteriors->rows() != batch || grad_posteriors->cols() != classes)) {
    throw NumericError("backward: grad_posteriors shape mismatch");
  }
  if (labels != nullptr &&
      static_cast<Eigen::Index>(labels->size()) != batch) {
    throw NumericError("backward: label count mismatch");
  }

  Eigen::MatrixXd d_logits = Eigen::MatrixXd::Zero(batch, classes);

  if (labels != nullptr) {
    // Mean CE through softmax: (p - onehot) / batch. The posterior clamp only
    // binds when p < 1e-12, where the clamped loss is locally constant in
    // that entry; the unclamped expression is kept since the softmax path
    // still moves the remaining entries.
    const double inv_batch = 1.0 / static_cast<double>(batch);
    d_logits = trace.posteriors * inv_batch;
    for (Eigen::Index i = 0; i < batch; ++i) {
      d_logits(i, (*labels)[static_cast<std::size_t>(i)]) -= inv_batch;
    }
  }

  if (grad_posteriors != nullptr) {
    // Softmax Jacobian: d_logit_row = p .* (g - <g, p>).
    for (Eigen::Index i = 0; i < batch; ++i) {
      const auto p = trace.posteriors.row(i).array();
      const auto g = grad_posteriors->row(i).array();
      double inner = (g * p).sum();
      d_logits.row(i) += (p * (g - inner)).matrix();
    }
  }

  Gradients grads = Gradients::Zero(model);
  grads.w_cls = d_logits.transpose() * trace.latent;
  grads.b_cls = d_logits.colwise().sum().transpose();

  Eigen::MatrixXd d_latent = d_logits * model.w_cls;
  if (grad_latent != nullptr) d_latent += *grad_latent;

  // Length normalization: d_pre_row = (I - z z^T) d_latent_row / norm.
  Eigen::MatrixXd d_pre(batch, latent_dim);
  for (Eigen::Index i = 0; i < batch; ++i) {
    const auto z = trace.latent.row(i);
    double along = d_latent.row(i).dot(z);
    d_pre.row(i) = (d_latent.row(i) - along * z) / trace.norms(i);
  }

  grads.w_proj = d_pre.transpose() * trace.input;
  grads.b_proj = d_pre.colwise().sum().transpose();
  return grads;
}

AdamState AdamState::Init(const BackendModel& model, double lr) {
  AdamState state;
  state.m = Gradients::Zero(model);
  state.v = Gradients::Zero(model);
  state.lr = lr;
  return state;
}

namespace {

void AdamUpdateBlock(Eigen::MatrixXd* param, Eigen::MatrixXd* m,
                     Eigen::MatrixXd* v, const Eigen::MatrixXd& g,
                     const AdamState& s, double bias1, double bias2) {
  *m = s.beta1 * *m + (1.0 - s.beta1) * g;
  *v = s.beta2 * *v + (1.0 - s.beta2) * g.array().square().matrix();
  param->array() -= s.lr * (m->array() / bias1) /
                    ((v->array() / bias2).sqrt() + s.epsilon);
}

void AdamUpdateBlock(Eigen::VectorXd* param, Eigen::VectorXd* m,
                     Eigen::VectorXd* v, const Eigen::VectorXd& g,
                     const AdamState& s, double bias1, double bias2) {
  *m = s.beta1 * *m + (1.0 - s.beta1) * g;
  *v = s.beta2 * *v + (1.0 - s.beta2) * g.array().square().matrix();
  param->array() -= s.lr * (m->array() / bias1) /
                    ((v->array() / bias2).sqrt() + s.epsilon);
}

}  // namespace

void AdamStep(BackendModel* model, AdamState* state, const Gradients& grads) {
  if (!grads.AllFinite()) {
    throw NumericError("adam_step: non-finite gradient, no update applied");
  }
  state->step += 1;
  const double bias1 = 1.0 - std::pow(state->beta1, state->step);
  const double bias2 = 1.0 - std::pow(state->beta2, state->step);
  AdamUpdateBlock(&model->w_proj, &state->m.w_proj, &state->v.w_proj,
                  grads.w_proj, *state, bias1, bias2);
  AdamUpdateBlock(&model->b_proj, &state->m.b_proj, &state->v.b_proj,
                  grads.b_proj, *state, bias1, bias2);
  AdamUpdateBlock(&model->w_cls, &state->m.w_cls, &state->v.w_cls,
                  grads.w_cls, *state, bias1, bias2);
  AdamUpdateBlock(&model->b_cls, &state->m.b_cls, &state->v.b_cls,
                  grads.b_cls, *state, bias1, bias2);
}

std::vector<double> PretrainSource(BackendModel* model, const Dataset& source,
                                   const PretrainOptions& options,
                                   AdamState* adam, const StepCallback& on_step) {
  if (!source.HasLabels()) {
    throw InputError("pretraining needs a labeled source dataset");
  }
  if (options.epochs < 0) {
    throw InputError("epochs must be >= 0");
  }
  std::vector<double> epoch_ce;
  if (options.epochs == 0) return epoch_ce;

  BatchSampler sampler(options.batch_size, options.seed, options.policy);
  const int batches = sampler.BatchesPerEpoch(source.NumRows());
  if (batches == 0) {
    throw InputError("no full batch fits the dataset under DropLast");
  }
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    double ce_sum = 0.0;
    for (int b = 0; b < batches; ++b) {
      std::vector<int> idx = sampler.NextSourceBatch(source);
      std::vector<int> labels = source.LabelsForRows(idx);
      ForwardTrace trace = Forward(*model, source.Batch(idx));
      const double ce = CrossEntropy(trace.posteriors, labels);
      ce_sum += ce;
      Gradients grads = Backward(*model, trace, nullptr, nullptr, &labels);
      AdamStep(model, adam, grads);
      if (on_step) on_step(epoch, b, ce);
    }
    epoch_ce.push_back(ce_sum / batches);
  }
  return epoch_ce;
}

double Accuracy(const BackendModel& model, const Dataset& dataset) {
  ForwardTrace trace = Forward(model, dataset.Embeddings().cast<double>());
  int hits = 0;
  for (int i = 0; i < dataset.NumRows(); ++i) {
    Eigen::Index argmax = 0;
    trace.posteriors.row(i).maxCoeff(&argmax);
    if (static_cast<int>(argmax) == dataset.Label(i)) ++hits;
  }
  return static_cast<double>(hits) / dataset.NumRows();
}

namespace {

constexpr const char* kCheckpointMagic = "OTLID_CKPT_V1";

void WriteBlob(std::ofstream& out, const Eigen::MatrixXd& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      float v = static_cast<float>(m(i, j));
      out.write(reinterpret_cast<const char*>(&v), sizeof(v));
    }
  }
}

void ReadBlob(std::ifstream& in, Eigen::MatrixXd* m, const std::string& path) {
  for (Eigen::Index i = 0; i < m->rows(); ++i) {
    for (Eigen::Index j = 0; j < m->cols(); ++j) {
      float v = 0.0f;
      in.read(reinterpret_cast<char*>(&v), sizeof(v));
      if (!in) throw InputError("truncated checkpoint: " + path);
      (*m)(i, j) = v;
    }
  }
}

}  // namespace

void SaveCheckpoint(const BackendModel& model, const std::string& path,
                    std::uint64_t seed, const std::string& config_hash) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write checkpoint: " + path);
  nlohmann::json header = {
      {"input_dim", model.InputDim()},
      {"latent_dim", model.LatentDim()},
      {"class_count", model.ClassCount()},
      {"seed", seed},
      {"config_hash", config_hash},
  };
  out << kCheckpointMagic << '\n' << header.dump() << '\n';
  WriteBlob(out, model.w_proj);
  WriteBlob(out, model.b_proj);
  WriteBlob(out, model.w_cls);
  WriteBlob(out, model.b_cls);
  if (!out) throw InputError("checkpoint write failed: " + path);
}

BackendModel LoadCheckpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open checkpoint: " + path);
  std::string magic, header_line;
  if (!std::getline(in, magic) || magic != kCheckpointMagic) {
    throw InputError("not a checkpoint file: " + path);
  }
  if (!std::getline(in, header_line)) {
    throw InputError("missing checkpoint header: " + path);
  }
  nlohmann::json header = nlohmann::json::parse(header_line, nullptr, false);
  if (header.is_discarded()) {
    throw InputError("malformed checkpoint header: " + path);
  }
  const int input_dim = header.at("input_dim").get<int>();
  const int latent_dim = header.at("latent_dim").get<int>();
  const int class_count = header.at("class_count").get<int>();

  BackendModel model;
  model.w_proj.resize(latent_dim, input_dim);
  model.b_proj.resize(latent_dim);
  model.w_cls.resize(class_count, latent_dim);
  model.b_cls.resize(class_count);
  Eigen::MatrixXd tmp;
  ReadBlob(in, &model.w_proj, path);
  tmp.resize(latent_dim, 1);
  ReadBlob(in, &tmp, path);
  model.b_proj = tmp.col(0);
  ReadBlob(in, &model.w_cls, path);
  tmp.resize(class_count, 1);
  ReadBlob(in, &tmp, path);
  model.b_cls = tmp.col(0);
  return model;
}

}  // namespace otlid
