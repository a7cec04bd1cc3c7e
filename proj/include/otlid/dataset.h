// otlid/dataset.h

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

#ifndef OTLID_DATASET_H_
#define OTLID_DATASET_H_

#include <atomic>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace otlid {

enum class DomainTag { kSource, kTarget };

enum class FileFormat { kCsv, kRawF32 };

// Policy for the tail of an epoch whose size is not a multiple of the
// batch size.
enum class BatchPolicy { kDropLast, kWrapAround };

std::string DomainTagName(DomainTag tag);

// A domain-tagged collection of embedding vectors with optional labels.
//
// Embeddings are stored as float32, which is the on-disk precision of both
// file formats. Label access is counted: every call that exposes a label
// value increments a counter, so an unsupervised code path can prove after
// the fact that it never looked at them.
class Dataset {
 public:
  Dataset(Eigen::MatrixXf embeddings, std::vector<int> labels, DomainTag tag,
          int class_count);

  static Dataset Unlabeled(Eigen::MatrixXf embeddings, DomainTag tag,
                           int class_count = 0);

  Dataset(const Dataset& other);
  Dataset& operator=(const Dataset& other);

  int NumRows() const { return static_cast<int>(embeddings_.rows()); }
  int Dim() const { return static_cast<int>(embeddings_.cols()); }
  int ClassCount() const { return class_count_; }
  DomainTag Domain() const { return domain_; }
  bool HasLabels() const { return !labels_.empty(); }

  const Eigen::MatrixXf& Embeddings() const { return embeddings_; }

  // Rows `indices` as a double batch for the numeric core.
  Eigen::MatrixXd Batch(const std::vector<int>& indices) const;

  // Counted label access.
  int Label(int row) const;
  std::vector<int> LabelsForRows(const std::vector<int>& indices) const;
  const std::vector<int>& Labels() const;

  std::uint64_t LabelReadCount() const { return label_reads_.load(); }

 private:
  void Validate() const;

  Eigen::MatrixXf embeddings_;  // N x D, one row per utterance embedding
  std::vector<int> labels_;     // empty when unlabeled
  DomainTag domain_;
  int class_count_;
  mutable std::atomic<std::uint64_t> label_reads_{0};
};

// Reads a dataset from disk.
//
// CSV rows are `label,v1,...,vD` with an empty first field for unlabeled
// rows; RawF32 is a little-endian header (N, D, has_labels as uint32)
// followed by the row-major float32 payload and, when labeled, N int32
// labels. When class_count is 0 it is inferred as max(label)+1.
Dataset LoadDataset(const std::string& path, FileFormat format,
                    DomainTag tag, int class_count = 0);

void WriteDataset(const Dataset& dataset, const std::string& path,
                  FileFormat format);

// Infers the file format from the path extension (".csv" -> CSV, ".raw" /
// ".bin" / ".f32" -> RawF32).
FileFormat GuessFormat(const std::string& path);

// Generator settings for a synthetic source/target pair with a controlled
// domain shift: Gaussian class clusters, with the target cloud rotated in
// the plane of the first two axes and translated by a fixed-direction
// vector of the requested norm.
struct SynthSpec {
  int class_count = 6;
  int dim = 64;
  int per_class_count = 300;
  double class_center_scale = 0.1;
  double within_class_stddev = 0.3;
  double rotation_angle = 0.6;  // radians, applied in the (axis0, axis1) plane
  double shift_vector_norm = 4.0;
  std::uint64_t seed = 42;
};

// Draws the source set and the target set from identical generator streams,
// then applies the rotation and shift to the target. With zero rotation and
// zero shift the two embedding matrices are bit-identical.
std::pair<Dataset, Dataset> SynthDomainPair(const SynthSpec& spec);

struct BatchPair {
  std::vector<int> source;
  std::vector<int> target;
};

// Paired mini-batch index sampler over a source and target dataset.
//
// Each domain consumes its own RNG substream derived from (seed, domain),
// so the source batch sequence does not depend on whether a target stream
// is being drawn alongside it. Batches within an epoch come from a fresh
// per-domain permutation; kWrapAround cycles the permutation to fill the
// tail batch, kDropLast drops it.
class BatchSampler {
 public:
  BatchSampler(int batch_size, std::uint64_t seed, BatchPolicy policy);

  // Paired sampling. Binds to the dataset sizes on first use.
  BatchPair NextBatchPair(const Dataset& source, const Dataset& target);

  // Source-only sampling (pretraining). Consumes the same source substream
  // as the paired form.
  std::vector<int> NextSourceBatch(const Dataset& source);

  int BatchesPerEpoch(int source_size, int target_size) const;
  int BatchesPerEpoch(int source_size) const;

  int batch_size() const { return batch_size_; }
  BatchPolicy policy() const { return policy_; }

 private:
  struct DomainStream {
    std::mt19937_64 rng;
    std::vector<int> perm;
    int pos = 0;

    void StartEpoch(int n);
    std::vector<int> Take(int count, BatchPolicy policy);
  };

  int batch_size_;
  BatchPolicy policy_;
  DomainStream source_;
  DomainStream target_;
  int bound_source_size_ = -1;
  int bound_target_size_ = -1;
  int batch_in_epoch_ = 0;
  int batches_per_epoch_ = 0;

  void Bind(int source_size, int target_size);
};

}  // namespace otlid

#endif  // OTLID_DATASET_H_
