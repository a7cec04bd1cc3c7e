// src/dataset.cc

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

#include "otlid/dataset.h"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "otlid/errors.h"

namespace otlid {

namespace {

// splitmix64; used to derive independent per-domain RNG substreams.
std::uint64_t MixSeed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t kSourceStream = 0;
constexpr std::uint64_t kTargetStream = 1;

}  // namespace

std::string DomainTagName(DomainTag tag) {
  return tag == DomainTag::kSource ? "source" : "target";
}

Dataset::Dataset(Eigen::MatrixXf embeddings, std::vector<int> labels,
                 DomainTag tag, int class_count)
    : embeddings_(std::move(embeddings)),
      labels_(std::move(labels)),
      domain_(tag),
      class_count_(class_count) {
  if (class_count_ <= 0 && !labels_.empty()) {
    int max_label = *std::max_element(labels_.begin(), labels_.end());
    class_count_ = max_label + 1;
  }
  Validate();
}

Dataset Dataset::Unlabeled(Eigen::MatrixXf embeddings, DomainTag tag,
                           int class_count) {
  return Dataset(std::move(embeddings), {}, tag, class_count);
}

Dataset::Dataset(const Dataset& other)
    : embeddings_(other.embeddings_),
      labels_(other.labels_),
      domain_(other.domain_),
      class_count_(other.class_count_),
      label_reads_(0) {}

Dataset& Dataset::operator=(const Dataset& other) {
  if (this != &other) {
    embeddings_ = other.embeddings_;
    labels_ = other.labels_;
    domain_ = other.domain_;
    class_count_ = other.class_count_;
    label_reads_.store(0);
  }
  return *this;
}

void Dataset::Validate() const {
  if (embeddings_.rows() < 1 || embeddings_.cols() < 1) {
    throw InputError("dataset must have N >= 1 rows and D >= 1 columns (got " +
                     std::to_string(embeddings_.rows()) + "x" +
                     std::to_string(embeddings_.cols()) + ")");
  }
  for (Eigen::Index i = 0; i < embeddings_.rows(); ++i) {
    for (Eigen::Index j = 0; j < embeddings_.cols(); ++j) {
      if (!std::isfinite(embeddings_(i, j))) {
        throw InputError("non-finite embedding value at row " +
                         std::to_string(i) + ", column " + std::to_string(j));
      }
    }
  }
  if (!labels_.empty()) {
    if (static_cast<Eigen::Index>(labels_.size()) != embeddings_.rows()) {
      throw InputError("label count " + std::to_string(labels_.size()) +
                       " does not match row count " +
                       std::to_string(embeddings_.rows()));
    }
    for (std::size_t i = 0; i < labels_.size(); ++i) {
      if (labels_[i] < 0 || labels_[i] >= class_count_) {
        throw InputError("row " + std::to_string(i) + ": label " +
                         std::to_string(labels_[i]) +
                         " outside [0, " + std::to_string(class_count_) + ")");
      }
    }
  }
}

Eigen::MatrixXd Dataset::Batch(const std::vector<int>& indices) const {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(indices.size()),
                      embeddings_.cols());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    int row = indices[k];
    if (row < 0 || row >= NumRows()) {
      throw InputError("batch index " + std::to_string(row) +
                         " out of range [0, " + std::to_string(NumRows()) +
                         ")");
    }
    out.row(static_cast<Eigen::Index>(k)) =
        embeddings_.row(row).cast<double>();
  }
  return out;
}

int Dataset::Label(int row) const {
  if (labels_.empty()) {
    throw InputError("dataset is unlabeled");
  }
  if (row < 0 || row >= NumRows()) {
    throw InputError("label row " + std::to_string(row) + " out of range");
  }
  label_reads_.fetch_add(1);
  return labels_[row];
}

std::vector<int> Dataset::LabelsForRows(const std::vector<int>& indices) const {
  std::vector<int> out;
  out.reserve(indices.size());
  for (int row : indices) out.push_back(Label(row));
  return out;
}

const std::vector<int>& Dataset::Labels() const {
  if (labels_.empty()) {
    throw InputError("dataset is unlabeled");
  }
  label_reads_.fetch_add(labels_.size());
  return labels_;
}

namespace {

struct CsvRow {
  bool has_label = false;
  int label = 0;
  std::vector<float> values;
};

CsvRow ParseCsvRow(const std::string& line, int row_index) {
  CsvRow row;
  std::size_t start = 0;
  int field_index = 0;
  while (start <= line.size()) {
    std::size_t comma = line.find(',', start);
    std::size_t end = (comma == std::string::npos) ? line.size() : comma;
    std::string field = line.substr(start, end - start);
    // trim spaces
    while (!field.empty() && std::isspace(static_cast<unsigned char>(field.front())))
      field.erase(field.begin());
    while (!field.empty() && std::isspace(static_cast<unsigned char>(field.back())))
      field.pop_back();

    if (field_index == 0) {
      if (!field.empty()) {
        int value = 0;
        auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
        if (ec != std::errc() || ptr != field.data() + field.size()) {
          throw InputError("row " + std::to_string(row_index) +
                           ": malformed label field '" + field + "'");
        }
        row.has_label = true;
        row.label = value;
      }
    } else {
      if (field.empty()) {
        throw InputError("row " + std::to_string(row_index) +
                         ": empty value field " + std::to_string(field_index));
      }
      char* parse_end = nullptr;
      double value = std::strtod(field.c_str(), &parse_end);
      if (parse_end != field.c_str() + field.size()) {
        throw InputError("row " + std::to_string(row_index) +
                         ": malformed value '" + field + "'");
      }
      if (!std::isfinite(value)) {
        throw InputError("row " + std::to_string(row_index) +
                         ": non-finite value '" + field + "'");
      }
      row.values.push_back(static_cast<float>(value));
    }
    if (comma == std::string::npos) break;
    start = comma + 1;
    ++field_index;
  }
  return row;
}

Dataset LoadCsv(const std::string& path, DomainTag tag, int class_count) {
  std::ifstream in(path);
  if (!in) {
    throw InputError("cannot open file: " + path);
  }
  std::vector<CsvRow> rows;
  std::string line;
  int row_index = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    rows.push_back(ParseCsvRow(line, row_index));
    ++row_index;
  }
  if (rows.empty()) {
    throw InputError("no rows in " + path);
  }
  const std::size_t dim = rows[0].values.size();
  const bool has_labels = rows[0].has_label;
  Eigen::MatrixXf embeddings(static_cast<Eigen::Index>(rows.size()),
                             static_cast<Eigen::Index>(dim));
  std::vector<int> labels;
  if (has_labels) labels.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const CsvRow& row = rows[i];
    if (row.values.size() != dim) {
      throw InputError("row " + std::to_string(i) + ": dimension " +
                       std::to_string(row.values.size()) +
                       " does not match first row dimension " +
                       std::to_string(dim));
    }
    if (row.has_label != has_labels) {
      throw InputError("row " + std::to_string(i) +
                       ": inconsistent label presence");
    }
    for (std::size_t j = 0; j < dim; ++j) {
      embeddings(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          row.values[j];
    }
    if (has_labels) labels.push_back(row.label);
  }
  return Dataset(std::move(embeddings), std::move(labels), tag, class_count);
}

template <typename T>
void ReadExact(std::ifstream& in, T* out, std::size_t count,
               const std::string& path) {
  in.read(reinterpret_cast<char*>(out),
          static_cast<std::streamsize>(count * sizeof(T)));
  if (!in) {
    throw InputError("truncated file: " + path);
  }
}

Dataset LoadRawF32(const std::string& path, DomainTag tag, int class_count) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw InputError("cannot open file: " + path);
  }
  std::uint32_t header[3];
  in.read(reinterpret_cast<char*>(header), sizeof(header));
  if (!in) {
    throw InputError("no rows (missing header) in " + path);
  }
  const std::uint32_t rows = header[0], dim = header[1], has_labels = header[2];
  if (rows == 0 || dim == 0) {
    throw InputError("no rows in " + path);
  }
  if (has_labels > 1) {
    throw InputError("bad has_labels flag " + std::to_string(has_labels) +
                     " in " + path);
  }
  Eigen::MatrixXf embeddings(rows, dim);
  std::vector<float> row(dim);
  for (std::uint32_t i = 0; i < rows; ++i) {
    ReadExact(in, row.data(), dim, path);
    for (std::uint32_t j = 0; j < dim; ++j) {
      if (!std::isfinite(row[j])) {
        throw InputError("row " + std::to_string(i) + ": non-finite value");
      }
      embeddings(i, j) = row[j];
    }
  }
  std::vector<int> labels;
  if (has_labels == 1) {
    std::vector<std::int32_t> raw(rows);
    ReadExact(in, raw.data(), rows, path);
    labels.assign(raw.begin(), raw.end());
  }
  return Dataset(std::move(embeddings), std::move(labels), tag, class_count);
}

}  // namespace

Dataset LoadDataset(const std::string& path, FileFormat format, DomainTag tag,
                    int class_count) {
  switch (format) {
    case FileFormat::kCsv:
      return LoadCsv(path, tag, class_count);
    case FileFormat::kRawF32:
      return LoadRawF32(path, tag, class_count);
  }
  throw InputError("unknown file format");
}

void WriteDataset(const Dataset& dataset, const std::string& path,
                  FileFormat format) {
  const Eigen::MatrixXf& x = dataset.Embeddings();
  if (format == FileFormat::kCsv) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write file: " + path);
    char buf[64];
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      if (dataset.HasLabels()) {
        out << dataset.Label(static_cast<int>(i));
      }
      for (Eigen::Index j = 0; j < x.cols(); ++j) {
        // 9 significant digits round-trip float32 exactly.
        std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(x(i, j)));
        out << ',' << buf;
      }
      out << '\n';
    }
    if (!out) throw InputError("write failed: " + path);
    return;
  }

  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write file: " + path);
  std::uint32_t header[3] = {static_cast<std::uint32_t>(x.rows()),
                             static_cast<std::uint32_t>(x.cols()),
                             dataset.HasLabels() ? 1u : 0u};
  out.write(reinterpret_cast<const char*>(header), sizeof(header));
  std::vector<float> row(x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) row[j] = x(i, j);
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
  if (dataset.HasLabels()) {
    std::vector<std::int32_t> labels(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      labels[i] = dataset.Label(static_cast<int>(i));
    }
    out.write(reinterpret_cast<const char*>(labels.data()),
              static_cast<std::streamsize>(labels.size() * sizeof(std::int32_t)));
  }
  if (!out) throw InputError("write failed: " + path);
}

FileFormat GuessFormat(const std::string& path) {
  auto dot = path.find_last_of('.');
  std::string ext = (dot == std::string::npos) ? "" : path.substr(dot + 1);
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  if (ext == "csv") return FileFormat::kCsv;
  if (ext == "raw" || ext == "bin" || ext == "f32") return FileFormat::kRawF32;
  throw InputError("cannot infer file format from extension of '" + path +
                   "' (use .csv, .raw, .bin or .f32)");
}

namespace {

void ValidateSynthSpec(const SynthSpec& spec) {
  if (spec.class_count < 1) throw InputError("class_count must be >= 1");
  if (spec.dim < 1) throw InputError("dim must be >= 1");
  if (spec.per_class_count < 1) throw InputError("per_class_count must be >= 1");
  if (!(spec.within_class_stddev > 0.0)) {
    throw InputError("within_class_stddev must be > 0");
  }
  if (spec.rotation_angle != 0.0 && spec.dim < 2) {
    throw InputError("rotation plane undefined: dim must be >= 2 when "
                     "rotation_angle != 0");
  }
  if (spec.shift_vector_norm < 0.0) {
    throw InputError("shift_vector_norm must be >= 0");
  }
}

// Draws the raw (pre-shift) cluster sample. Consumes the RNG in a fixed
// order so two calls with equal seeds produce identical matrices.
Eigen::MatrixXf DrawClusters(const SynthSpec& spec, std::vector<int>* labels) {
  std::mt19937_64 center_rng(MixSeed(spec.seed, 100));
  std::normal_distribution<double> unit(0.0, 1.0);

  Eigen::MatrixXd centers(spec.class_count, spec.dim);
  for (int k = 0; k < spec.class_count; ++k) {
    for (int j = 0; j < spec.dim; ++j) {
      centers(k, j) = spec.class_center_scale * unit(center_rng);
    }
  }

  std::mt19937_64 sample_rng(MixSeed(spec.seed, 200));
  const int n = spec.class_count * spec.per_class_count;
  Eigen::MatrixXf out(n, spec.dim);
  labels->resize(n);
  int row = 0;
  for (int k = 0; k < spec.class_count; ++k) {
    for (int i = 0; i < spec.per_class_count; ++i, ++row) {
      for (int j = 0; j < spec.dim; ++j) {
        double v = centers(k, j) + spec.within_class_stddev * unit(sample_rng);
        out(row, j) = static_cast<float>(v);
      }
      (*labels)[row] = k;
    }
  }
  return out;
}

}  // namespace

std::pair<Dataset, Dataset> SynthDomainPair(const SynthSpec& spec) {
  ValidateSynthSpec(spec);

  std::vector<int> source_labels;
  Eigen::MatrixXf source = DrawClusters(spec, &source_labels);

  std::vector<int> target_labels;
  Eigen::MatrixXf target = DrawClusters(spec, &target_labels);

  if (spec.rotation_angle != 0.0) {
    const float c = static_cast<float>(std::cos(spec.rotation_angle));
    const float s = static_cast<float>(std::sin(spec.rotation_angle));
    for (Eigen::Index i = 0; i < target.rows(); ++i) {
      float x0 = target(i, 0), x1 = target(i, 1);
      target(i, 0) = c * x0 - s * x1;
      target(i, 1) = s * x0 + c * x1;
    }
  }
  if (spec.shift_vector_norm != 0.0) {
    // Fixed shift direction: normalized all-ones.
    const float step = static_cast<float>(spec.shift_vector_norm /
                                          std::sqrt(static_cast<double>(spec.dim)));
    target.array() += step;
  }

  return {Dataset(std::move(source), std::move(source_labels),
                  DomainTag::kSource, spec.class_count),
          Dataset(std::move(target), std::move(target_labels),
                  DomainTag::kTarget, spec.class_count)};
}

BatchSampler::BatchSampler(int batch_size, std::uint64_t seed,
                           BatchPolicy policy)
    : batch_size_(batch_size), policy_(policy) {
  if (batch_size <= 0) {
    throw InputError("batch_size must be > 0 (got " +
                     std::to_string(batch_size) + ")");
  }
  source_.rng.seed(MixSeed(seed, kSourceStream));
  target_.rng.seed(MixSeed(seed, kTargetStream));
}

void BatchSampler::DomainStream::StartEpoch(int n) {
  perm.resize(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  pos = 0;
}

std::vector<int> BatchSampler::DomainStream::Take(int count,
                                                  BatchPolicy policy) {
  std::vector<int> out;
  out.reserve(count);
  const int n = static_cast<int>(perm.size());
  for (int t = 0; t < count; ++t) {
    if (policy == BatchPolicy::kWrapAround) {
      out.push_back(perm[(pos + t) % n]);
    } else {
      out.push_back(perm[pos + t]);
    }
  }
  pos += count;
  return out;
}

int BatchSampler::BatchesPerEpoch(int source_size, int target_size) const {
  const int lo = std::min(source_size, target_size);
  const int hi = std::max(source_size, target_size);
  if (policy_ == BatchPolicy::kDropLast) {
    return lo / batch_size_;
  }
  return (hi + batch_size_ - 1) / batch_size_;
}

int BatchSampler::BatchesPerEpoch(int source_size) const {
  if (policy_ == BatchPolicy::kDropLast) {
    return source_size / batch_size_;
  }
  return (source_size + batch_size_ - 1) / batch_size_;
}

void BatchSampler::Bind(int source_size, int target_size) {
  if (bound_source_size_ < 0) {
    const int smallest = (target_size > 0)
                             ? std::min(source_size, target_size)
                             : source_size;
    if (policy_ == BatchPolicy::kDropLast && batch_size_ > smallest) {
      throw InputError("batch_size " + std::to_string(batch_size_) +
                       " exceeds smallest domain size " +
                       std::to_string(smallest) + " under DropLast");
    }
    bound_source_size_ = source_size;
    bound_target_size_ = target_size;
    batches_per_epoch_ = (target_size > 0)
                             ? BatchesPerEpoch(source_size, target_size)
                             : BatchesPerEpoch(source_size);
    batch_in_epoch_ = 0;
  } else if (bound_source_size_ != source_size ||
             bound_target_size_ != target_size) {
    throw InputError("sampler already bound to different dataset sizes");
  }
}

BatchPair BatchSampler::NextBatchPair(const Dataset& source,
                                      const Dataset& target) {
  Bind(source.NumRows(), target.NumRows());
  if (batch_in_epoch_ == 0) {
    source_.StartEpoch(source.NumRows());
    target_.StartEpoch(target.NumRows());
  }
  BatchPair pair;
  pair.source = source_.Take(batch_size_, policy_);
  pair.target = target_.Take(batch_size_, policy_);
  if (++batch_in_epoch_ >= batches_per_epoch_) batch_in_epoch_ = 0;
  return pair;
}

std::vector<int> BatchSampler::NextSourceBatch(const Dataset& source) {
  Bind(source.NumRows(), 0);
  if (batch_in_epoch_ == 0) {
    source_.StartEpoch(source.NumRows());
  }
  std::vector<int> batch = source_.Take(batch_size_, policy_);
  if (++batch_in_epoch_ >= batches_per_epoch_) batch_in_epoch_ = 0;
  return batch;
}

}  // namespace otlid
