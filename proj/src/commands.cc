// src/commands.cc

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

#include "otlid/commands.h"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <numeric>
#include <utility>

#include <json.hpp>

#include "otlid/errors.h"
#include "otlid/manifest.h"
#include "otlid/metrics.h"
#include "otlid/projection.h"
#include "otlid/version.h"

namespace otlid {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double SecondsSince(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

fs::path EnsureOutDir(const std::string& out_dir) {
  const fs::path dir = out_dir.empty() ? fs::path(".") : fs::path(out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) {
    throw InputError("cannot create output dir " + dir.string() + ": " +
                     ec.message());
  }
  return dir;
}

json ParseJsonText(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw InputError(what + ": " + e.what());
  }
}

// Applies `apply(key, value)` for every key; apply returns false for keys it
// does not know.
template <typename Fn>
void ForEachKey(const json& j, const std::string& what, Fn apply) {
  if (!j.is_object()) throw InputError(what + ": expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    try {
      if (!apply(key, value)) {
        throw InputError(what + ": unknown key \"" + key + "\"");
      }
    } catch (const json::exception& e) {
      throw InputError(what + ": key \"" + key + "\": " + e.what());
    }
  }
}

void WritePlanCsv(const std::string& path, const Eigen::MatrixXd& gamma) {
  std::string body;
  char buf[64];
  for (Eigen::Index i = 0; i < gamma.rows(); ++i) {
    for (Eigen::Index j = 0; j < gamma.cols(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.9g", gamma(i, j));
      body += buf;
      body += (j + 1 < gamma.cols()) ? ',' : '\n';
    }
  }
  WriteFileAtomic(path, body);
}

Eigen::MatrixXd AllRows(const Dataset& data) {
  std::vector<int> idx(data.NumRows());
  std::iota(idx.begin(), idx.end(), 0);
  return data.Batch(idx);
}

void PrintReportLine(const char* tag, const EvalReport& report) {
  std::printf("%s: eer=%.6f cavg=%.6f\n", tag, report.eer, report.cavg);
}

}  // namespace

std::string DefaultOutDir() {
  const char* env = std::getenv("OTLID_OUT_DIR");
  return (env != nullptr && env[0] != '\0') ? env : ".";
}

SolverKind SolverKindFromString(const std::string& name) {
  if (name == "auto") return SolverKind::kAuto;
  if (name == "exact") return SolverKind::kExact;
  if (name == "sinkhorn") return SolverKind::kSinkhorn;
  throw InputError("unknown solver \"" + name +
                   "\" (expected auto, exact, or sinkhorn)");
}

std::string SolverKindToString(SolverKind kind) {
  switch (kind) {
    case SolverKind::kExact:
      return "exact";
    case SolverKind::kSinkhorn:
      return "sinkhorn";
    case SolverKind::kAuto:
    default:
      return "auto";
  }
}

BatchPolicy BatchPolicyFromString(const std::string& name) {
  if (name == "wrap") return BatchPolicy::kWrapAround;
  if (name == "drop") return BatchPolicy::kDropLast;
  throw InputError("unknown batch policy \"" + name +
                   "\" (expected wrap or drop)");
}

std::string BatchPolicyToString(BatchPolicy policy) {
  return policy == BatchPolicy::kWrapAround ? "wrap" : "drop";
}

AdaptConfig AdaptConfigFromJson(const std::string& json_text,
                                const AdaptConfig& base) {
  AdaptConfig config = base;
  const json j = ParseJsonText(json_text, "adapt config");
  ForEachKey(j, "adapt config", [&config](const std::string& key,
                                          const json& value) {
    if (key == "alpha") config.alpha = value.get<double>();
    else if (key == "beta") config.beta = value.get<double>();
    else if (key == "lambda") config.lambda = value.get<double>();
    else if (key == "batch_size") config.batch_size = value.get<int>();
    else if (key == "epochs") config.epochs = value.get<int>();
    else if (key == "pretrain_epochs")
      config.pretrain_epochs = value.get<int>();
    else if (key == "solver")
      config.solver = SolverKindFromString(value.get<std::string>());
    else if (key == "epsilon") config.sinkhorn.epsilon = value.get<double>();
    else if (key == "max_iters")
      config.sinkhorn.max_iters = value.get<int>();
    else if (key == "marginal_tol")
      config.sinkhorn.marginal_tol = value.get<double>();
    else if (key == "lr") config.lr = value.get<double>();
    else if (key == "seed") config.seed = value.get<std::uint64_t>();
    else if (key == "policy")
      config.policy = BatchPolicyFromString(value.get<std::string>());
    else if (key == "latent_dim") config.latent_dim = value.get<int>();
    else if (key == "lda_init") config.lda_init = value.get<bool>();
    else if (key == "p_target") config.p_target = value.get<double>();
    else return false;
    return true;
  });
  return config;
}

std::string AdaptConfigToJson(const AdaptConfig& config) {
  json j;
  j["alpha"] = config.alpha;
  j["beta"] = config.beta;
  j["lambda"] = config.lambda;
  j["batch_size"] = config.batch_size;
  j["epochs"] = config.epochs;
  j["pretrain_epochs"] = config.pretrain_epochs;
  j["solver"] = SolverKindToString(config.solver);
  j["epsilon"] = config.sinkhorn.epsilon;
  j["max_iters"] = config.sinkhorn.max_iters;
  j["marginal_tol"] = config.sinkhorn.marginal_tol;
  j["lr"] = config.lr;
  j["seed"] = config.seed;
  j["policy"] = BatchPolicyToString(config.policy);
  j["latent_dim"] = config.latent_dim;
  j["lda_init"] = config.lda_init;
  j["p_target"] = config.p_target;
  return j.dump(2);
}

SynthSpec SynthSpecFromJson(const std::string& json_text,
                            const SynthSpec& base) {
  SynthSpec spec = base;
  const json j = ParseJsonText(json_text, "synth spec");
  ForEachKey(j, "synth spec", [&spec](const std::string& key,
                                      const json& value) {
    if (key == "classes") spec.class_count = value.get<int>();
    else if (key == "dim") spec.dim = value.get<int>();
    else if (key == "per_class") spec.per_class_count = value.get<int>();
    else if (key == "center_scale")
      spec.class_center_scale = value.get<double>();
    else if (key == "within_stddev")
      spec.within_class_stddev = value.get<double>();
    else if (key == "rotation") spec.rotation_angle = value.get<double>();
    else if (key == "shift") spec.shift_vector_norm = value.get<double>();
    else if (key == "seed") spec.seed = value.get<std::uint64_t>();
    else return false;
    return true;
  });
  return spec;
}

std::string SynthSpecToJson(const SynthSpec& spec) {
  json j;
  j["classes"] = spec.class_count;
  j["dim"] = spec.dim;
  j["per_class"] = spec.per_class_count;
  j["center_scale"] = spec.class_center_scale;
  j["within_stddev"] = spec.within_class_stddev;
  j["rotation"] = spec.rotation_angle;
  j["shift"] = spec.shift_vector_norm;
  j["seed"] = spec.seed;
  return j.dump(2);
}

int RunSynthCommand(const SynthCommand& cmd) {
  const auto start = Clock::now();
  const fs::path dir = EnsureOutDir(cmd.out_dir);
  const char* ext = cmd.format == FileFormat::kCsv ? ".csv" : ".raw";

  auto [source, target] = SynthDomainPair(cmd.spec);
  const std::string source_path = (dir / (std::string("source") + ext)).string();
  const std::string target_path = (dir / (std::string("target") + ext)).string();
  WriteDataset(source, source_path, cmd.format);
  WriteDataset(target, target_path, cmd.format);
  WriteFileAtomic((dir / "synth_spec.json").string(),
                  SynthSpecToJson(cmd.spec) + "\n");

  RunManifest manifest;
  manifest.command = "synth";
  json cfg = json::parse(SynthSpecToJson(cmd.spec));
  cfg["out_dir"] = cmd.out_dir;
  cfg["format"] = cmd.format == FileFormat::kCsv ? "csv" : "raw";
  manifest.config_json = cfg.dump(2);
  manifest.seed = cmd.spec.seed;
  manifest.dataset_hashes[source_path] = HashHex(HashFileFnv1a64(source_path));
  manifest.dataset_hashes[target_path] = HashHex(HashFileFnv1a64(target_path));
  manifest.wall_seconds = SecondsSince(start);
  WriteManifestAtomic(manifest, (dir / "manifest_synth.json").string());

  std::printf("synth: wrote %s and %s (%d rows each, dim %d, %d classes)\n",
              source_path.c_str(), target_path.c_str(), source.NumRows(),
              source.Dim(), source.ClassCount());
  return 0;
}

int RunTrainCommand(const TrainCommand& cmd) {
  const auto start = Clock::now();
  const fs::path dir = EnsureOutDir(cmd.out_dir);

  const Dataset source = LoadDataset(cmd.source_path,
                                     GuessFormat(cmd.source_path),
                                     DomainTag::kSource);
  if (!source.HasLabels()) {
    throw InputError("training needs a labeled source dataset: " +
                     cmd.source_path);
  }
  const int latent_dim =
      cmd.latent_dim > 0 ? cmd.latent_dim : std::min(200, source.Dim());

  BackendModel model = BackendModel::Init(source.Dim(), latent_dim,
                                          source.ClassCount(), cmd.seed);
  if (cmd.lda_init) InitProjectionFromLda(&model, source);

  TrainLog log;
  log.solver_used = "none";
  PretrainOptions options;
  options.epochs = cmd.epochs;
  options.batch_size = cmd.batch_size;
  options.policy = cmd.policy;
  options.seed = cmd.seed;
  AdamState adam = AdamState::Init(model, cmd.lr);
  const std::vector<double> epoch_ce =
      PretrainSource(&model, source, options, &adam,
                     [&log](int epoch, int batch, double ce) {
                       StepRecord record;
                       record.phase = "pretrain";
                       record.epoch = epoch;
                       record.batch = batch;
                       record.ce = ce;
                       record.total = ce;
                       log.records.push_back(record);
                     });

  json cfg;
  cfg["source"] = cmd.source_path;
  cfg["out_dir"] = cmd.out_dir;
  cfg["epochs"] = cmd.epochs;
  cfg["batch_size"] = cmd.batch_size;
  cfg["lr"] = cmd.lr;
  cfg["seed"] = cmd.seed;
  cfg["policy"] = BatchPolicyToString(cmd.policy);
  cfg["latent_dim"] = cmd.latent_dim;
  cfg["lda_init"] = cmd.lda_init;
  const std::string cfg_text = cfg.dump(2);
  const std::string cfg_hash =
      HashHex(HashBytesFnv1a64(cfg_text.data(), cfg_text.size()));

  const std::string model_path = (dir / "model.ckpt").string();
  SaveCheckpoint(model, model_path, cmd.seed, cfg_hash);
  WriteTrainLogJsonl((dir / "train_log.jsonl").string(), log);

  RunManifest manifest;
  manifest.command = "train";
  manifest.config_json = cfg_text;
  manifest.seed = cmd.seed;
  manifest.dataset_hashes[cmd.source_path] =
      HashHex(HashFileFnv1a64(cmd.source_path));
  manifest.wall_seconds = SecondsSince(start);
  WriteManifestAtomic(manifest, (dir / "manifest_train.json").string());

  const double final_ce = epoch_ce.empty() ? 0.0 : epoch_ce.back();
  std::printf("train: epochs=%d final_ce=%.6f source_acc=%.4f model=%s\n",
              cmd.epochs, final_ce, Accuracy(model, source),
              model_path.c_str());
  return 0;
}

int RunAdaptCommand(const AdaptCommand& cmd) {
  const auto start = Clock::now();
  const fs::path dir = EnsureOutDir(cmd.out_dir);

  const Dataset source = LoadDataset(cmd.source_path,
                                     GuessFormat(cmd.source_path),
                                     DomainTag::kSource);
  const Dataset target = LoadDataset(cmd.target_path,
                                     GuessFormat(cmd.target_path),
                                     DomainTag::kTarget);

  const AdaptOutcome outcome = RunAdaptation(source, target, cmd.config);

  const std::string cfg_text = AdaptConfigToJson(cmd.config);
  const std::string cfg_hash =
      HashHex(HashBytesFnv1a64(cfg_text.data(), cfg_text.size()));

  const std::string model_path = (dir / "model.ckpt").string();
  SaveCheckpoint(outcome.model, model_path, cmd.config.seed, cfg_hash);
  WriteTrainLogJsonl((dir / "train_log.jsonl").string(), outcome.log);
  WriteFileAtomic((dir / "eval_before.json").string(),
                  ReportToJson(outcome.before) + "\n");
  WriteFileAtomic((dir / "eval_after.json").string(),
                  ReportToJson(outcome.after) + "\n");

  if (!cmd.det_csv.empty()) {
    WriteDetCsv(cmd.det_csv, DetCurve(ScoreDataset(outcome.model, target)));
  }
  if (cmd.dump_plan) {
    if (cmd.config.lambda > 0.0 && cmd.config.epochs > 0) {
      // One representative batch under the final model.
      BatchSampler sampler(cmd.config.batch_size, cmd.config.seed,
                           cmd.config.policy);
      const BatchPair pair = sampler.NextBatchPair(source, target);
      const BatchStep step = ComputeBatchStep(
          outcome.model, source.Batch(pair.source),
          source.LabelsForRows(pair.source), target.Batch(pair.target),
          cmd.config, nullptr, /*want_grads=*/false);
      WritePlanCsv((dir / "plan.csv").string(), step.plan.gamma);
    } else {
      std::printf("adapt: --dump-plan skipped (no transport plan solved)\n");
    }
  }

  json cfg = json::parse(cfg_text);
  cfg["source"] = cmd.source_path;
  cfg["target"] = cmd.target_path;
  cfg["out_dir"] = cmd.out_dir;

  RunManifest manifest;
  manifest.command = "adapt";
  manifest.config_json = cfg.dump(2);
  manifest.seed = cmd.config.seed;
  manifest.solver = outcome.log.solver_used;
  manifest.dataset_hashes[cmd.source_path] =
      HashHex(HashFileFnv1a64(cmd.source_path));
  manifest.dataset_hashes[cmd.target_path] =
      HashHex(HashFileFnv1a64(cmd.target_path));
  manifest.wall_seconds = SecondsSince(start);
  WriteManifestAtomic(manifest, (dir / "manifest_adapt.json").string());

  PrintReportLine("before", outcome.before);
  PrintReportLine("after", outcome.after);
  std::printf("adapt: target_label_reads_during_adaptation=%lld model=%s\n",
              static_cast<long long>(
                  outcome.target_label_reads_during_adaptation),
              model_path.c_str());
  return 0;
}

int RunEvalCommand(const EvalCommand& cmd) {
  const auto start = Clock::now();
  const fs::path dir = EnsureOutDir(cmd.out_dir);

  const BackendModel model = LoadCheckpoint(cmd.model_path);
  const Dataset data = LoadDataset(cmd.data_path, GuessFormat(cmd.data_path),
                                   DomainTag::kTarget);
  const TrialSet trials = ScoreDataset(model, data);
  const EvalReport report = EvaluateTrials(trials, cmd.p_target);

  WriteFileAtomic((dir / "eval.json").string(), ReportToJson(report) + "\n");
  if (!cmd.det_csv.empty()) {
    WriteDetCsv(cmd.det_csv, DetCurve(trials));
  }

  json cfg;
  cfg["model"] = cmd.model_path;
  cfg["data"] = cmd.data_path;
  cfg["out_dir"] = cmd.out_dir;
  cfg["p_target"] = cmd.p_target;

  RunManifest manifest;
  manifest.command = "eval";
  manifest.config_json = cfg.dump(2);
  manifest.dataset_hashes[cmd.data_path] =
      HashHex(HashFileFnv1a64(cmd.data_path));
  manifest.dataset_hashes[cmd.model_path] =
      HashHex(HashFileFnv1a64(cmd.model_path));
  manifest.wall_seconds = SecondsSince(start);
  WriteManifestAtomic(manifest, (dir / "manifest_eval.json").string());

  PrintReportLine("eval", report);
  return 0;
}

int RunSweepCommand(const SweepCommand& cmd) {
  const auto start = Clock::now();
  const fs::path dir = EnsureOutDir(cmd.out_dir);
  if (cmd.alphas.empty() || cmd.betas.empty()) {
    throw InputError("sweep grid is empty (need at least one alpha and one "
                     "beta)");
  }

  const Dataset source = LoadDataset(cmd.source_path,
                                     GuessFormat(cmd.source_path),
                                     DomainTag::kSource);
  const Dataset target = LoadDataset(cmd.target_path,
                                     GuessFormat(cmd.target_path),
                                     DomainTag::kTarget);

  std::vector<std::pair<double, double>> grid;
  grid.reserve(cmd.alphas.size() * cmd.betas.size());
  for (double alpha : cmd.alphas) {
    for (double beta : cmd.betas) grid.emplace_back(alpha, beta);
  }

  const std::vector<SweepCell> cells =
      HyperSweep(source, target, grid, cmd.base);
  const std::string csv_path = (dir / "sweep.csv").string();
  WriteSweepCsv(csv_path, cells);

  json cfg = json::parse(AdaptConfigToJson(cmd.base));
  cfg["source"] = cmd.source_path;
  cfg["target"] = cmd.target_path;
  cfg["out_dir"] = cmd.out_dir;
  cfg["alphas"] = cmd.alphas;
  cfg["betas"] = cmd.betas;

  RunManifest manifest;
  manifest.command = "sweep";
  manifest.config_json = cfg.dump(2);
  manifest.seed = cmd.base.seed;
  manifest.solver = ResolveSolverName(cmd.base);
  manifest.dataset_hashes[cmd.source_path] =
      HashHex(HashFileFnv1a64(cmd.source_path));
  manifest.dataset_hashes[cmd.target_path] =
      HashHex(HashFileFnv1a64(cmd.target_path));
  manifest.wall_seconds = SecondsSince(start);
  WriteManifestAtomic(manifest, (dir / "manifest_sweep.json").string());

  int failed = 0;
  for (const SweepCell& cell : cells) {
    if (!cell.failed) continue;
    ++failed;
    std::fprintf(stderr, "sweep cell (alpha=%g, beta=%g) failed: %s\n",
                 cell.alpha, cell.beta, cell.message.c_str());
  }
  std::printf("sweep: wrote %zu rows to %s (%d failed)\n", cells.size(),
              csv_path.c_str(), failed);
  return 0;
}

int RunProjectCommand(const ProjectCommand& cmd) {
  const auto start = Clock::now();
  const fs::path dir = EnsureOutDir(cmd.out_dir);

  const Dataset source = LoadDataset(cmd.source_path,
                                     GuessFormat(cmd.source_path),
                                     DomainTag::kSource);
  const Dataset target = LoadDataset(cmd.target_path,
                                     GuessFormat(cmd.target_path),
                                     DomainTag::kTarget);
  if (source.Dim() != target.Dim()) {
    throw InputError("source and target dims differ");
  }

  Eigen::MatrixXd rows_s = AllRows(source);
  Eigen::MatrixXd rows_t = AllRows(target);
  if (!cmd.model_path.empty()) {
    const BackendModel model = LoadCheckpoint(cmd.model_path);
    rows_s = Forward(model, rows_s).latent;
    rows_t = Forward(model, rows_t).latent;
  }

  Eigen::MatrixXd all(rows_s.rows() + rows_t.rows(), rows_s.cols());
  all << rows_s, rows_t;
  const Projection2D proj = FitPca2(all);
  const Eigen::MatrixXd coords_s = proj.Apply(rows_s);
  const Eigen::MatrixXd coords_t = proj.Apply(rows_t);

  std::string body = "x,y,domain,label\n";
  char buf[96];
  auto append = [&body, &buf](const Eigen::MatrixXd& coords,
                              const Dataset& data, const char* domain) {
    for (int i = 0; i < data.NumRows(); ++i) {
      const int label = data.HasLabels() ? data.Label(i) : -1;
      std::snprintf(buf, sizeof(buf), "%.9g,%.9g,%s,%d\n", coords(i, 0),
                    coords(i, 1), domain, label);
      body += buf;
    }
  };
  append(coords_s, source, "source");
  append(coords_t, target, "target");
  const std::string csv_path = (dir / "projection.csv").string();
  WriteFileAtomic(csv_path, body);

  json cfg;
  cfg["source"] = cmd.source_path;
  cfg["target"] = cmd.target_path;
  cfg["model"] = cmd.model_path;
  cfg["out_dir"] = cmd.out_dir;

  RunManifest manifest;
  manifest.command = "project";
  manifest.config_json = cfg.dump(2);
  manifest.dataset_hashes[cmd.source_path] =
      HashHex(HashFileFnv1a64(cmd.source_path));
  manifest.dataset_hashes[cmd.target_path] =
      HashHex(HashFileFnv1a64(cmd.target_path));
  if (!cmd.model_path.empty()) {
    manifest.dataset_hashes[cmd.model_path] =
        HashHex(HashFileFnv1a64(cmd.model_path));
  }
  manifest.wall_seconds = SecondsSince(start);
  WriteManifestAtomic(manifest, (dir / "manifest_project.json").string());

  std::printf("project: wrote %lld rows to %s (var1=%.6g var2=%.6g)\n",
              static_cast<long long>(coords_s.rows() + coords_t.rows()),
              csv_path.c_str(), proj.variance(0), proj.variance(1));
  return 0;
}

}  // namespace otlid
