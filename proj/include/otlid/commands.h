// include/otlid/commands.h

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

#ifndef OTLID_COMMANDS_H_
#define OTLID_COMMANDS_H_

#include <cstdint>
#include <string>
#include <vector>

#include "otlid/adapt.h"
#include "otlid/dataset.h"
#include "otlid/model.h"

namespace otlid {

// Command argument structs. Each Run*Command loads its inputs, performs the
// work, writes its artifacts plus a manifest under out_dir, and returns 0.
// Errors surface as InputError / NumericError for the caller to map onto
// exit codes.

struct SynthCommand {
  SynthSpec spec;
  std::string out_dir = ".";
  FileFormat format = FileFormat::kCsv;
};

struct TrainCommand {
  std::string source_path;
  std::string out_dir = ".";
  int epochs = 20;
  int batch_size = 128;
  double lr = 0.001;
  std::uint64_t seed = 42;
  BatchPolicy policy = BatchPolicy::kWrapAround;
  int latent_dim = 0;  // 0: min(200, input dim)
  bool lda_init = false;
};

struct AdaptCommand {
  std::string source_path;
  std::string target_path;
  std::string out_dir = ".";
  AdaptConfig config;
  bool dump_plan = false;
  std::string det_csv;  // when set, DET points of the after-report
};

struct EvalCommand {
  std::string model_path;
  std::string data_path;
  std::string out_dir = ".";
  double p_target = 0.5;
  std::string det_csv;
};

struct SweepCommand {
  std::string source_path;
  std::string target_path;
  std::string out_dir = ".";
  std::vector<double> alphas;
  std::vector<double> betas;
  AdaptConfig base;
};

struct ProjectCommand {
  std::string source_path;
  std::string target_path;
  std::string model_path;  // empty: project raw embeddings
  std::string out_dir = ".";
};

int RunSynthCommand(const SynthCommand& cmd);
int RunTrainCommand(const TrainCommand& cmd);
int RunAdaptCommand(const AdaptCommand& cmd);
int RunEvalCommand(const EvalCommand& cmd);
int RunSweepCommand(const SweepCommand& cmd);
int RunProjectCommand(const ProjectCommand& cmd);

// $OTLID_OUT_DIR when set, else ".".
std::string DefaultOutDir();

// Enum <-> flag-value plumbing.
SolverKind SolverKindFromString(const std::string& name);
std::string SolverKindToString(SolverKind kind);
BatchPolicy BatchPolicyFromString(const std::string& name);
std::string BatchPolicyToString(BatchPolicy policy);

// JSON config round-trip. FromJson starts from `base` and overrides the
// keys present in the text; unknown keys are an error.
AdaptConfig AdaptConfigFromJson(const std::string& json_text,
                                const AdaptConfig& base);
std::string AdaptConfigToJson(const AdaptConfig& config);
SynthSpec SynthSpecFromJson(const std::string& json_text,
                            const SynthSpec& base);
std::string SynthSpecToJson(const SynthSpec& spec);

}  // namespace otlid

#endif  // OTLID_COMMANDS_H_
