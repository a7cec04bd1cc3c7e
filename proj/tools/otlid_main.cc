// tools/otlid_main.cc

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

// Command-line front end. Exit codes: 0 success, 2 usage or input error,
// 3 numeric failure. Option precedence: built-in defaults, then --config
// JSON, then explicit flags.

#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "otlid/commands.h"
#include "otlid/errors.h"
#include "otlid/version.h"

namespace {

using otlid::AdaptConfig;

std::string ReadTextFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw otlid::InputError("cannot open config file: " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

// Flag values plus the hooks that copy a flag into an AdaptConfig only when
// the user actually passed it, so the precedence defaults < config file <
// flags holds.
struct AdaptFlags {
  double alpha = 0.1;
  double beta = 0.0003;
  double lambda = 1.0;
  int batch_size = 128;
  int epochs = 30;
  int pretrain_epochs = 20;
  std::string solver = "auto";
  double epsilon = 0.1;
  int max_iters = 10000;
  double marginal_tol = 1e-9;
  double lr = 0.001;
  std::uint64_t seed = 42;
  std::string policy = "wrap";
  int latent_dim = 0;
  bool lda_init = false;
  double p_target = 0.5;
  std::string config_path;

  std::vector<std::pair<CLI::Option*, std::function<void(AdaptConfig*)>>>
      appliers;

  void Register(CLI::App* sub) {
    auto add = [this](CLI::Option* opt,
                      std::function<void(AdaptConfig*)> apply) {
      appliers.emplace_back(opt, std::move(apply));
    };
    add(sub->add_option("--alpha", alpha, "feature-distance weight")
            ->capture_default_str(),
        [this](AdaptConfig* c) { c->alpha = alpha; });
    add(sub->add_option("--beta", beta, "classifier-distance weight")
            ->capture_default_str(),
        [this](AdaptConfig* c) { c->beta = beta; });
    add(sub->add_option("--lambda", lambda, "adaptation-loss weight")
            ->capture_default_str(),
        [this](AdaptConfig* c) { c->lambda = lambda; });
    add(sub->add_option("--batch-size", batch_size, "paired mini-batch size")
            ->capture_default_str(),
        [this](AdaptConfig* c) { c->batch_size = batch_size; });
    add(sub->add_option("--epochs", epochs, "adaptation epochs")
            ->capture_default_str(),
        [this](AdaptConfig* c) { c->epochs = epochs; });
    add(sub->add_option("--pretrain-epochs", pretrain_epochs,
                        "source-only epochs before adaptation")
            ->capture_default_str(),
        [this](AdaptConfig* c) { c->pretrain_epochs = pretrain_epochs; });
    add(sub->add_option("--solver", solver, "plan solver")
            ->check(CLI::IsMember({"auto", "exact", "sinkhorn"}))
            ->capture_default_str(),
        [this](AdaptConfig* c) {
          c->solver = otlid::SolverKindFromString(solver);
        });
    add(sub->add_option("--epsilon", epsilon,
                        "Sinkhorn entropic regularizer")
            ->capture_default_str(),
        [this](AdaptConfig* c) { c->sinkhorn.epsilon = epsilon; });
    add(sub->add_option("--max-iters", max_iters, "Sinkhorn iteration cap")
            ->capture_default_str(),
        [this](AdaptConfig* c) { c->sinkhorn.max_iters = max_iters; });
    add(sub->add_option("--marginal-tol", marginal_tol,
                        "Sinkhorn marginal tolerance")
            ->capture_default_str(),
        [this](AdaptConfig* c) { c->sinkhorn.marginal_tol = marginal_tol; });
    add(sub->add_option("--lr", lr, "Adam learning rate")
            ->capture_default_str(),
        [this](AdaptConfig* c) { c->lr = lr; });
    add(sub->add_option("--seed", seed, "RNG seed")->capture_default_str(),
        [this](AdaptConfig* c) { c->seed = seed; });
    add(sub->add_option("--policy", policy, "epoch tail policy")
            ->check(CLI::IsMember({"wrap", "drop"}))
            ->capture_default_str(),
        [this](AdaptConfig* c) {
          c->policy = otlid::BatchPolicyFromString(policy);
        });
    add(sub->add_option("--latent-dim", latent_dim,
                        "projection width (0: min(200, input dim))")
            ->capture_default_str(),
        [this](AdaptConfig* c) { c->latent_dim = latent_dim; });
    add(sub->add_flag("--lda-init", lda_init,
                      "initialize the projection from a source LDA fit"),
        [this](AdaptConfig* c) { c->lda_init = lda_init; });
    add(sub->add_option("--p-target", p_target, "Cavg target prior")
            ->capture_default_str(),
        [this](AdaptConfig* c) { c->p_target = p_target; });
    sub->add_option("--config", config_path,
                    "JSON config file (flags override it)");
  }

  AdaptConfig Resolve() const {
    AdaptConfig config;
    if (!config_path.empty()) {
      config = otlid::AdaptConfigFromJson(ReadTextFile(config_path), config);
    }
    for (const auto& [opt, apply] : appliers) {
      if (opt->count() > 0) apply(&config);
    }
    return config;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "otlid: optimal-transport domain adaptation for language-identification "
      "back-ends"};
  app.set_version_flag("--version", otlid::kVersion);
  app.require_subcommand(1);
  const std::string default_out = otlid::DefaultOutDir();

  // synth
  auto* synth = app.add_subcommand(
      "synth", "generate a synthetic source/target dataset pair");
  otlid::SynthCommand synth_cmd;
  synth_cmd.out_dir = default_out;
  std::string synth_format = "csv";
  std::string synth_config;
  struct {
    int classes = 6, dim = 64, per_class = 300;
    double center_scale = 0.1, within_stddev = 0.3, rotation = 0.6,
           shift = 4.0;
    std::uint64_t seed = 42;
  } sf;
  CLI::Option* o_classes =
      synth->add_option("--classes", sf.classes, "number of classes")
          ->capture_default_str();
  CLI::Option* o_dim = synth->add_option("--dim", sf.dim, "embedding dim")
                           ->capture_default_str();
  CLI::Option* o_per =
      synth->add_option("--per-class", sf.per_class, "rows per class")
          ->capture_default_str();
  CLI::Option* o_scale = synth->add_option("--center-scale", sf.center_scale,
                                           "class-center spread")
                             ->capture_default_str();
  CLI::Option* o_std =
      synth->add_option("--within-stddev", sf.within_stddev,
                        "within-class standard deviation")
          ->capture_default_str();
  CLI::Option* o_rot = synth->add_option("--rotation", sf.rotation,
                                         "target rotation angle (radians)")
                           ->capture_default_str();
  CLI::Option* o_shift =
      synth->add_option("--shift", sf.shift, "target shift vector norm")
          ->capture_default_str();
  CLI::Option* o_sseed =
      synth->add_option("--seed", sf.seed, "RNG seed")->capture_default_str();
  synth->add_option("--out-dir", synth_cmd.out_dir, "output directory")
      ->capture_default_str();
  synth->add_option("--format", synth_format, "output format")
      ->check(CLI::IsMember({"csv", "raw"}))
      ->capture_default_str();
  synth->add_option("--config", synth_config,
                    "JSON spec file (flags override it)");

  // train
  auto* train = app.add_subcommand(
      "train", "train the source-only back-end classifier");
  otlid::TrainCommand train_cmd;
  train_cmd.out_dir = default_out;
  std::string train_policy = "wrap";
  train->add_option("--source", train_cmd.source_path,
                    "labeled source dataset")
      ->required();
  train->add_option("--out-dir", train_cmd.out_dir, "output directory")
      ->capture_default_str();
  train->add_option("--epochs", train_cmd.epochs, "training epochs")
      ->capture_default_str();
  train->add_option("--batch-size", train_cmd.batch_size, "mini-batch size")
      ->capture_default_str();
  train->add_option("--lr", train_cmd.lr, "Adam learning rate")
      ->capture_default_str();
  train->add_option("--seed", train_cmd.seed, "RNG seed")
      ->capture_default_str();
  train->add_option("--policy", train_policy, "epoch tail policy")
      ->check(CLI::IsMember({"wrap", "drop"}))
      ->capture_default_str();
  train->add_option("--latent-dim", train_cmd.latent_dim,
                    "projection width (0: min(200, input dim))")
      ->capture_default_str();
  train->add_flag("--lda-init", train_cmd.lda_init,
                  "initialize the projection from a source LDA fit");

  // adapt
  auto* adapt = app.add_subcommand(
      "adapt", "adapt the back-end to an unlabeled target domain");
  otlid::AdaptCommand adapt_cmd;
  adapt_cmd.out_dir = default_out;
  AdaptFlags adapt_flags;
  adapt->add_option("--source", adapt_cmd.source_path,
                    "labeled source dataset")
      ->required();
  adapt->add_option("--target", adapt_cmd.target_path, "target dataset")
      ->required();
  adapt->add_option("--out-dir", adapt_cmd.out_dir, "output directory")
      ->capture_default_str();
  adapt_flags.Register(adapt);
  adapt->add_flag("--dump-plan", adapt_cmd.dump_plan,
                  "write one transport plan as plan.csv");
  adapt->add_option("--det-csv", adapt_cmd.det_csv,
                    "write after-adaptation DET points to this CSV");

  // eval
  auto* eval = app.add_subcommand("eval", "score a checkpoint on a dataset");
  otlid::EvalCommand eval_cmd;
  eval_cmd.out_dir = default_out;
  eval->add_option("--model", eval_cmd.model_path, "model checkpoint")
      ->required();
  eval->add_option("--data", eval_cmd.data_path, "labeled dataset")
      ->required();
  eval->add_option("--out-dir", eval_cmd.out_dir, "output directory")
      ->capture_default_str();
  eval->add_option("--p-target", eval_cmd.p_target, "Cavg target prior")
      ->capture_default_str();
  eval->add_option("--det-csv", eval_cmd.det_csv,
                   "write DET points to this CSV");

  // sweep
  auto* sweep = app.add_subcommand(
      "sweep", "grid sweep over (alpha, beta) adaptation weights");
  otlid::SweepCommand sweep_cmd;
  sweep_cmd.out_dir = default_out;
  AdaptFlags sweep_flags;
  sweep->add_option("--source", sweep_cmd.source_path,
                    "labeled source dataset")
      ->required();
  sweep->add_option("--target", sweep_cmd.target_path, "target dataset")
      ->required();
  sweep->add_option("--out-dir", sweep_cmd.out_dir, "output directory")
      ->capture_default_str();
  sweep->add_option("--alphas", sweep_cmd.alphas, "alpha grid values")
      ->delimiter(',')
      ->required();
  sweep->add_option("--betas", sweep_cmd.betas, "beta grid values")
      ->delimiter(',')
      ->required();
  sweep_flags.Register(sweep);

  // project
  auto* project = app.add_subcommand(
      "project", "2-D PCA projection of both domains for plotting");
  otlid::ProjectCommand project_cmd;
  project_cmd.out_dir = default_out;
  project->add_option("--source", project_cmd.source_path, "source dataset")
      ->required();
  project->add_option("--target", project_cmd.target_path, "target dataset")
      ->required();
  project->add_option("--model", project_cmd.model_path,
                      "optional checkpoint; projects latents instead of raw "
                      "embeddings");
  project->add_option("--out-dir", project_cmd.out_dir, "output directory")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*synth) {
      otlid::SynthSpec spec;
      if (!synth_config.empty()) {
        spec = otlid::SynthSpecFromJson(ReadTextFile(synth_config), spec);
      }
      if (o_classes->count() > 0) spec.class_count = sf.classes;
      if (o_dim->count() > 0) spec.dim = sf.dim;
      if (o_per->count() > 0) spec.per_class_count = sf.per_class;
      if (o_scale->count() > 0) spec.class_center_scale = sf.center_scale;
      if (o_std->count() > 0) spec.within_class_stddev = sf.within_stddev;
      if (o_rot->count() > 0) spec.rotation_angle = sf.rotation;
      if (o_shift->count() > 0) spec.shift_vector_norm = sf.shift;
      if (o_sseed->count() > 0) spec.seed = sf.seed;
      synth_cmd.spec = spec;
      synth_cmd.format = synth_format == "csv" ? otlid::FileFormat::kCsv
                                               : otlid::FileFormat::kRawF32;
      return otlid::RunSynthCommand(synth_cmd);
    }
    if (*train) {
      train_cmd.policy = otlid::BatchPolicyFromString(train_policy);
      return otlid::RunTrainCommand(train_cmd);
    }
    if (*adapt) {
      adapt_cmd.config = adapt_flags.Resolve();
      return otlid::RunAdaptCommand(adapt_cmd);
    }
    if (*eval) {
      return otlid::RunEvalCommand(eval_cmd);
    }
    if (*sweep) {
      sweep_cmd.base = sweep_flags.Resolve();
      return otlid::RunSweepCommand(sweep_cmd);
    }
    if (*project) {
      return otlid::RunProjectCommand(project_cmd);
    }
  } catch (const otlid::InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const otlid::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
