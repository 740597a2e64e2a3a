// Copyright 2026 The SGT Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <iostream>

#include "CLI11.hpp"
#include "sgt/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"SGT: saliency-guided vision transformer experiments"};
  app.require_subcommand(1);

  sgt::GenOptions gen;
  std::string gen_spec;
  std::uint64_t gen_seed = 0;
  auto* g = app.add_subcommand("gen", "Generate a SpurShapes dataset");
  g->add_option("--config", gen_spec, "Dataset spec JSON (defaults when omitted)")->check(CLI::ExistingFile);
  g->add_option("--out", gen.out, "Output directory")->required();
  auto* gen_seed_opt = g->add_option("--seed", gen_seed, "Override the spec seed");
  g->add_flag("--force", gen.force, "Replace an existing dataset");

  sgt::TrainOptions tr;
  std::uint64_t train_seed = 0;
  std::string train_data;
  auto* t = app.add_subcommand("train", "Train one model");
  t->add_option("--config", tr.config_path, "Experiment config JSON")->required()->check(CLI::ExistingFile);
  t->add_option("--out", tr.out, "Run directory")->required();
  auto* train_seed_opt = t->add_option("--seed", train_seed, "Override the config seed");
  auto* train_data_opt = t->add_option("--data", train_data, "Override the dataset root");
  t->add_flag("--baseline", tr.baseline, "Plain ViT: mask_mode=off, no reinjection");
  t->add_flag("--force", tr.force, "Overwrite a previous run");

  sgt::EvalOptions ev;
  std::string eval_config, eval_data, eval_split;
  double eval_kappa = 1.0;
  auto* e = app.add_subcommand("eval", "Evaluate a trained run");
  e->add_option("--run", ev.run, "Run directory written by train")->required()->check(CLI::ExistingDirectory);
  e->add_option("--out", ev.out, "Report directory (default: the run directory)");
  auto* eval_config_opt = e->add_option("--config", eval_config, "Config whose hash must match the run's");
  auto* eval_data_opt = e->add_option("--data", eval_data, "Override the dataset root");
  auto* eval_split_opt = e->add_option("--split", eval_split, "train, iid_test or ood_test");
  auto* eval_kappa_opt = e->add_option("--kappa", eval_kappa, "PSL threshold multiplier");
  e->add_flag("--dump-maps", ev.dump_maps, "Write per-sample attribution maps");
  e->add_flag("--allow-mismatch", ev.allow_mismatch, "Proceed despite a config hash mismatch");
  e->add_flag("--force", "Accepted for symmetry; eval always replaces its report");

  sgt::AblateOptions ab;
  std::uint64_t ablate_seed = 0;
  std::string ablate_data;
  auto* a = app.add_subcommand("ablate", "Sweep the ablation grid");
  a->add_option("--config", ab.config_path, "Experiment config JSON with an ablation section")
      ->required()
      ->check(CLI::ExistingFile);
  a->add_option("--out", ab.out, "Sweep directory")->required();
  auto* ablate_seed_opt = a->add_option("--seed", ablate_seed, "Override the config seed");
  auto* ablate_data_opt = a->add_option("--data", ablate_data, "Override the dataset root");
  a->add_option("--jobs", ab.jobs, "Worker threads (default: all cores, capped by SGT_THREADS)");
  a->add_flag("--force", ab.force, "Replace previous sweep outputs");

  CLI11_PARSE(app, argc, argv);

  try {
    if (g->parsed()) {
      if (!gen_spec.empty()) gen.spec_path = gen_spec;
      if (*gen_seed_opt) gen.seed = gen_seed;
      return sgt::cmd_gen(gen, std::cout);
    }
    if (t->parsed()) {
      if (*train_seed_opt) tr.seed = train_seed;
      if (*train_data_opt) tr.data = train_data;
      return sgt::cmd_train(tr, std::cout);
    }
    if (e->parsed()) {
      if (*eval_config_opt) ev.config_path = eval_config;
      if (*eval_data_opt) ev.data = eval_data;
      if (*eval_split_opt) ev.split = eval_split;
      if (*eval_kappa_opt) ev.kappa = eval_kappa;
      return sgt::cmd_eval(ev, std::cout);
    }
    if (a->parsed()) {
      if (*ablate_seed_opt) ab.seed = ablate_seed;
      if (*ablate_data_opt) ab.data = ablate_data;
      return sgt::cmd_ablate(ab, std::cout);
    }
  } catch (const sgt::ConfigError& ex) {
    std::cerr << "error: " << ex.what() << std::endl;
    return 2;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << std::endl;
    return 1;
  }
  return 0;
}
