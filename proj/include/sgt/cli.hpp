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

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "sgt/datagen.hpp"
#include "sgt/evaluation.hpp"
#include "sgt/train.hpp"

namespace sgt {

struct EvalSettings {
  double kappa = 1.0;
  int batch_size = 50;
  std::string split = "ood_test";

  bool operator==(const EvalSettings&) const = default;
};

/// Sweep axes for `sgt ablate`. An empty axis means "use the base config".
struct AblationGrid {
  std::vector<double> guidance_threshold;
  std::vector<int> mask_layer;
  std::vector<int> keep_count;
  std::vector<bool> reinjection;

  bool operator==(const AblationGrid&) const = default;
};

struct ExperimentConfig {
  std::string dataset;  // dataset root written by `sgt gen`
  std::uint64_t seed = 0;
  SgtConfig model;
  TrainConfig train;
  EvalSettings eval;
  AblationGrid ablation;

  /// Copies `seed` into the model and train sections and validates them.
  void resolve();
  bool operator==(const ExperimentConfig&) const = default;
};

// JSON binding. Parsing rejects unknown keys and wrong types with ConfigError.
nlohmann::json to_json(const ExperimentConfig& config);
ExperimentConfig experiment_from_json(const nlohmann::json& j);
ExperimentConfig load_experiment(const std::filesystem::path& path);
nlohmann::json to_json(const SpurSpec& spec);
SpurSpec spur_spec_from_json(const nlohmann::json& j);

/// FNV-1a (64 bit) over the canonical dump of the dataset, seed, model and
/// train sections, as 16 hex digits.
std::string config_hash(const ExperimentConfig& config);

/// One split read back from disk.
struct LoadedSample {
  std::string sample_id;
  int label = 0;
  Matrix image;     // C*H x W
  Matrix saliency;  // H x W
  std::vector<int> relevant_patches;
};
std::vector<LoadedSample> load_split(const std::filesystem::path& root, Split split);

// Commands. Each returns a process exit code; diagnostics go to `log`.

struct GenOptions {
  std::optional<std::filesystem::path> spec_path;
  std::filesystem::path out;
  std::optional<std::uint64_t> seed;
  bool force = false;
};
int cmd_gen(const GenOptions& options, std::ostream& log);

struct TrainOptions {
  std::filesystem::path config_path;
  std::filesystem::path out;
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> data;
  bool baseline = false;
  bool force = false;
  bool quiet = false;
};
int cmd_train(const TrainOptions& options, std::ostream& log);

struct EvalOptions {
  std::filesystem::path run;  // directory written by `sgt train`
  std::filesystem::path out;  // defaults to the run directory
  std::optional<std::filesystem::path> config_path;
  std::optional<std::filesystem::path> data;
  std::optional<std::string> split;
  std::optional<double> kappa;
  bool dump_maps = false;
  bool allow_mismatch = false;
  bool quiet = false;
};
int cmd_eval(const EvalOptions& options, std::ostream& log);

struct AblateOptions {
  std::filesystem::path config_path;
  std::filesystem::path out;
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> data;
  int jobs = 0;  // 0: hardware concurrency
  bool force = false;
};
int cmd_ablate(const AblateOptions& options, std::ostream& log);

/// Worker count after applying SGT_THREADS and the hardware limit.
int resolve_jobs(int requested);

}  // namespace sgt
