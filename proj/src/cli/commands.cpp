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

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "sgt/checkpoint.hpp"
#include "sgt/cli.hpp"
#include "sgt/image_io.hpp"
#include "sgt/text_io.hpp"

namespace sgt {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr const char* kCheckpoint = "checkpoint.sgtckpt";
constexpr const char* kLastGood = "checkpoint_last_good.sgtckpt";
constexpr const char* kSidecar = "config.json";
constexpr const char* kTrainLog = "train_log.jsonl";
constexpr const char* kReport = "report.json";
constexpr const char* kMaps = "maps";

bool non_empty_dir(const fs::path& p) { return fs::exists(p) && !fs::is_empty(p); }

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

// Removes what a previous run of the same command left behind, never
// anything else.
void clear_outputs(const fs::path& dir, std::initializer_list<const char*> names) {
  for (const char* n : names) fs::remove_all(dir / n);
}

void prepare_out(const fs::path& dir, bool force, std::initializer_list<const char*> owned) {
  if (non_empty_dir(dir)) {
    if (!force) throw ConfigError("output directory " + dir.string() + " is not empty (use --force)");
    clear_outputs(dir, owned);
  }
  fs::create_directories(dir);
}

fs::path dataset_root(const ExperimentConfig& c, const std::optional<fs::path>& override_root) {
  if (override_root) return *override_root;
  if (c.dataset.empty()) throw ConfigError("no dataset root: set \"dataset\" in the config or pass --data");
  return c.dataset;
}

void check_grid(const SgtConfig& model, const fs::path& root, Split split) {
  const Manifest m = load_manifest(root / to_string(split) / "manifest.csv");
  if (m.image_size != model.image_size || m.patch_size != model.patch_size) {
    throw ConfigError("dataset " + root.string() + " has image " + std::to_string(m.image_size) + " / patch " +
                      std::to_string(m.patch_size) + " but the model expects image " +
                      std::to_string(model.image_size) + " / patch " + std::to_string(model.patch_size));
  }
}

std::vector<TrainExample> training_examples(const SgtConfig& model, std::span<const LoadedSample> samples) {
  std::vector<TrainExample> out;
  out.reserve(samples.size());
  const int g = model.grid_side();
  for (const auto& s : samples) {
    if (s.label < 0 || s.label >= model.num_classes) {
      throw ConfigError("sample " + s.sample_id + " has label " + std::to_string(s.label) + " outside the model's " +
                        std::to_string(model.num_classes) + " classes");
    }
    TrainExample ex{s.image, s.label, std::nullopt};
    if (model.mask_mode != MaskMode::off) ex.mask = top_m_mask(pool_to_grid(s.saliency, g, g), model.keep_count);
    out.push_back(std::move(ex));
  }
  return out;
}

json epoch_json(const EpochRecord& r) {
  return {{"epoch", r.epoch},
          {"lr", r.lr},
          {"train_loss", r.train_loss},
          {"train_acc", r.train_acc},
          {"masked_batch_fraction", r.masked_batch_fraction},
          {"batches", r.batches},
          {"masked_batches", r.masked_batches}};
}

json sidecar_json(const ExperimentConfig& c) { return {{"config", to_json(c)}, {"config_hash", config_hash(c)}}; }

// Trains one run into `dir`. Returns 0, or 3 when training diverged.
int run_training(const ExperimentConfig& c, std::span<const LoadedSample> train_split, const fs::path& dir,
                 bool quiet, std::ostream& log) {
  const auto data = training_examples(c.model, train_split);
  write_text(dir / kSidecar, sidecar_json(c).dump(2) + "\n");
  std::ofstream jsonl(dir / kTrainLog, std::ios::binary | std::ios::trunc);
  if (!jsonl) throw std::runtime_error("cannot write " + (dir / kTrainLog).string());

  const SgtParams params = SgtParams::init(c.model, c.seed);
  try {
    train(params, c.model, c.train, data, [&](const EpochRecord& r) {
      jsonl << epoch_json(r).dump() << '\n';
      jsonl.flush();
      if (!quiet) {
        log << "epoch " << r.epoch << "/" << c.train.epochs << "  loss " << std::fixed << std::setprecision(4)
            << r.train_loss << "  acc " << r.train_acc << "  masked " << r.masked_batches << "/" << r.batches
            << std::defaultfloat << std::endl;
      }
    });
  } catch (const TrainingDiverged& e) {
    const auto named = e.last_good().named();
    write_checkpoint(dir / kLastGood, named);
    log << "training diverged in epoch " << e.epoch() << ": " << e.what() << "\n"
        << "parameters from the start of that epoch saved to " << (dir / kLastGood).string() << std::endl;
    return 3;
  }
  const auto named = params.named();
  write_checkpoint(dir / kCheckpoint, named);
  return 0;
}

ExperimentConfig read_sidecar(const fs::path& run, std::string& stored_hash) {
  const json side = read_json(run / kSidecar);
  if (!side.is_object() || !side.contains("config") || !side.contains("config_hash")) {
    throw FormatError((run / kSidecar).string() + ": expected keys 'config' and 'config_hash'");
  }
  stored_hash = side.at("config_hash").get<std::string>();
  ExperimentConfig c = experiment_from_json(side.at("config"));
  if (config_hash(c) != stored_hash) {
    throw FormatError((run / kSidecar).string() + ": config_hash does not match its config");
  }
  return c;
}

json evaluate(const ExperimentConfig& c, const SgtParams& params, std::span<const LoadedSample> samples,
              const std::string& split, double kappa, const fs::path& out, bool dump_maps) {
  const int n = static_cast<int>(samples.size());
  if (n == 0) throw ConfigError("evaluation split '" + split + "' is empty");
  for (const auto& s : samples) {
    if (s.label < 0 || s.label >= c.model.num_classes) {
      throw ConfigError("sample " + s.sample_id + " has label outside the model's classes");
    }
  }
  if (dump_maps) fs::create_directories(out / kMaps);

  Matrix logits(n, c.model.num_classes);
  std::vector<int> labels(static_cast<std::size_t>(n));
  json per_sample = json::array();
  int flagged_gc = 0, flagged_ro = 0, empty_gc = 0;
  for (int start = 0; start < n; start += c.eval.batch_size) {
    const int batch = std::min(c.eval.batch_size, n - start);
    std::vector<Matrix> images;
    for (int b = 0; b < batch; ++b) images.push_back(samples[static_cast<std::size_t>(start + b)].image);
    Tape tape;
    const ForwardTrace trace = forward(tape, params, c.model, {stack_images(images), batch, nullptr, true});
    std::vector<int> preds(static_cast<std::size_t>(batch));
    for (int b = 0; b < batch; ++b) {
      Eigen::Index k = 0;
      trace.logits.value().row(b).maxCoeff(&k);
      preds[static_cast<std::size_t>(b)] = static_cast<int>(k);
    }
    logits.middleRows(start, batch) = trace.logits.value();
    backprop_targets(tape, trace, preds);
    params.zero_grad();

    for (int b = 0; b < batch; ++b) {
      const auto& s = samples[static_cast<std::size_t>(start + b)];
      labels[static_cast<std::size_t>(start + b)] = s.label;
      const AttributionMap gc = gradcam_vit(trace, b);
      const AttributionMap ro = attention_rollout(trace, b);
      PslSample g;
      if (gc.values.sum() > 0) {
        g = psl_sample(gc.values, s.relevant_patches, kappa);
      } else {
        // All-zero Grad-CAM: no evidence on the foreground, count as shortcut.
        g.uniform_baseline = static_cast<double>(s.relevant_patches.size()) / c.model.num_patches();
        g.flagged = true;
        ++empty_gc;
      }
      const PslSample r = psl_sample(ro.values, s.relevant_patches, kappa);
      flagged_gc += g.flagged;
      flagged_ro += r.flagged;
      per_sample.push_back({{"sample_id", s.sample_id},
                            {"label", s.label},
                            {"pred", preds[static_cast<std::size_t>(b)]},
                            {"uniform_baseline", g.uniform_baseline},
                            {"gradcam_relevant_mass", g.relevant_mass},
                            {"gradcam_flagged", g.flagged},
                            {"rollout_relevant_mass", r.relevant_mass},
                            {"rollout_flagged", r.flagged}});
      if (dump_maps) {
        const fs::path base = out / kMaps / s.sample_id;
        write_heatmap_pgm(base.string() + "_gradcam.pgm", gc.values);
        write_f64(base.string() + "_gradcam.f64", gc.values);
        write_heatmap_pgm(base.string() + "_rollout.pgm", ro.values);
        write_f64(base.string() + "_rollout.f64", ro.values);
      }
    }
  }

  const ClsMetrics m = cls_metrics(logits, labels);
  json confusion = json::array();
  for (Eigen::Index r = 0; r < m.confusion.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index col = 0; col < m.confusion.cols(); ++col) row.push_back(m.confusion(r, col));
    confusion.push_back(row);
  }
  const double psl_gc = static_cast<double>(flagged_gc) / n;
  json report = {{"split", split},
                 {"kappa", kappa},
                 {"n", n},
                 {"accuracy", m.accuracy},
                 {"macro_f1", m.macro_f1},
                 {"auc", m.auc ? json(*m.auc) : json(nullptr)},
                 {"psl", psl_gc},
                 {"psl_gradcam", psl_gc},
                 {"psl_rollout", static_cast<double>(flagged_ro) / n},
                 {"gradcam_empty_maps", empty_gc},
                 {"confusion", confusion},
                 {"config_hash", config_hash(c)},
                 {"per_sample", per_sample}};
  if (!m.auc) report["auc_error"] = m.auc_error;
  write_text(out / kReport, report.dump(2) + "\n");
  return report;
}

SgtParams load_params(const SgtConfig& model, const fs::path& checkpoint) {
  const SgtParams params = SgtParams::zeros(model);
  const auto named = params.named();
  load_into(named, read_checkpoint(checkpoint));
  return params;
}

std::string csv_number(const json& v) { return v.is_null() ? "" : detail::format_double(v.get<double>()); }

}  // namespace

std::vector<LoadedSample> load_split(const fs::path& root, Split split) {
  const fs::path dir = root / to_string(split);
  const Manifest m = load_manifest(dir / "manifest.csv");
  std::vector<LoadedSample> out;
  out.reserve(m.rows.size());
  for (const auto& row : m.rows) {
    Image img = read_pnm(dir / row.image_path);
    if (img.height != m.image_size || img.width != m.image_size) {
      throw FormatError((dir / row.image_path).string() + ": size differs from the manifest's image_size");
    }
    Matrix sal = read_f64(dir / row.saliency_path);
    if (sal.rows() != img.height || sal.cols() != img.width) {
      throw FormatError((dir / row.saliency_path).string() + ": saliency size differs from its image");
    }
    out.push_back({row.sample_id, row.label, std::move(img.planes), std::move(sal), row.relevant_patches});
  }
  return out;
}

int resolve_jobs(int requested) {
  int n = requested > 0 ? requested : static_cast<int>(std::thread::hardware_concurrency());
  if (n < 1) n = 1;
  if (const char* env = std::getenv("SGT_THREADS")) {
    try {
      const long long cap = detail::parse_int(env, "SGT_THREADS");
      if (cap >= 1) n = std::min<long long>(n, cap);
    } catch (const FormatError&) {
      throw ConfigError(std::string("SGT_THREADS must be a positive integer, got '") + env + "'");
    }
  }
  return n;
}

int cmd_gen(const GenOptions& o, std::ostream& log) {
  SpurSpec spec;
  if (o.spec_path) spec = spur_spec_from_json(read_json(*o.spec_path));
  if (o.seed) spec.seed = *o.seed;
  spec.validate();
  prepare_out(o.out, o.force, {"train", "iid_test", "ood_test", "spec.json"});

  for (Split split : {Split::train, Split::iid_test, Split::ood_test}) {
    const auto samples = generate(spec, split);
    write_split(o.out, spec, split, samples);
    log << to_string(split) << ": " << samples.size() << " samples" << std::endl;
  }
  write_text(o.out / "spec.json", to_json(spec).dump(2) + "\n");
  return 0;
}

int cmd_train(const TrainOptions& o, std::ostream& log) {
  ExperimentConfig c = load_experiment(o.config_path);
  if (o.seed) c.seed = *o.seed;
  if (o.data) c.dataset = o.data->string();
  if (o.baseline) {
    c.model.mask_mode = MaskMode::off;
    c.model.reinjection = false;
  }
  c.resolve();
  const fs::path root = dataset_root(c, std::nullopt);
  check_grid(c.model, root, Split::train);
  const auto train_split = load_split(root, Split::train);
  prepare_out(o.out, o.force, {kCheckpoint, kLastGood, kSidecar, kTrainLog, kReport, kMaps});
  return run_training(c, train_split, o.out, o.quiet, log);
}

int cmd_eval(const EvalOptions& o, std::ostream& log) {
  std::string stored_hash;
  ExperimentConfig c = read_sidecar(o.run, stored_hash);
  if (o.config_path) {
    ExperimentConfig given = load_experiment(*o.config_path);
    if (config_hash(given) != stored_hash) {
      if (!o.allow_mismatch) {
        throw ConfigError("config hash " + config_hash(given) + " does not match checkpoint's " + stored_hash +
                          " (use --allow-mismatch)");
      }
      log << "warning: config hash mismatch ignored" << std::endl;
    }
  }
  if (o.split) c.eval.split = *o.split;
  if (o.kappa) c.eval.kappa = *o.kappa;
  c.resolve();
  const fs::path root = dataset_root(c, o.data);
  const Split split = split_from_string(c.eval.split);
  check_grid(c.model, root, split);
  const auto samples = load_split(root, split);
  const SgtParams params = load_params(c.model, o.run / kCheckpoint);

  const fs::path out = o.out.empty() ? o.run : o.out;
  fs::create_directories(out);
  clear_outputs(out, {kReport, kMaps});
  const json report = evaluate(c, params, samples, c.eval.split, c.eval.kappa, out, o.dump_maps);
  if (!o.quiet) {
    log << c.eval.split << ": n=" << report["n"] << " accuracy=" << report["accuracy"]
        << " macro_f1=" << report["macro_f1"] << " auc=" << report["auc"] << " psl_gradcam=" << report["psl_gradcam"]
        << " psl_rollout=" << report["psl_rollout"] << std::endl;
  }
  return 0;
}

int cmd_ablate(const AblateOptions& o, std::ostream& log) {
  ExperimentConfig base = load_experiment(o.config_path);
  if (o.seed) base.seed = *o.seed;
  if (o.data) base.dataset = o.data->string();
  base.resolve();

  auto axis = [](const auto& values, auto fallback) {
    using T = decltype(fallback);
    std::vector<T> out(values.begin(), values.end());
    if (out.empty()) out.push_back(fallback);
    return out;
  };
  const auto ts = axis(base.ablation.guidance_threshold, base.model.guidance_threshold);
  const auto layers = axis(base.ablation.mask_layer, base.model.mask_layer);
  const auto ms = axis(base.ablation.keep_count, base.model.keep_count);
  const auto reinj = axis(base.ablation.reinjection, base.model.reinjection);

  std::vector<ExperimentConfig> cells;
  for (double t : ts)
    for (int layer : layers)
      for (int m : ms)
        for (bool r : reinj) {
          ExperimentConfig c = base;
          c.model.guidance_threshold = t;
          c.model.mask_layer = layer;
          c.model.keep_count = m;
          c.model.reinjection = r;
          try {
            c.resolve();
          } catch (const ConfigError& e) {
            throw ConfigError("grid cell (T=" + detail::format_double(t) + ", mask_layer=" + std::to_string(layer) +
                              ", M=" + std::to_string(m) + ", reinjection=" + (r ? "true" : "false") +
                              "): " + e.what());
          }
          cells.push_back(std::move(c));
        }

  const fs::path root = dataset_root(base, std::nullopt);
  const Split split = split_from_string(base.eval.split);
  check_grid(base.model, root, Split::train);
  check_grid(base.model, root, split);
  const auto train_split = load_split(root, Split::train);
  const auto eval_split = load_split(root, split);

  if (non_empty_dir(o.out)) {
    if (!o.force) throw ConfigError("output directory " + o.out.string() + " is not empty (use --force)");
    fs::remove(o.out / "summary.csv");
    for (const auto& entry : fs::directory_iterator(o.out)) {
      if (entry.is_directory() && entry.path().filename().string().rfind("cell_", 0) == 0) fs::remove_all(entry);
    }
  }
  fs::create_directories(o.out);

  const int jobs = std::min<int>(resolve_jobs(o.jobs), static_cast<int>(cells.size()));
  log << cells.size() << " cells, " << jobs << " worker(s)" << std::endl;
  std::vector<json> reports(cells.size());
  std::vector<std::string> errors(cells.size());
  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      std::ostringstream name;
      name << "cell_" << std::setw(3) << std::setfill('0') << i;
      const fs::path dir = o.out / name.str();
      try {
        fs::create_directories(dir);
        std::ostringstream cell_log;
        if (run_training(cells[i], train_split, dir, true, cell_log) != 0) {
          errors[i] = "training diverged: " + cell_log.str();
        } else {
          const SgtParams params = load_params(cells[i].model, dir / kCheckpoint);
          reports[i] = evaluate(cells[i], params, eval_split, cells[i].eval.split, cells[i].eval.kappa, dir, false);
        }
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
      std::lock_guard lock(log_mutex);
      log << name.str() << (errors[i].empty() ? " done" : " failed: " + errors[i]) << std::endl;
    }
  };
  std::vector<std::thread> pool;
  for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  std::ostringstream csv;
  csv << "cell,guidance_threshold,mask_layer,keep_count,reinjection,accuracy,auc,macro_f1,psl,psl_gradcam,psl_rollout\n";
  int failed = 0;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto& m = cells[i].model;
    csv << i << ',' << detail::format_double(m.guidance_threshold) << ',' << m.mask_layer << ',' << m.keep_count << ','
        << (m.reinjection ? "true" : "false");
    if (errors[i].empty()) {
      const json& r = reports[i];
      csv << ',' << csv_number(r["accuracy"]) << ',' << csv_number(r["auc"]) << ',' << csv_number(r["macro_f1"]) << ','
          << csv_number(r["psl"]) << ',' << csv_number(r["psl_gradcam"]) << ',' << csv_number(r["psl_rollout"]);
    } else {
      ++failed;
      csv << ",,,,,,";
    }
    csv << '\n';
  }
  write_text(o.out / "summary.csv", csv.str());
  log << "summary written to " << (o.out / "summary.csv").string() << std::endl;
  return failed == 0 ? 0 : 1;
}

}  // namespace sgt
