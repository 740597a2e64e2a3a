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

#include <cstdio>
#include <fstream>
#include <set>

#include "sgt/cli.hpp"

namespace sgt {

using nlohmann::json;

namespace {

// Reads fields from one JSON object, remembering which keys were consumed so
// leftovers can be reported as unknown.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + ": expected a JSON object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    const json& v = j_.at(key);
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ConfigError("expected a boolean");
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) throw ConfigError("expected an integer");
        if constexpr (std::is_unsigned_v<T>) {
          if (!v.is_number_unsigned() && v.get<long long>() < 0) throw ConfigError("expected a non-negative integer");
        }
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw ConfigError("expected a number");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw ConfigError("expected a string");
      }
      out = v.get<T>();
    } catch (const ConfigError& e) {
      throw ConfigError(where_ + "." + key + ": " + e.what());
    } catch (const json::exception& e) {
      throw ConfigError(where_ + "." + key + ": " + e.what());
    }
  }

  template <typename T>
  void read_list(const char* key, std::vector<T>& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    const json& v = j_.at(key);
    if (!v.is_array()) throw ConfigError(where_ + "." + key + ": expected an array");
    out.clear();
    for (std::size_t i = 0; i < v.size(); ++i) {
      json wrapper = {{"item", v[i]}};
      ObjectReader item(wrapper, where_ + "." + key + "[" + std::to_string(i) + "]");
      T value{};
      item.read("item", value);
      out.push_back(value);
    }
  }

  const json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw ConfigError(where_ + ": unknown key '" + key + "'");
    }
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

json model_to_json(const SgtConfig& m) {
  return {{"image_size", m.image_size},
          {"patch_size", m.patch_size},
          {"channels", m.channels},
          {"embed_dim", m.embed_dim},
          {"depth", m.depth},
          {"heads", m.heads},
          {"mlp_ratio", m.mlp_ratio},
          {"num_classes", m.num_classes},
          {"keep_count", m.keep_count},
          {"mask_mode", to_string(m.mask_mode)},
          {"reinjection", m.reinjection},
          {"mask_layer", m.mask_layer},
          {"guidance_threshold", m.guidance_threshold}};
}

json train_to_json(const TrainConfig& t) {
  return {{"epochs", t.epochs},
          {"batch_size", t.batch_size},
          {"base_lr", t.base_lr},
          {"warmup_epochs", t.warmup_epochs},
          {"beta1", t.adam.beta1},
          {"beta2", t.adam.beta2},
          {"eps", t.adam.eps},
          {"weight_decay", t.adam.weight_decay},
          {"coupled_wd", t.adam.coupled_wd}};
}

json bools_to_json(const std::vector<bool>& v) {
  json out = json::array();
  for (bool b : v) out.push_back(b);
  return out;
}

std::string fnv1a_hex(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace

void ExperimentConfig::resolve() {
  model.seed = seed;
  train.seed = seed;
  model.validate();
  train.validate();
  if (eval.batch_size < 1) throw ConfigError("eval.batch_size must be >= 1");
  if (!(eval.kappa >= 0)) throw ConfigError("eval.kappa must be >= 0");
  split_from_string(eval.split);
}

json to_json(const ExperimentConfig& c) {
  return {{"dataset", c.dataset},
          {"seed", c.seed},
          {"model", model_to_json(c.model)},
          {"train", train_to_json(c.train)},
          {"eval", {{"kappa", c.eval.kappa}, {"batch_size", c.eval.batch_size}, {"split", c.eval.split}}},
          {"ablation",
           {{"guidance_threshold", c.ablation.guidance_threshold},
            {"mask_layer", c.ablation.mask_layer},
            {"keep_count", c.ablation.keep_count},
            {"reinjection", bools_to_json(c.ablation.reinjection)}}}};
}

ExperimentConfig experiment_from_json(const json& j) {
  ExperimentConfig c;
  ObjectReader top(j, "config");
  top.read("dataset", c.dataset);
  top.read("seed", c.seed);
  if (const json* m = top.child("model")) {
    ObjectReader r(*m, "model");
    r.read("image_size", c.model.image_size);
    r.read("patch_size", c.model.patch_size);
    r.read("channels", c.model.channels);
    r.read("embed_dim", c.model.embed_dim);
    r.read("depth", c.model.depth);
    r.read("heads", c.model.heads);
    r.read("mlp_ratio", c.model.mlp_ratio);
    r.read("num_classes", c.model.num_classes);
    r.read("keep_count", c.model.keep_count);
    std::string mode = to_string(c.model.mask_mode);
    r.read("mask_mode", mode);
    c.model.mask_mode = mask_mode_from_string(mode);
    r.read("reinjection", c.model.reinjection);
    r.read("mask_layer", c.model.mask_layer);
    r.read("guidance_threshold", c.model.guidance_threshold);
    r.finish();
  }
  if (const json* t = top.child("train")) {
    ObjectReader r(*t, "train");
    r.read("epochs", c.train.epochs);
    r.read("batch_size", c.train.batch_size);
    r.read("base_lr", c.train.base_lr);
    r.read("warmup_epochs", c.train.warmup_epochs);
    r.read("beta1", c.train.adam.beta1);
    r.read("beta2", c.train.adam.beta2);
    r.read("eps", c.train.adam.eps);
    r.read("weight_decay", c.train.adam.weight_decay);
    r.read("coupled_wd", c.train.adam.coupled_wd);
    r.finish();
  }
  if (const json* e = top.child("eval")) {
    ObjectReader r(*e, "eval");
    r.read("kappa", c.eval.kappa);
    r.read("batch_size", c.eval.batch_size);
    r.read("split", c.eval.split);
    r.finish();
  }
  if (const json* a = top.child("ablation")) {
    ObjectReader r(*a, "ablation");
    r.read_list("guidance_threshold", c.ablation.guidance_threshold);
    r.read_list("mask_layer", c.ablation.mask_layer);
    r.read_list("keep_count", c.ablation.keep_count);
    r.read_list("reinjection", c.ablation.reinjection);
    r.finish();
  }
  top.finish();
  c.resolve();
  return c;
}

ExperimentConfig load_experiment(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return experiment_from_json(j);
}

json to_json(const SpurSpec& s) {
  return {{"image_size", s.image_size},
          {"patch_size", s.patch_size},
          {"num_classes", s.num_classes},
          {"shapes", s.shapes},
          {"textures", s.textures},
          {"rho_train", s.rho_train},
          {"rho_iid", s.rho_iid},
          {"rho_ood", s.rho_ood},
          {"train_samples", s.train_samples},
          {"iid_samples", s.iid_samples},
          {"ood_samples", s.ood_samples},
          {"noise_std", s.noise_std},
          {"shape_min_frac", s.shape_min_frac},
          {"shape_max_frac", s.shape_max_frac},
          {"foreground_level", s.foreground_level},
          {"coverage_threshold", s.coverage_threshold},
          {"saliency_sigma", s.saliency_sigma()},
          {"seed", s.seed}};
}

SpurSpec spur_spec_from_json(const json& j) {
  SpurSpec s;
  ObjectReader r(j, "spec");
  r.read("image_size", s.image_size);
  r.read("patch_size", s.patch_size);
  r.read("num_classes", s.num_classes);
  r.read_list("shapes", s.shapes);
  r.read_list("textures", s.textures);
  r.read("rho_train", s.rho_train);
  r.read("rho_iid", s.rho_iid);
  r.read("rho_ood", s.rho_ood);
  r.read("train_samples", s.train_samples);
  r.read("iid_samples", s.iid_samples);
  r.read("ood_samples", s.ood_samples);
  r.read("noise_std", s.noise_std);
  r.read("shape_min_frac", s.shape_min_frac);
  r.read("shape_max_frac", s.shape_max_frac);
  r.read("foreground_level", s.foreground_level);
  r.read("coverage_threshold", s.coverage_threshold);
  // Derived from patch_size; accepted so a written spec.json reads back.
  double sigma = s.saliency_sigma();
  r.read("saliency_sigma", sigma);
  r.read("seed", s.seed);
  r.finish();
  if (sigma != s.saliency_sigma()) throw ConfigError("spec.saliency_sigma must equal patch_size / 2");
  s.validate();
  return s;
}

std::string config_hash(const ExperimentConfig& c) {
  const json identity = {{"dataset", c.dataset},
                         {"seed", c.seed},
                         {"model", model_to_json(c.model)},
                         {"train", train_to_json(c.train)}};
  return fnv1a_hex(identity.dump());
}

}  // namespace sgt
