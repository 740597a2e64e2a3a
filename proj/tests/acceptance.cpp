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


// Acceptance checks, one PASS/FAIL line per criterion.
//
//   acceptance            criteria 1-3 and 6-9 (about a minute)
//   acceptance --shortcut criteria 4 and 5: three seeds of SGT vs. baseline
//                         at desk scale (tens of minutes)

#include <chrono>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "reference_vit.hpp"
#include "sgt/checkpoint.hpp"
#include "sgt/cli.hpp"
#include "sgt/image_io.hpp"
#include "test_util.hpp"

using namespace sgt;
using nlohmann::json;
using sgt::testing::random_matrix;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(int criterion, bool pass, const std::string& detail) {
  std::cout << "criterion " << criterion << ": " << (pass ? "PASS" : "FAIL") << "  " << detail << std::endl;
  failures += !pass;
}

std::string fmt(double v, int precision = 3) {
  std::ostringstream s;
  s << std::setprecision(precision) << v;
  return s.str();
}

bool same_bits(const Matrix& a, const Matrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

SgtParams random_params(const SgtConfig& c, std::uint64_t seed) {
  SgtParams p = SgtParams::init(c, seed);
  std::mt19937_64 rng(seed + 100);
  for (auto& np : p.named()) {
    Tensor t = np.tensor;
    t.mutable_value() = random_matrix(t.rows(), t.cols(), rng, -0.5, 0.5);
    if (np.name.find("norm") != std::string::npos && np.name.find("weight") != std::string::npos)
      t.mutable_value().array() += 1.0;
  }
  return p;
}

void gradient_soundness() {
  const auto start = std::chrono::steady_clock::now();
  SgtConfig c;
  c.image_size = 8;
  c.patch_size = 2;  // N = 16
  c.embed_dim = 8;
  c.depth = 3;
  c.heads = 2;
  c.mlp_ratio = 2;
  c.num_classes = 3;
  c.keep_count = 6;
  double worst = 0;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const SgtParams p = random_params(c, seed);
    std::mt19937_64 rng(seed);
    Tensor img = Tensor::parameter(random_matrix(16, 8, rng, 0, 1));
    std::vector<SaliencyMask> masks;
    for (int b = 0; b < 2; ++b) masks.push_back(top_m_mask(random_matrix(4, 4, rng, 0, 1), 6));
    const std::vector<int> labels{static_cast<int>(seed % 3), static_cast<int>((seed + 1) % 3)};
    auto loss = [&](Tape& t) { return t.cross_entropy(forward(t, p, c, {img, 2, &masks, false}).logits, labels); };
    std::vector<Tensor> wrt{img};
    for (const auto& np : p.named()) wrt.push_back(np.tensor);
    worst = std::max(worst, sgt::testing::max_grad_error(loss, wrt));
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  report(1, worst < 1e-4 && secs < 60, "max rel err " + fmt(worst) + " over 3 seeds, " + fmt(secs) + " s");
}

void baseline_degeneration() {
  SgtConfig c;
  c.image_size = 16;
  c.patch_size = 4;
  c.embed_dim = 16;
  c.depth = 3;
  c.heads = 2;
  c.num_classes = 4;
  c.keep_count = 4;
  c.mask_mode = MaskMode::off;
  c.reinjection = false;
  std::mt19937_64 rng(11);
  double worst = 0;
  for (int i = 0; i < 20; ++i) {
    const SgtParams p = random_params(c, 200 + static_cast<std::uint64_t>(i));
    const Matrix img = random_matrix(16, 16, rng, 0, 1);
    Tape tape;
    const Matrix got = forward(tape, p, c, {Tensor::constant(img), 1, nullptr, true}).logits.value();
    worst = std::max(worst, (got.row(0) - sgt::testing::ref_vit_logits(p, c, img)).cwiseAbs().maxCoeff());
  }
  report(2, worst < 1e-10, "max abs logit diff " + fmt(worst) + " on 20 inputs");
}

void mask_algebra() {
  std::mt19937_64 rng(5);
  int bad = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 100);
    const int m = 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(n));
    // Coarse values so ties are common.
    Matrix v(1, n);
    for (int i = 0; i < n; ++i) v(0, i) = static_cast<double>(rng() % 8);
    const SaliencyMask mask = top_m_mask(v, m);
    bool ok = mask.keep_count() == m && mask.size() == n &&
              std::accumulate(mask.keep.begin(), mask.keep.end(), 0) == m &&
              std::is_sorted(mask.kept_indices.begin(), mask.kept_indices.end()) &&
              std::adjacent_find(mask.kept_indices.begin(), mask.kept_indices.end()) == mask.kept_indices.end();
    // Tie rule: each kept cell beats each dropped one, equal values going to
    // the smaller index.
    for (int i = 0; i < n && ok; ++i)
      for (int j = 0; j < n && ok; ++j)
        if (mask.keep[static_cast<std::size_t>(i)] && !mask.keep[static_cast<std::size_t>(j)])
          ok = v(0, i) > v(0, j) || (v(0, i) == v(0, j) && i < j);
    // Monotone in m.
    if (ok && m < n) {
      const SaliencyMask bigger = top_m_mask(v, m + 1);
      for (int i : mask.kept_indices) ok = ok && bigger.keep[static_cast<std::size_t>(i)];
    }
    // Monotone in the values: raising a kept cell keeps it.
    if (ok) {
      Matrix raised = v;
      const int k = mask.kept_indices[rng() % mask.kept_indices.size()];
      raised(0, k) += 3;
      ok = top_m_mask(raised, m).keep[static_cast<std::size_t>(k)];
    }
    // Permutation equivariance on distinct values.
    if (ok) {
      Matrix d(1, n);
      for (int i = 0; i < n; ++i) d(0, i) = v(0, i) + 1e-3 * i;
      std::vector<int> perm(static_cast<std::size_t>(n));
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), rng);
      Matrix pd(1, n);
      for (int i = 0; i < n; ++i) pd(0, i) = d(0, perm[static_cast<std::size_t>(i)]);
      const SaliencyMask a = top_m_mask(d, m), b = top_m_mask(pd, m);
      for (int i = 0; i < n && ok; ++i)
        ok = b.keep[static_cast<std::size_t>(i)] == a.keep[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
    }
    bad += !ok;
  }
  report(3, bad == 0, std::to_string(10000 - bad) + "/10000 property cases hold");
}

void random_guidance() {
  SgtConfig c;
  c.image_size = 4;
  c.patch_size = 2;
  c.embed_dim = 4;
  c.depth = 1;
  c.heads = 1;
  c.mlp_ratio = 1;
  c.num_classes = 2;
  c.keep_count = 2;
  std::mt19937_64 rng(3);
  std::vector<TrainExample> data;
  for (int i = 0; i < 20; ++i)
    data.push_back({random_matrix(4, 4, rng, 0, 1), i % 2, SaliencyMask::from_indices(4, {0, 3})});
  TrainConfig t;
  t.epochs = 50;
  t.batch_size = 2;  // 10 batches per epoch, 500 in all
  t.warmup_epochs = 1;
  std::ostringstream detail;
  bool ok = true;
  for (double threshold : {0.0, 0.5, 1.0}) {
    c.guidance_threshold = threshold;
    int masked = 0, batches = 0;
    for (const EpochRecord& r : train(SgtParams::init(c, 1), c, t, data)) {
      masked += r.masked_batches;
      batches += r.batches;
    }
    const double f = static_cast<double>(masked) / batches;
    const double target = 1.0 - threshold;
    ok = ok && batches >= 500 && std::abs(f - target) <= (threshold == 0.5 ? 0.1 : 0.0);
    detail << "T=" << threshold << ": " << masked << "/" << batches << "  ";
  }
  report(6, ok, detail.str());
}

// Loop-based references for the saliency metrics.
double brute_kld(const Matrix& p, const Matrix& q, double eps = 1e-7) {
  double sp = 0, sq = 0, out = 0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    sp += p.data()[i];
    sq += q.data()[i];
  }
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const double pi = p.data()[i] / sp, qi = q.data()[i] / sq;
    out += qi * std::log(eps + qi / (pi + eps));
  }
  return out;
}

double brute_cc(const Matrix& p, const Matrix& q) {
  const double n = static_cast<double>(p.size());
  double mp = 0, mq = 0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    mp += p.data()[i] / n;
    mq += q.data()[i] / n;
  }
  double num = 0, dp = 0, dq = 0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    num += (p.data()[i] - mp) * (q.data()[i] - mq);
    dp += (p.data()[i] - mp) * (p.data()[i] - mp);
    dq += (q.data()[i] - mq) * (q.data()[i] - mq);
  }
  return num / std::sqrt(dp * dq);
}

double brute_nss(const Matrix& p, const std::vector<FixationRecord>& fixes) {
  const double n = static_cast<double>(p.size());
  double mu = 0, var = 0;
  for (Eigen::Index i = 0; i < p.size(); ++i) mu += p.data()[i] / n;
  for (Eigen::Index i = 0; i < p.size(); ++i) var += (p.data()[i] - mu) * (p.data()[i] - mu) / n;
  double total = 0;
  for (const auto& f : fixes) total += (p(static_cast<int>(f.y), static_cast<int>(f.x)) - mu) / std::sqrt(var);
  return total / static_cast<double>(fixes.size());
}

void saliency_metrics() {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> coord(0, 8);
  double kld_self = -1e300, cc_affine = 0, nss_shift = 0, brute = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const Matrix p = random_matrix(8, 8, rng, 0, 1), q = random_matrix(8, 8, rng, 0, 1);
    std::vector<FixationRecord> fixes;
    for (int k = 0; k < 5; ++k) fixes.push_back({"img", coord(rng), coord(rng), 100.0});
    kld_self = std::max(kld_self, kld(p, p));
    const double a = 0.1 + 5 * coord(rng) / 8, b = coord(rng) - 4;
    const Matrix pa = (a * p.array() + b).matrix();
    cc_affine = std::max(cc_affine, std::abs(cc(pa, q) - cc(p, q)));
    nss_shift = std::max(nss_shift, std::abs(nss((p.array() + b).matrix(), fixes) - nss(p, fixes)));
    brute = std::max({brute, std::abs(kld(p, q) - brute_kld(p, q)), std::abs(cc(p, q) - brute_cc(p, q)),
                      std::abs(nss(p, fixes) - brute_nss(p, fixes))});
  }
  const bool ok = kld_self <= 1e-6 && cc_affine <= 1e-12 && nss_shift <= 1e-9 && brute <= 1e-9;
  report(7, ok,
         "max kld(P,P) " + fmt(kld_self) + ", cc affine drift " + fmt(cc_affine) + ", nss shift drift " +
             fmt(nss_shift) + ", brute-force gap " + fmt(brute));
}

json tiny_experiment(const fs::path& data) {
  return {{"dataset", data.string()},
          {"seed", 5},
          {"model",
           {{"image_size", 16},
            {"patch_size", 4},
            {"embed_dim", 8},
            {"depth", 2},
            {"heads", 2},
            {"mlp_ratio", 2},
            {"num_classes", 2},
            {"keep_count", 4}}},
          {"train", {{"epochs", 3}, {"batch_size", 8}, {"warmup_epochs", 1}, {"base_lr", 1e-3}}}};
}

void ablation_parity(const fs::path& work) {
  fs::remove_all(work);
  fs::create_directories(work);
  std::ostringstream log;
  std::ofstream(work / "spec.json") << json{{"image_size", 16},
                                            {"patch_size", 4},
                                            {"num_classes", 2},
                                            {"shapes", {"disc", "cross"}},
                                            {"textures", {"hstripes", "checker"}},
                                            {"train_samples", 40},
                                            {"iid_samples", 10},
                                            {"ood_samples", 20}}
                                           .dump();
  GenOptions g;
  g.spec_path = work / "spec.json";
  g.out = work / "data";
  cmd_gen(g, log);
  std::ofstream(work / "config.json") << tiny_experiment(g.out).dump(2);

  TrainOptions t;
  t.config_path = work / "config.json";
  t.out = work / "run";
  t.quiet = true;
  cmd_train(t, log);
  EvalOptions e;
  e.run = t.out;
  e.quiet = true;
  cmd_eval(e, log);
  std::ifstream rin(t.out / "report.json");
  const json r = json::parse(rin);

  AblateOptions a;
  a.config_path = t.config_path;
  a.out = work / "ablate";
  cmd_ablate(a, log);
  std::ifstream csv(a.out / "summary.csv");
  std::string header, row;
  std::getline(csv, header);
  std::getline(csv, row);
  std::vector<std::string> cells;
  std::stringstream ss(row);
  for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
  const std::vector<std::pair<std::string, std::size_t>> columns{
      {"accuracy", 5}, {"auc", 6}, {"macro_f1", 7}, {"psl", 8}, {"psl_gradcam", 9}, {"psl_rollout", 10}};
  bool ok = cells.size() == 11;
  std::ostringstream detail;
  for (const auto& [key, col] : columns) {
    if (!ok) break;
    const double from_csv = std::strtod(cells[col].c_str(), nullptr);
    const double from_report = r[key].get<double>();
    ok = std::memcmp(&from_csv, &from_report, sizeof(double)) == 0;
    detail << key << "=" << cells[col] << " ";
  }
  report(8, ok, detail.str());
  fs::remove_all(work);
}

void format_round_trips() {
  std::mt19937_64 rng(23);
  auto pick = [&](int lo, int hi) { return lo + static_cast<int>(rng() % static_cast<std::uint64_t>(hi - lo + 1)); };
  int ok_pnm = 0, ok_f64 = 0, ok_ckpt = 0, ok_manifest = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    {
      Image img;
      img.channels = trial % 2 ? 3 : 1;
      img.height = pick(1, 12);
      img.width = pick(1, 12);
      img.planes.resize(img.channels * img.height, img.width);
      for (Eigen::Index i = 0; i < img.planes.size(); ++i)
        img.planes.data()[i] = dequantize(static_cast<std::uint8_t>(rng()));
      std::stringstream s;
      write_pnm(s, img);
      const Image back = read_pnm(s);
      ok_pnm += back.channels == img.channels && same_bits(back.planes, img.planes);
    }
    {
      Matrix m(pick(0, 9), pick(0, 9));
      for (Eigen::Index i = 0; i < m.size(); ++i) {
        const std::uint64_t bits = rng();
        double v;
        std::memcpy(&v, &bits, sizeof v);
        m.data()[i] = std::isnan(v) ? 0.5 : v;
      }
      std::stringstream s;
      write_f64(s, m);
      ok_f64 += same_bits(read_f64(s), m);
    }
    {
      std::vector<NamedParam> params;
      const int count = pick(1, 5);
      for (int k = 0; k < count; ++k) {
        const int r = pick(1, 6), c = pick(1, 6);
        Shape shape = pick(0, 1) ? Shape{static_cast<std::size_t>(r), static_cast<std::size_t>(c)}
                                 : Shape{static_cast<std::size_t>(r * c)};
        const Matrix v = random_matrix(shape.size() == 1 ? 1 : r, shape.size() == 1 ? r * c : c, rng, -1e3, 1e3);
        params.push_back({"p" + std::to_string(k) + ".w", Tensor::parameter(v, shape)});
      }
      std::stringstream s;
      write_checkpoint(s, params);
      const auto entries = read_checkpoint(s);
      bool ok = entries.size() == params.size();
      for (std::size_t k = 0; ok && k < entries.size(); ++k)
        ok = entries[k].name == params[k].name && entries[k].shape == params[k].tensor.shape() &&
             same_bits(entries[k].value, params[k].tensor.value());
      ok_ckpt += ok;
    }
    {
      Manifest m;
      m.patch_size = pick(1, 8);
      m.image_size = m.patch_size * pick(1, 8);
      m.coverage_threshold = static_cast<double>(rng() % 1000) / 999.0;
      m.saliency_sigma = m.patch_size / 2.0;
      const int rows = pick(0, 6);
      for (int k = 0; k < rows; ++k) {
        ManifestRow row;
        row.sample_id = std::to_string(rng() % 1000000);
        row.label = pick(0, 9);
        row.background_id = pick(0, 9);
        row.image_path = "images/" + row.sample_id + ".pgm";
        row.saliency_path = "saliency/" + row.sample_id + ".f64";
        std::set<int> idx;
        const int n = pick(1, m.num_patches());
        for (int j = 0; j < n; ++j) idx.insert(pick(0, m.num_patches() - 1));
        row.relevant_patches.assign(idx.begin(), idx.end());
        m.rows.push_back(row);
      }
      std::stringstream s;
      write_manifest(s, m);
      ok_manifest += read_manifest(s) == m;
    }
  }
  const bool ok = ok_pnm == 1000 && ok_f64 == 1000 && ok_ckpt == 1000 && ok_manifest == 1000;
  report(9, ok,
         "PGM/PPM " + std::to_string(ok_pnm) + ", .f64 " + std::to_string(ok_f64) + ", SGTCKPT1 " +
             std::to_string(ok_ckpt) + ", manifest " + std::to_string(ok_manifest) + " of 1000");
}

struct RunResult {
  double iid_acc = 0, ood_acc = 0, psl_gradcam = 0, psl_rollout = 0;
};

json eval_split(const fs::path& run, const std::string& split, std::ostream& log) {
  EvalOptions e;
  e.run = run;
  e.out = run / ("eval_" + split);
  e.split = split;
  e.kappa = 1.0;
  e.quiet = true;
  if (cmd_eval(e, log) != 0) throw std::runtime_error("eval failed for " + run.string());
  std::ifstream in(e.out / "report.json");
  return json::parse(in);
}

void shortcut_protocol(const fs::path& work) {
  fs::create_directories(work);
  std::map<std::string, std::vector<RunResult>> results;
  for (std::uint64_t seed : {0u, 1u, 2u}) {
    const fs::path data = work / ("data_seed" + std::to_string(seed));
    GenOptions g;
    g.out = data;
    g.seed = seed;
    g.force = true;
    cmd_gen(g, std::cerr);

    const json config = {{"dataset", data.string()}, {"seed", seed}, {"train", {{"epochs", 20}}}};
    const fs::path config_path = work / ("config_seed" + std::to_string(seed) + ".json");
    std::ofstream(config_path) << config.dump(2);
    for (const std::string arm : {"baseline", "sgt"}) {
      const auto start = std::chrono::steady_clock::now();
      TrainOptions t;
      t.config_path = config_path;
      t.out = work / (arm + "_seed" + std::to_string(seed));
      t.baseline = arm == "baseline";
      t.force = true;
      t.quiet = true;
      if (cmd_train(t, std::cerr) != 0) throw std::runtime_error("training diverged: " + t.out.string());
      const json iid = eval_split(t.out, "iid_test", std::cerr);
      const json ood = eval_split(t.out, "ood_test", std::cerr);
      RunResult r{iid["accuracy"], ood["accuracy"], ood["psl_gradcam"], ood["psl_rollout"]};
      results[arm].push_back(r);
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      std::cout << "  " << arm << " seed " << seed << ": iid acc " << fmt(r.iid_acc) << ", ood acc " << fmt(r.ood_acc)
                << ", ood psl gradcam " << fmt(r.psl_gradcam) << ", rollout " << fmt(r.psl_rollout) << " ("
                << fmt(secs, 4) << " s)" << std::endl;
    }
  }
  auto mean = [&](const std::string& arm, double RunResult::*field) {
    double s = 0;
    for (const auto& r : results[arm]) s += r.*field;
    return s / static_cast<double>(results[arm].size());
  };
  auto min_of = [&](const std::string& arm, double RunResult::*field) {
    double m = 1e300;
    for (const auto& r : results[arm]) m = std::min(m, r.*field);
    return m;
  };
  const double gap = mean("sgt", &RunResult::ood_acc) - mean("baseline", &RunResult::ood_acc);
  const double iid_min = std::min(min_of("sgt", &RunResult::iid_acc), min_of("baseline", &RunResult::iid_acc));
  report(4, gap >= 0.15 && iid_min >= 0.95,
         "ood acc sgt " + fmt(mean("sgt", &RunResult::ood_acc)) + " vs baseline " +
             fmt(mean("baseline", &RunResult::ood_acc)) + " (gap " + fmt(gap) + ", need >= 0.15); min iid acc " +
             fmt(iid_min) + " (need >= 0.95)");
  const double gc_sgt = mean("sgt", &RunResult::psl_gradcam), gc_base = mean("baseline", &RunResult::psl_gradcam);
  const double ro_sgt = mean("sgt", &RunResult::psl_rollout), ro_base = mean("baseline", &RunResult::psl_rollout);
  report(5, gc_sgt <= gc_base - 0.10 && ro_sgt <= ro_base - 0.10,
         "psl gradcam sgt " + fmt(gc_sgt) + " vs baseline " + fmt(gc_base) + "; rollout sgt " + fmt(ro_sgt) +
             " vs baseline " + fmt(ro_base) + " (need sgt <= baseline - 0.10 for both)");
}

}  // namespace

int main(int argc, char** argv) {
  const bool shortcut = argc > 1 && std::string(argv[1]) == "--shortcut";
  const fs::path work = argc > 1 && !shortcut ? fs::path(argv[1]) : argc > 2 ? fs::path(argv[2]) : fs::temp_directory_path() / "sgt_acceptance";
  try {
    if (shortcut) {
      shortcut_protocol(work);
    } else {
      gradient_soundness();
      baseline_degeneration();
      mask_algebra();
      random_guidance();
      saliency_metrics();
      ablation_parity(work / "parity");
      format_round_trips();
    }
  } catch (const std::exception& e) {
    std::cout << "error: " << e.what() << std::endl;
    return 1;
  }
  return failures == 0 ? 0 : 1;
}
