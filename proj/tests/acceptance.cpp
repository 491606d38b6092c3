/* Copyright 2026 The mp3s-eval Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// Acceptance suite. Prints one PASS/FAIL line per criterion, with the
// measured values and their targets, and exits nonzero if any criterion fails.

#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include "mp3s/bench.hpp"
#include "mp3s/cost_model.hpp"
#include "mp3s/headless/abx.hpp"
#include "mp3s/headless/similarity.hpp"
#include "mp3s/headless/verification.hpp"
#include "mp3s/probe.hpp"
#include "oracles.hpp"
#include "support.hpp"

namespace mp3s {
namespace {

using testing::Rng;

std::string num(double v) {
  std::ostringstream s;
  s.precision(6);
  s << v;
  return s.str();
}

class Criterion {
 public:
  explicit Criterion(std::string name) : name_(std::move(name)) {}

  void near(const std::string& what, double got, double target, double tol) {
    record(std::abs(got - target) <= tol + 1e-12,
           what + "=" + num(got) + " (" + num(target) + "+-" + num(tol) + ")");
  }
  void at_most(const std::string& what, double got, double limit) {
    record(got <= limit, what + "=" + num(got) + " (<=" + num(limit) + ")");
  }
  void at_least(const std::string& what, double got, double limit) {
    record(got >= limit, what + "=" + num(got) + " (>=" + num(limit) + ")");
  }
  void check(const std::string& what, bool ok) { record(ok, what); }

  bool report(std::ostream& out) const {
    out << (failed_.empty() ? "PASS " : "FAIL ") << name_ << ": ";
    if (!failed_.empty()) out << "failed [" << join(failed_) << "]; ";
    out << "ok [" << join(passed_) << "]\n";
    return failed_.empty();
  }

 private:
  static std::string join(const std::vector<std::string>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "; " : "") + v[i];
    return s;
  }
  void record(bool ok, std::string msg) { (ok ? passed_ : failed_).push_back(std::move(msg)); }

  std::string name_;
  std::vector<std::string> passed_, failed_;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Criterion probe_set_comparison() {
  Criterion c("probe-set-comparison");
  const auto t0 = std::chrono::steady_clock::now();
  const auto t = read_bench_csv(testing::source_path("fixtures/table1.csv"));
  const auto asv = compare_probe_sets(t, "ASV", "eer", "DS1", "DS2");
  const auto ls = compare_probe_sets(t, "LibriSpeech", "wer_clean", "DS1", "DS2");
  const auto bk = compare_probe_sets(t, "Buckeye", "wer", "DS1", "DS2");
  const auto cy = compare_probe_sets(t, "Welsh", "wer", "DS1", "DS2");
  const auto ic = compare_probe_sets(t, "IC", "accuracy", "DS1", "DS2");
  const double elapsed = seconds_since(t0);
  c.near("asv_pearson", asv.pearson, 0.47, 0.02);
  c.near("asv_spearman", asv.spearman, 0.75, 0.005);
  c.near("ls_spearman", ls.spearman, 0.97, 0.005);
  c.near("buckeye_mean_ds1", bk.mean_set1, 34.16, 0.01);
  c.near("buckeye_mean_ds2", bk.mean_set2, 32.39, 0.01);
  c.near("buckeye_diff", bk.diff_percent, 5.2, 0.1);
  c.near("asv_diff", asv.diff_percent, 46.5, 0.1);
  c.near("welsh_diff", cy.diff_percent, -47.2, 0.1);
  c.near("ic_diff", ic.diff_percent, 27.3, 0.1);
  c.at_most("seconds", elapsed, 1.0);
  return c;
}

Criterion ranking_comparison() {
  Criterion c("ranking-comparison");
  const auto t = read_bench_csv(testing::source_path("fixtures/table5.csv"));
  const auto published = read_published_csv(testing::source_path("fixtures/published.csv"));

  const auto sv = compare_probe_sets(t, "VoxCeleb1", "eer", "SV", "AX");
  c.near("sv_ax_pearson", sv.pearson, -0.01, 0.01);
  c.near("sv_ax_spearman", sv.spearman, -0.02, 0.01);

  const std::map<std::string, std::vector<double>> printed{
      {"ASR", {9, 5, 2, 6, 7, 4, 1, 8, 3}},
      {"ABX", {9, 8, 7, 5, 1, 4, 2, 6, 3}},
      {"SV", {6, 5, 7, 3, 9, 1, 2, 8, 4}},
      {"AX", {9, 6, 3, 7, 1, 5, 2, 8, 4}}};
  std::size_t matched = 0, total = 0;
  for (const auto& [set, ranks] : printed) {
    const std::string task = set == "ASR" || set == "ABX" ? "Buckeye" : "VoxCeleb1";
    const std::string metric = task == "Buckeye" ? "error" : "eer";
    const auto encs = t.encoders(task, metric);
    std::map<std::string, double> got;
    for (const auto& e : rank_models(t, task, metric, set)) got[e.encoder] = e.rank;
    for (std::size_t i = 0; i < encs.size(); ++i, ++total) matched += got[encs[i]] == ranks[i];
  }
  c.check("printed_ranks=" + std::to_string(matched) + "/" + std::to_string(total), matched == total && total == 36);

  auto asr = compare_probe_sets(t, "Buckeye", "error", "ASR", "ABX");
  annotate_with_published(asr, published);
  c.near("asr_abx_pearson", asr.pearson, 0.67, 0.02);
  bool spearman_flagged = false;
  for (const auto& n : asr.notes) spearman_flagged |= n.find("spearman") != std::string::npos;
  c.check("asr_abx_spearman=" + num(asr.spearman) + " recomputed, published 0.48 flagged in report",
          spearman_flagged && std::abs(asr.spearman - 0.3667) < 0.001);
  return c;
}

Criterion dtw_oracle() {
  Criterion c("dtw-oracle");
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(2024);
  std::size_t exact = 0;
  double worst_asym = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t ta = 1 + rng.index(6), tb = 1 + rng.index(6), d = 1 + rng.index(4);
    const auto a = testing::random_matrix(rng, ta, d);
    const auto b = testing::random_matrix(rng, tb, d);
    exact += dtw_align(a.view(), b.view()).accumulated_cost == oracle::enumerate_dtw(a.view(), b.view()).min_cost;
    worst_asym = std::max(worst_asym, std::abs(path_avg_similarity(a.view(), b.view()) -
                                               path_avg_similarity(b.view(), a.view())));
  }
  c.check("exact_cost_matches=" + std::to_string(exact) + "/200", exact == 200);
  c.at_most("max_asymmetry", worst_asym, 1e-6);
  c.at_most("seconds", seconds_since(t0), 10.0);
  return c;
}

Criterion eer_oracle() {
  Criterion c("eer-oracle");
  Rng rng(2025);
  double worst = 0;
  std::size_t invariant = 0, transforms = 0;
  for (int set = 0; set < 100; ++set) {
    const std::size_t n = 2 + rng.index(199);
    const bool coarse = rng.uniform() < 0.4;
    const double shift = rng.uniform(0, 2);
    std::vector<double> pos, neg;
    for (std::size_t k = 0; k < n; ++k) {
      const bool p = k == 0 || (k != 1 && rng.uniform() < 0.5);
      double s = rng.normal() + (p ? shift : 0.0);
      if (coarse) s = std::round(s * 4) / 4;
      (p ? pos : neg).push_back(s);
    }
    const double eer = compute_eer(pos, neg).eer;
    worst = std::max(worst, std::abs(eer - oracle::sweep_eer(pos, neg).eer));
    const double a = rng.uniform(0.1, 10), b = rng.uniform(-5, 5), k = rng.uniform(0.2, 2);
    const std::vector<std::function<double(double)>> fs{
        [&](double x) { return a * x + b; }, [&](double x) { return std::exp(k * x); },
        [&](double x) { return x * x * x + a * x; }, [&](double x) { return std::atan(k * x); },
        [&](double x) { return 1 / (1 + std::exp(-k * x - b)); }};
    for (const auto& f : fs) {
      std::vector<double> tp, tn;
      for (double x : pos) tp.push_back(f(x));
      for (double x : neg) tn.push_back(f(x));
      invariant += compute_eer(tp, tn).eer == eer;
      ++transforms;
    }
  }
  c.at_most("max_abs_delta_vs_sweep", worst, 1e-9);
  c.check("invariant_transforms=" + std::to_string(invariant) + "/" + std::to_string(transforms),
          invariant == transforms && transforms == 500);
  return c;
}

Criterion abx_null_signal() {
  Criterion c("abx-null-and-signal");
  double prev = 1.0;
  bool monotone = true;
  std::string series;
  for (double sep : {0.0, 1.0, 2.0, 4.0}) {
    const auto a = testing::two_cluster_archive(sep, 31);
    const auto set = mine_triplets(a.manifest(), {}, 42);
    const double e = abx_error(a, set, LayerWeights::uniform(2));
    if (sep == 0.0) {
      c.at_least("triplets", static_cast<double>(set.triplets.size()), 2000);
      c.near("error_null", e, 0.5, 0.05);
    }
    if (sep == 4.0) c.at_most("error_4sigma", e, 0.05);
    monotone &= e <= prev;
    prev = e;
    series += (series.empty() ? "" : ",") + num(e);
  }
  c.check("non_increasing over 0,1,2,4 sigma: " + series, monotone);
  return c;
}

// Finite-difference check of the probe gradients on random parameters.
double fd_relative_error(Rng& rng, bool frozen) {
  const std::size_t L = 1 + rng.index(5), D = 1 + rng.index(5), C = 2 + rng.index(3), n = 3 + rng.index(10);
  std::vector<std::string> classes;
  for (std::size_t k = 0; k < C; ++k) classes.push_back("c" + std::to_string(k));
  ProbeDataset ds{L, D, classes, {}};
  for (std::size_t i = 0; i < n; ++i) {
    PooledSample s;
    s.label = i < C ? i : rng.index(C);
    for (std::size_t k = 0; k < L * D; ++k) s.layer_means.push_back(rng.normal());
    ds.samples.push_back(std::move(s));
  }
  std::optional<LayerWeights> fw;
  if (frozen) fw = LayerWeights::uniform(L);
  auto probe = TrainedProbe::initial(classes, L, D, fw);
  std::vector<double*> ps;
  for (auto& x : probe.classifier) ps.push_back(&x);
  for (auto& x : probe.bias) ps.push_back(&x);
  if (!frozen) {
    for (auto& x : probe.layer_logits.p) ps.push_back(&x);
  }
  for (double* p : ps) *p = rng.normal();

  const auto g = probe_gradients(probe, ds);
  std::vector<double> analytic(g.classifier);
  analytic.insert(analytic.end(), g.bias.begin(), g.bias.end());
  if (g.layer_logits) analytic.insert(analytic.end(), g.layer_logits->begin(), g.layer_logits->end());
  if (analytic.size() != ps.size()) return INFINITY;
  const double h = 1e-4;
  double num2 = 0, den2 = 0;
  for (std::size_t k = 0; k < ps.size(); ++k) {
    const double saved = *ps[k];
    *ps[k] = saved + h;
    const double up = probe_loss(probe, ds);
    *ps[k] = saved - h;
    const double down = probe_loss(probe, ds);
    *ps[k] = saved;
    const double fd = (up - down) / (2 * h);
    num2 += (fd - analytic[k]) * (fd - analytic[k]);
    den2 += std::max(fd * fd, analytic[k] * analytic[k]);
  }
  return std::sqrt(num2) / std::max(std::sqrt(den2), 1e-12);
}

Criterion probe_correctness() {
  Criterion c("probe-correctness");
  Rng rng(2026);
  double worst = 0;
  for (int k = 0; k < 20; ++k) worst = std::max(worst, fd_relative_error(rng, k % 4 == 3));
  c.at_most("fd_max_relative_error", worst, 1e-4);

  {
    const auto train = testing::probe_archive(20, 3, 4, 0, 3.0, 1, "tr");
    const auto valid = testing::probe_archive(10, 3, 4, 0, 3.0, 2, "va");
    const auto test = testing::probe_archive(50, 3, 4, 0, 3.0, 3, "te");
    c.near("separable_test_accuracy", evaluate_probe(train_probe(train, valid, ProbeConfig{}), test), 1.0, 0.0);
  }
  for (std::size_t k : {0u, 2u, 4u}) {
    const auto train = testing::probe_archive(30, 5, 4, k, 1.0, 10 + k, "tr");
    const auto valid = testing::probe_archive(30, 5, 4, k, 1.0, 20 + k, "va");
    const auto w = train_probe(train, valid, ProbeConfig{}).layer_weights();
    c.check("layer" + std::to_string(k) + "_mass=" + num(w[k]) + " (>0.8)", w[k] > 0.8);
  }
  {
    const auto train = testing::probe_archive(30, 3, 4, 1, 1.5, 61, "tr");
    const auto valid = testing::probe_archive(30, 3, 4, 1, 1.5, 62, "va");
    const auto test = testing::probe_archive(150, 3, 4, 1, 1.5, 63, "te");
    ProbeConfig frozen;
    frozen.frozen_weights = LayerWeights::one_hot(3, 0);
    c.near("frozen_noise_layer_accuracy", evaluate_probe(train_probe(train, valid, frozen), test), 0.5, 0.1);
    c.at_least("learned_weights_accuracy", evaluate_probe(train_probe(train, valid, ProbeConfig{}), test), 0.95);
  }
  return c;
}

ArchSpec load_spec(const std::string& name) {
  std::ifstream in(testing::source_path("specs/" + name));
  return arch_from_json(nlohmann::json::parse(in));
}

Criterion cost_model() {
  Criterion c("cost-model");
  const auto pool_linear = load_spec("probe_pool_linear_768x4.json");
  bool hand = true;
  for (std::uint64_t T : {1u, 50u, 500u}) hand &= probe_macs(pool_linear, T).total_macs == 3072;
  c.check("pool+linear 768->4 = 3072 MACs", hand);

  // Closed forms against the loop-counting oracle on small layers.
  Rng rng(7);
  bool oracle_ok = true;
  for (int k = 0; k < 200; ++k) {
    LayerSpec l;
    l.kind = static_cast<LayerKind>(rng.index(5));
    l.heads = 1 + rng.index(2);
    l.in_dim = l.heads * (1 + rng.index(3));
    l.groups = l.kind == LayerKind::kConv1d ? 1 + rng.index(2) : 1;
    l.out_dim = l.groups * (1 + rng.index(3));
    if (l.kind == LayerKind::kConv1d) l.in_dim = l.groups * (1 + rng.index(3));
    l.hidden = 1 + rng.index(3);
    l.kernel = 1 + rng.index(3);
    l.rate = 1 + rng.index(2);
    l.per_frame = rng.uniform() < 0.7;
    const std::uint64_t T = 1 + rng.index(5);
    oracle_ok &= layer_macs(l, T) == oracle::count_macs(l, T);
  }
  c.check("closed forms = loop counts (200 layers)", oracle_ok);

  bool additive = true, linear = true;
  for (const auto& [enc, head] : {std::pair{"encoder_base.json", "probe_ecapa_768.json"},
                                  std::pair{"encoder_large.json", "probe_ecapa_1024.json"}}) {
    const auto e = load_spec(enc), p = load_spec(head);
    for (std::uint64_t T : {1u, 77u, 500u}) {
      const auto r = pipeline_macs(e, p, T);
      std::uint64_t sum = 0;
      for (const auto& l : r.per_layer) sum += l.macs;
      additive &= sum == r.total_macs && r.total_macs == probe_macs(e, T).total_macs + probe_macs(p, T).total_macs;
    }
    for (const auto* spec : {&e, &p}) {
      for (const auto& l : spec->layers) {
        if (is_frame_linear(l)) linear &= layer_macs(l, 3 * 500) == 3 * layer_macs(l, 500);
      }
    }
    const auto r = pipeline_macs(e, p, 500);
    const double share = static_cast<double>(r.probe_macs) / static_cast<double>(r.total_macs);
    c.at_most(std::string(head) + "_share", share, 0.05);
  }
  for (const auto& l : load_spec("probe_bilstm_linear_768.json").layers) {
    if (is_frame_linear(l)) linear &= layer_macs(l, 1000) == 2 * layer_macs(l, 500);
  }
  c.check("additivity (integer identity)", additive);
  c.check("T-linearity (integer identity)", linear);
  return c;
}

}  // namespace
}  // namespace mp3s

int main() {
  using namespace mp3s;
  std::size_t failures = 0;
  for (const auto& run : std::vector<std::function<Criterion()>>{
           probe_set_comparison, ranking_comparison, dtw_oracle, eer_oracle, abx_null_signal, probe_correctness,
           cost_model}) {
    try {
      failures += !run().report(std::cout);
    } catch (const std::exception& e) {
      std::cout << "FAIL (exception): " << e.what() << "\n";
      ++failures;
    }
  }
  std::cout << (failures ? std::to_string(failures) + " criteria failed\n" : "all criteria passed\n");
  return failures ? 1 : 0;
}
