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

// mp3s-eval command line: abx, ax, mine, probe, macs, analyze.
//
// Exit codes: 0 success, 1 usage error, 2 invalid data.

#ifndef MP3S_CLI_HPP_
#define MP3S_CLI_HPP_

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "mp3s/bench.hpp"
#include "mp3s/cost_model.hpp"
#include "mp3s/detail/csv.hpp"
#include "mp3s/detail/format.hpp"
#include "mp3s/error.hpp"
#include "mp3s/headless.hpp"
#include "mp3s/layer_agg.hpp"
#include "mp3s/probe.hpp"
#include "mp3s/repr_store.hpp"
#include "mp3s/report.hpp"

namespace mp3s::cli {

inline constexpr std::uint64_t kDefaultSeed = 42;

enum class LogLevel { kError = 0, kWarn = 1, kInfo = 2, kDebug = 3 };

inline LogLevel parse_log_level(const std::string& s) {
  if (s == "error") return LogLevel::kError;
  if (s == "warn" || s == "warning") return LogLevel::kWarn;
  if (s == "debug") return LogLevel::kDebug;
  return LogLevel::kInfo;
}

// Line-based stderr logger.
class Log {
 public:
  Log(std::ostream& err, LogLevel level) : err_(err), level_(level) {}
  void info(const std::string& msg) const { emit(LogLevel::kInfo, "info", msg); }
  void warn(const std::string& msg) const { emit(LogLevel::kWarn, "warn", msg); }
  void error(const std::string& msg) const { emit(LogLevel::kError, "error", msg); }

 private:
  void emit(LogLevel at, const char* tag, const std::string& msg) const {
    if (static_cast<int>(at) <= static_cast<int>(level_)) err_ << "[" << tag << "] " << msg << '\n';
  }
  std::ostream& err_;
  LogLevel level_;
};

struct GlobalOptions {
  std::uint64_t seed = kDefaultSeed;
  std::string out;
  std::string format = "json";
  std::string log_level;
  std::size_t workers = 1;
  int precision = kDefaultPrecision;
};

// Layer weighting flags shared by abx and ax.
struct WeightOptions {
  std::string weights_file;
  std::optional<std::size_t> layer;  // 1-based
  std::optional<double> decay;
};

namespace detail {

inline void require_path(const std::string& path, const char* flag) {
  if (!std::filesystem::exists(path)) {
    throw DataError(std::string(flag) + ": path '" + path + "' does not exist");
  }
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("'" + path + "': invalid JSON: " + e.what());
  }
}

inline void emit(const GlobalOptions& g, std::ostream& out, const std::string& text) {
  if (g.out.empty()) {
    out << text;
    return;
  }
  std::ofstream f(g.out, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + g.out + "' for writing");
  f << text;
  if (!f) throw IoError("write failed for '" + g.out + "'");
}

inline LayerWeights resolve_weights(const WeightOptions& w, std::size_t num_layers,
                                    std::optional<double> default_decay, nlohmann::json& config) {
  if (!w.weights_file.empty()) {
    require_path(w.weights_file, "--weights");
    auto lw = weights_from_json(read_json_file(w.weights_file));
    if (lw.size() != num_layers) {
      throw DataError("--weights: " + std::to_string(lw.size()) + " weights for an archive with " +
                      std::to_string(num_layers) + " layers");
    }
    config["weights"] = {{"source", w.weights_file}};
    config["weights"]["values"] = weights_to_json(lw);
    return lw;
  }
  if (w.layer) {
    if (*w.layer < 1 || *w.layer > num_layers) {
      throw DataError("--layer: must be in [1, " + std::to_string(num_layers) + "]");
    }
    config["weights"] = {{"source", "layer"}, {"layer", *w.layer}};
    return LayerWeights::one_hot(num_layers, *w.layer - 1);
  }
  const auto decay = w.decay ? w.decay : default_decay;
  if (decay) {
    config["weights"] = {{"source", "decay"}, {"lambda", *decay}};
    return decay_weights(num_layers, DecaySpec{*decay});
  }
  config["weights"] = {{"source", "uniform"}};
  return LayerWeights::uniform(num_layers);
}

inline std::string metric_output(const GlobalOptions& g, const std::string& metric, double value,
                                 std::size_t n, const nlohmann::json& config,
                                 const nlohmann::json& extra = nlohmann::json::object()) {
  const auto fmt = report_format_from_string(g.format);
  const double v = mp3s::detail::round_sig(value, g.precision);
  switch (fmt) {
    case ReportFormat::kJson: {
      nlohmann::json j = {{"metric", metric}, {"value", v}, {"n", n}, {"config", config}, {"seed", g.seed}};
      for (const auto& [k, x] : extra.items()) j[k] = x;
      return j.dump(2) + "\n";
    }
    case ReportFormat::kCsv:
      return "metric,value,n,seed\n" + metric + "," + mp3s::detail::format_number(v, g.precision) + "," +
             std::to_string(n) + "," + std::to_string(g.seed) + "\n";
    case ReportFormat::kMarkdown:
      return "| Metric | Value | n | Seed |\n|---|---|---|---|\n| " + metric + " | " +
             mp3s::detail::format_number(v, g.precision) + " | " + std::to_string(n) + " | " +
             std::to_string(g.seed) + " |\n";
  }
  return {};
}

inline std::string macs_output(const GlobalOptions& g, const CostReport& r, bool pipeline) {
  const auto fmt = report_format_from_string(g.format);
  auto f = [&](double v) { return mp3s::detail::format_number(v, g.precision); };
  const double share = r.total_macs ? static_cast<double>(r.probe_macs) / static_cast<double>(r.total_macs) : 0.0;
  std::ostringstream out;
  switch (fmt) {
    case ReportFormat::kJson: {
      nlohmann::json layers = nlohmann::json::array();
      for (const auto& l : r.per_layer) {
        layers.push_back({{"name", l.name}, {"kind", to_string(l.kind)}, {"macs", l.macs}});
      }
      nlohmann::json j = {{"frames", r.frames}, {"total_macs", r.total_macs},
                          {"gmacs", mp3s::detail::round_sig(r.gmacs(), g.precision)},
                          {"layers", std::move(layers)}};
      if (pipeline) {
        j["encoder_macs"] = r.encoder_macs;
        j["probe_macs"] = r.probe_macs;
        j["probe_share"] = mp3s::detail::round_sig(share, g.precision);
      }
      out << j.dump(2) << '\n';
      break;
    }
    case ReportFormat::kCsv:
      out << "layer,kind,macs\n";
      for (const auto& l : r.per_layer) {
        out << mp3s::detail::csv_escape(l.name) << ',' << to_string(l.kind) << ',' << l.macs << '\n';
      }
      if (pipeline) {
        out << "encoder_total,,," << r.encoder_macs << '\n' << "probe_total,,," << r.probe_macs << '\n';
      }
      out << "total,," << r.total_macs << '\n';
      break;
    case ReportFormat::kMarkdown:
      out << "| Layer | Kind | MACs | G-MACs |\n|---|---|---|---|\n";
      for (const auto& l : r.per_layer) {
        out << "| " << l.name << " | " << to_string(l.kind) << " | " << l.macs << " | "
            << f(static_cast<double>(l.macs) / 1e9) << " |\n";
      }
      if (pipeline) {
        out << "| encoder total | | " << r.encoder_macs << " | "
            << f(static_cast<double>(r.encoder_macs) / 1e9) << " |\n"
            << "| probe total | | " << r.probe_macs << " | " << f(static_cast<double>(r.probe_macs) / 1e9)
            << " |\n";
      }
      out << "| **total** | | " << r.total_macs << " | " << f(r.gmacs()) << " |\n";
      if (pipeline) out << "\nProbe share of pipeline MACs: " << f(100.0 * share) << "%\n";
      break;
  }
  return out.str();
}

inline std::string best_output(const GlobalOptions& g, const BestOverProbes& b, const std::string& task,
                               const std::string& metric) {
  const auto fmt = report_format_from_string(g.format);
  auto f = [&](double v) { return mp3s::detail::format_number(v, g.precision); };
  std::ostringstream out;
  switch (fmt) {
    case ReportFormat::kJson: {
      nlohmann::json rows = nlohmann::json::array();
      for (const auto& e : b.entries) {
        rows.push_back({{"encoder", e.encoder},
                        {"probe_set", e.best.probe_set},
                        {"value", mp3s::detail::round_sig(e.best.value, g.precision)}});
      }
      out << nlohmann::json({{"task", task}, {"metric", metric}, {"best", rows}, {"excluded", b.excluded}}).dump(2)
          << '\n';
      break;
    }
    case ReportFormat::kCsv:
      out << "encoder,probe_set,value\n";
      for (const auto& e : b.entries) {
        out << mp3s::detail::csv_escape(e.encoder) << ',' << mp3s::detail::csv_escape(e.best.probe_set) << ','
            << f(e.best.value) << '\n';
      }
      break;
    case ReportFormat::kMarkdown:
      out << "| Encoder | Probe set | " << metric << " |\n|---|---|---|\n";
      for (const auto& e : b.entries) {
        out << "| " << e.encoder << " | " << e.best.probe_set << " | " << f(e.best.value) << " |\n";
      }
      for (const auto& x : b.excluded) out << "\nExcluded by capacity: " << x << '\n';
      break;
  }
  return out.str();
}

}  // namespace detail

// Runs one invocation. args[0] is the program name.
inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Evaluate frozen multi-layer speech representations", "mp3s-eval"};
  app.fallthrough();
  app.require_subcommand(1);

  GlobalOptions g;
  app.add_option("--seed", g.seed, "Random seed (echoed in every output)")->capture_default_str();
  app.add_option("--out", g.out, "Write results to this file instead of stdout");
  app.add_option("--format", g.format, "Output format")
      ->check(CLI::IsMember({"json", "csv", "markdown"}))
      ->capture_default_str();
  app.add_option("--log-level", g.log_level, "error|warn|info|debug (default: $MP3S_EVAL_LOG or info)");
  app.add_option("--workers", g.workers, "Worker threads for scoring")->check(CLI::PositiveNumber);
  app.add_option("--precision", g.precision, "Significant digits in outputs")
      ->check(CLI::Range(1, 17))
      ->capture_default_str();

  auto add_weight_flags = [](CLI::App* sub, WeightOptions& w) {
    auto* f = sub->add_option("--weights", w.weights_file, "Layer weights JSON (array or {\"weights\": [...]})");
    auto* l = sub->add_option("--layer", w.layer, "Use a single layer (1 = lowest)");
    auto* d = sub->add_option("--decay", w.decay, "Exponential depth decay lambda")->check(CLI::NonNegativeNumber);
    f->excludes(l)->excludes(d);
    l->excludes(d);
  };

  // abx
  auto* abx = app.add_subcommand("abx", "ABX error rate over a triplet file");
  std::string abx_archive, abx_triplets;
  WeightOptions abx_w;
  abx->add_option("--archive", abx_archive, "Representation archive directory")->required();
  abx->add_option("--triplets", abx_triplets, "Triplet TSV")->required();
  add_weight_flags(abx, abx_w);

  // ax
  auto* ax = app.add_subcommand("ax", "AX verification EER over a trial list");
  std::string ax_archive, ax_trials;
  WeightOptions ax_w;
  ax->add_option("--archive", ax_archive, "Representation archive directory")->required();
  ax->add_option("--trials", ax_trials, "Trial list: '<0|1> <enroll> <test>' lines")->required();
  add_weight_flags(ax, ax_w);

  // mine
  auto* mine = app.add_subcommand("mine", "Mine ABX triplets from labeled segments");
  std::string mine_archive;
  MiningConfig mcfg;
  mine->add_option("--archive", mine_archive, "Archive directory (manifest only is read)")->required();
  mine->add_option("--per-label-cap", mcfg.per_label_cap, "Max triplets per label pair (0 = all)");
  mine->add_option("--max-triplets", mcfg.max_triplets, "Overall triplet cap (0 = all)");
  mine->add_flag("--within-speaker", mcfg.within_speaker, "A, B and X share a speaker");

  // probe
  auto* probe = app.add_subcommand("probe", "Train a time-pooled linear probe with layer weighting");
  std::string p_train, p_valid, p_test, p_frozen, p_save;
  ProbeConfig pcfg;
  probe->add_option("--train", p_train, "Training archive")->required();
  probe->add_option("--valid", p_valid, "Validation archive")->required();
  probe->add_option("--test", p_test, "Test archive (accuracy reported on it when given)");
  probe->add_option("--lr", pcfg.learning_rate, "Learning rate")->check(CLI::PositiveNumber)->capture_default_str();
  probe->add_option("--epochs", pcfg.max_epochs, "Maximum epochs")->check(CLI::PositiveNumber)->capture_default_str();
  probe->add_option("--patience", pcfg.early_stop_patience, "Early stopping patience (0 = off)");
  probe->add_option("--weight-decay", pcfg.weight_decay, "L2 penalty on the classifier")
      ->check(CLI::NonNegativeNumber);
  probe->add_option("--frozen-weights", p_frozen, "Fixed layer weights JSON");
  probe->add_option("--save", p_save, "Write the trained probe JSON here");

  // macs
  auto* macs = app.add_subcommand("macs", "Multiply-accumulate counts of a probe (and encoder)");
  std::string m_probe, m_encoder;
  std::uint64_t m_frames = 500;
  macs->add_option("--probe", m_probe, "Probe architecture JSON")->required();
  macs->add_option("--encoder", m_encoder, "Encoder architecture JSON");
  macs->add_option("--frames", m_frames, "Frames per utterance")->check(CLI::PositiveNumber)->capture_default_str();

  // analyze
  auto* analyze = app.add_subcommand("analyze", "Compare probe sets over a benchmark table");
  std::string a_table, a_metric, a_set1 = "DS1", a_set2 = "DS2", a_published;
  std::vector<std::string> a_tasks;
  bool a_best = false;
  std::optional<std::string> a_capacity;
  analyze->add_option("--table", a_table, "Benchmark CSV")->required();
  analyze->add_option("--task", a_tasks, "Task(s) to analyze (default: all with both sets)");
  analyze->add_option("--metric", a_metric, "Metric column (default: first listed for the task)");
  analyze->add_option("--set1", a_set1, "First probe set")->capture_default_str();
  analyze->add_option("--set2", a_set2, "Second probe set")->capture_default_str();
  analyze->add_option("--published", a_published, "Published values CSV; mismatches become report notes");
  analyze->add_flag("--best", a_best, "Report the best probe set per encoder instead");
  analyze->add_option("--capacity", a_capacity, "Probe parameter limit for --best (e.g. 7.5M)");

  std::vector<std::string> argv_store(args.begin(), args.end());
  if (argv_store.empty()) argv_store.push_back("mp3s-eval");
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  if (g.log_level.empty()) {
    const char* env = std::getenv("MP3S_EVAL_LOG");
    g.log_level = env ? env : "info";
  }
  const Log log(err, parse_log_level(g.log_level));

  try {
    nlohmann::json config;
    if (abx->parsed()) {
      detail::require_path(abx_archive, "--archive");
      detail::require_path(abx_triplets, "--triplets");
      config = {{"command", "abx"}, {"archive", abx_archive}, {"triplets", abx_triplets}};
      const auto archive = load_archive(abx_archive);
      const auto w = detail::resolve_weights(abx_w, archive.meta().num_layers, std::nullopt, config);
      log.info("resolved config: " + config.dump() + " seed=" + std::to_string(g.seed));
      const auto triplets = read_triplets_tsv(abx_triplets);
      const double e = abx_error(archive, triplets, w, g.workers);
      detail::emit(g, out, detail::metric_output(g, "abx_error", e, triplets.size(), config));
    } else if (ax->parsed()) {
      detail::require_path(ax_archive, "--archive");
      detail::require_path(ax_trials, "--trials");
      config = {{"command", "ax"}, {"archive", ax_archive}, {"trials", ax_trials}};
      const auto archive = load_archive(ax_archive);
      const auto w = detail::resolve_weights(ax_w, archive.meta().num_layers, 0.2, config);
      log.info("resolved config: " + config.dump() + " seed=" + std::to_string(g.seed));
      const auto trials = read_trials(ax_trials);
      const auto scored = score_trials(archive, trials, w, g.workers);
      const auto eer = compute_eer(scored);
      detail::emit(g, out,
                   detail::metric_output(g, "eer", eer.eer, trials.size(), config,
                                         {{"threshold", mp3s::detail::round_sig(eer.threshold, g.precision)}}));
    } else if (mine->parsed()) {
      detail::require_path(mine_archive, "--archive");
      config = {{"command", "mine"},
                {"archive", mine_archive},
                {"per_label_cap", mcfg.per_label_cap},
                {"max_triplets", mcfg.max_triplets},
                {"within_speaker", mcfg.within_speaker}};
      log.info("resolved config: " + config.dump() + " seed=" + std::to_string(g.seed));
      const auto set = mine_triplets(read_manifest(mine_archive), mcfg, g.seed);
      log.info("mined " + std::to_string(set.triplets.size()) + " triplets");
      detail::emit(g, out, "# seed=" + std::to_string(g.seed) + "\n" + triplets_to_tsv(set));
    } else if (probe->parsed()) {
      detail::require_path(p_train, "--train");
      detail::require_path(p_valid, "--valid");
      if (!p_test.empty()) detail::require_path(p_test, "--test");
      pcfg.seed = g.seed;
      config = {{"command", "probe"},          {"train", p_train},
                {"valid", p_valid},            {"test", p_test},
                {"learning_rate", pcfg.learning_rate}, {"max_epochs", pcfg.max_epochs},
                {"early_stop_patience", pcfg.early_stop_patience}, {"weight_decay", pcfg.weight_decay}};
      const auto train = load_archive(p_train);
      if (!p_frozen.empty()) {
        detail::require_path(p_frozen, "--frozen-weights");
        pcfg.frozen_weights = weights_from_json(detail::read_json_file(p_frozen));
        config["frozen_weights"] = p_frozen;
      }
      log.info("resolved config: " + config.dump() + " seed=" + std::to_string(g.seed));
      const auto valid = load_archive(p_valid);
      const auto trained = train_probe(train, valid, pcfg);
      if (!p_save.empty()) {
        std::ofstream f(p_save, std::ios::trunc);
        if (!f) throw IoError("cannot open '" + p_save + "' for writing");
        f << probe_to_json(trained).dump(2) << '\n';
      }
      const bool on_test = !p_test.empty();
      const auto eval_archive = on_test ? load_archive(p_test) : valid;
      const double acc = evaluate_probe(trained, eval_archive);
      std::vector<double> wv;
      const auto learned = trained.layer_weights();
      for (double x : learned.values()) wv.push_back(mp3s::detail::round_sig(x, g.precision));
      detail::emit(g, out,
                   detail::metric_output(g, on_test ? "test_accuracy" : "valid_accuracy", acc,
                                         eval_archive.size(), config,
                                         {{"weights", wv}, {"best_epoch", trained.best_epoch}}));
    } else if (macs->parsed()) {
      detail::require_path(m_probe, "--probe");
      const auto probe_spec = arch_from_json(detail::read_json_file(m_probe));
      config = {{"command", "macs"}, {"probe", m_probe}, {"frames", m_frames}};
      if (m_encoder.empty()) {
        log.info("resolved config: " + config.dump() + " seed=" + std::to_string(g.seed));
        detail::emit(g, out, detail::macs_output(g, probe_macs(probe_spec, m_frames), false));
      } else {
        detail::require_path(m_encoder, "--encoder");
        config["encoder"] = m_encoder;
        log.info("resolved config: " + config.dump() + " seed=" + std::to_string(g.seed));
        const auto enc = arch_from_json(detail::read_json_file(m_encoder));
        detail::emit(g, out, detail::macs_output(g, pipeline_macs(enc, probe_spec, m_frames), true));
      }
    } else if (analyze->parsed()) {
      detail::require_path(a_table, "--table");
      if (!a_published.empty()) detail::require_path(a_published, "--published");
      const auto table = read_bench_csv(a_table);
      config = {{"command", "analyze"}, {"table", a_table}, {"set1", a_set1}, {"set2", a_set2}};
      if (a_best) {
        if (a_tasks.size() != 1) throw ArgumentError("--best needs exactly one --task");
        const auto metric = a_metric.empty() ? table.default_metric(a_tasks[0]) : a_metric;
        std::optional<double> cap;
        if (a_capacity) cap = parse_count(*a_capacity);
        log.info("resolved config: " + config.dump() + " seed=" + std::to_string(g.seed));
        detail::emit(g, out,
                     detail::best_output(g, best_over_probes(table, a_tasks[0], metric, cap), a_tasks[0], metric));
        return 0;
      }
      std::vector<PublishedValue> published;
      if (!a_published.empty()) published = read_published_csv(a_published);
      if (a_tasks.empty()) {
        for (const auto& t : table.tasks()) {
          const auto m = a_metric.empty() ? table.default_metric(t) : a_metric;
          const auto sets = table.probe_sets(t, m);
          if (std::count(sets.begin(), sets.end(), a_set1) && std::count(sets.begin(), sets.end(), a_set2)) {
            a_tasks.push_back(t);
          }
        }
      }
      config["tasks"] = a_tasks;
      log.info("resolved config: " + config.dump() + " seed=" + std::to_string(g.seed));
      ComparisonReport report;
      for (const auto& t : a_tasks) {
        const auto m = a_metric.empty() ? table.default_metric(t) : a_metric;
        auto row = compare_probe_sets(table, t, m, a_set1, a_set2);
        annotate_with_published(row, published);
        for (const auto& n : row.notes) log.warn(t + ": " + n);
        report.rows.push_back(std::move(row));
      }
      detail::emit(g, out, emit_report(report, report_format_from_string(g.format), g.precision));
    }
  } catch (const DataError& e) {
    log.error(e.what());
    return 2;
  } catch (const ArgumentError& e) {
    log.error(e.what());
    return 2;
  } catch (const IoError& e) {
    log.error(e.what());
    return 2;
  }
  return 0;
}

}  // namespace mp3s::cli

#endif  // MP3S_CLI_HPP_
