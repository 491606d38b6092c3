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

// Benchmark tables and cross-probe analysis: correlations between probe
// sets, rankings, mean performance shifts and best-over-probes selection.

#ifndef MP3S_BENCH_HPP_
#define MP3S_BENCH_HPP_

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "mp3s/detail/csv.hpp"
#include "mp3s/detail/format.hpp"
#include "mp3s/error.hpp"

namespace mp3s {

enum class Direction { kLowerBetter, kHigherBetter };

inline const char* to_string(Direction d) {
  return d == Direction::kLowerBetter ? "lower_better" : "higher_better";
}

inline Direction direction_from_string(const std::string& s) {
  if (s == "lower_better") return Direction::kLowerBetter;
  if (s == "higher_better") return Direction::kHigherBetter;
  throw DataError("unknown metric direction '" + s + "'");
}

struct MetricValue {
  std::string encoder;
  std::string task;
  std::string probe_set;
  std::string metric_name;
  double value = 0.0;
  Direction direction = Direction::kLowerBetter;
  std::optional<double> probe_params;
};

// Rows keep insertion order, which fixes encoder order in every report.
class BenchTable {
 public:
  void add(MetricValue row) {
    if (!std::isfinite(row.value)) {
      throw DataError("bench table: non-finite value for " + describe(row));
    }
    auto key = std::make_tuple(row.encoder, row.task, row.probe_set, row.metric_name);
    if (!keys_.insert(key).second) throw DataError("bench table: duplicate row " + describe(row));
    auto [it, inserted] = directions_.emplace(std::make_pair(row.task, row.metric_name), row.direction);
    if (!inserted && it->second != row.direction) {
      throw DataError("bench table: conflicting direction for task '" + row.task + "' metric '" +
                      row.metric_name + "'");
    }
    rows_.push_back(std::move(row));
  }

  const std::vector<MetricValue>& rows() const { return rows_; }
  bool empty() const { return rows_.empty(); }

  std::vector<const MetricValue*> select(const std::string& task, const std::string& metric,
                                         const std::string& probe_set) const {
    std::vector<const MetricValue*> out;
    for (const auto& r : rows_) {
      if (r.task == task && r.metric_name == metric && r.probe_set == probe_set) out.push_back(&r);
    }
    return out;
  }

  std::vector<std::string> tasks() const {
    return unique_in_order([](const MetricValue&) { return true; },
                           [](const MetricValue& r) { return r.task; });
  }
  // Metrics of a task in first-appearance order; the first is the default.
  std::vector<std::string> metrics(const std::string& task) const {
    return unique_in_order([&](const MetricValue& r) { return r.task == task; },
                           [](const MetricValue& r) { return r.metric_name; });
  }
  std::vector<std::string> probe_sets(const std::string& task, const std::string& metric) const {
    return unique_in_order(
        [&](const MetricValue& r) { return r.task == task && r.metric_name == metric; },
        [](const MetricValue& r) { return r.probe_set; });
  }
  std::vector<std::string> encoders(const std::string& task, const std::string& metric) const {
    return unique_in_order(
        [&](const MetricValue& r) { return r.task == task && r.metric_name == metric; },
        [](const MetricValue& r) { return r.encoder; });
  }

  std::optional<Direction> direction(const std::string& task, const std::string& metric) const {
    auto it = directions_.find({task, metric});
    if (it == directions_.end()) return std::nullopt;
    return it->second;
  }

  std::string default_metric(const std::string& task) const {
    const auto m = metrics(task);
    if (m.empty()) throw DataError("bench table: no rows for task '" + task + "'");
    return m.front();
  }

 private:
  static std::string describe(const MetricValue& r) {
    return "(" + r.encoder + ", " + r.task + ", " + r.probe_set + ", " + r.metric_name + ")";
  }

  template <typename Pred, typename Key>
  std::vector<std::string> unique_in_order(Pred pred, Key key) const {
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (const auto& r : rows_) {
      if (!pred(r)) continue;
      auto k = key(r);
      if (seen.insert(k).second) out.push_back(std::move(k));
    }
    return out;
  }

  std::vector<MetricValue> rows_;
  std::set<std::tuple<std::string, std::string, std::string, std::string>> keys_;
  std::map<std::pair<std::string, std::string>, Direction> directions_;
};

// Parses plain numbers and k/M/G suffixed counts ("7.0M", "13.8k").
inline double parse_count(const std::string& s) {
  std::string body = detail::trim(s);
  double scale = 1.0;
  if (!body.empty()) {
    switch (body.back()) {
      case 'k': case 'K': scale = 1e3; body.pop_back(); break;
      case 'M': scale = 1e6; body.pop_back(); break;
      case 'G': case 'B': scale = 1e9; body.pop_back(); break;
      default: break;
    }
  }
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(body, &pos);
  } catch (const std::exception&) {
    pos = std::string::npos;
  }
  if (body.empty() || pos != body.size()) throw DataError("bad numeric field '" + s + "'");
  return v * scale;
}

// CSV: encoder,task,probe_set,metric,value,direction[,probe_params]
inline BenchTable parse_bench_csv(std::istream& in) {
  BenchTable table;
  std::string line;
  std::size_t lineno = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty() || detail::trim(line)[0] == '#') continue;
    auto f = detail::parse_csv_line(line);
    for (auto& x : f) x = detail::trim(x);
    if (header.empty()) {
      header = f;
      const std::vector<std::string> want = {"encoder", "task",  "probe_set",
                                             "metric",  "value", "direction"};
      if (header.size() < want.size() || !std::equal(want.begin(), want.end(), header.begin()) ||
          (header.size() == 7 && header[6] != "probe_params") || header.size() > 7) {
        throw DataError("bench CSV: header must be encoder,task,probe_set,metric,value,direction"
                        "[,probe_params]");
      }
      continue;
    }
    if (f.size() != header.size() && !(header.size() == 7 && f.size() == 6)) {
      throw DataError("bench CSV line " + std::to_string(lineno) + ": expected " +
                      std::to_string(header.size()) + " fields, got " + std::to_string(f.size()));
    }
    MetricValue r;
    r.encoder = f[0];
    r.task = f[1];
    r.probe_set = f[2];
    r.metric_name = f[3];
    try {
      r.value = parse_count(f[4]);
      r.direction = direction_from_string(f[5]);
      if (f.size() == 7 && !f[6].empty()) r.probe_params = parse_count(f[6]);
      table.add(std::move(r));
    } catch (const DataError& e) {
      throw DataError("bench CSV line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return table;
}

inline BenchTable read_bench_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open bench table '" + path.string() + "'");
  return parse_bench_csv(in);
}

// ---------------------------------------------------------------------------
// Statistics

inline double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ArgumentError("pearson: length mismatch");
  if (x.size() < 2) throw ArgumentError("pearson: need at least two points");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw DataError("pearson: zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

// 1-based ranks of ascending values; ties share their average rank.
inline std::vector<double> fractional_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

inline double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ArgumentError("spearman: length mismatch");
  const auto rx = fractional_ranks(x);
  const auto ry = fractional_ranks(y);
  return pearson(rx, ry);
}

inline double mean(std::span<const double> v) {
  if (v.empty()) throw ArgumentError("mean: empty input");
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Positive means the second value is better under `dir`, relative to the first.
inline double relative_diff_percent(double mean1, double mean2, Direction dir) {
  if (mean1 == 0.0) throw DataError("relative difference: first mean is zero");
  return dir == Direction::kLowerBetter ? (mean1 - mean2) / mean1 * 100.0
                                        : (mean2 - mean1) / mean1 * 100.0;
}

// ---------------------------------------------------------------------------
// Rankings and comparisons

struct RankEntry {
  std::string encoder;
  double value = 0.0;
  double rank = 0.0;

  bool operator==(const RankEntry&) const = default;
};

// Rank 1 is best under the metric's direction; ties take the average rank.
// Entries are sorted by rank, table order among ties.
inline std::vector<RankEntry> rank_models(const BenchTable& table, const std::string& task,
                                          const std::string& metric, const std::string& probe_set) {
  const auto rows = table.select(task, metric, probe_set);
  if (rows.empty()) {
    throw DataError("rank_models: no values for task '" + task + "', metric '" + metric +
                    "', probe set '" + probe_set + "'");
  }
  const auto dir = *table.direction(task, metric);
  std::vector<double> keyed;
  for (const auto* r : rows) keyed.push_back(dir == Direction::kLowerBetter ? r->value : -r->value);
  const auto ranks = fractional_ranks(keyed);
  std::vector<RankEntry> out;
  for (std::size_t i = 0; i < rows.size(); ++i) out.push_back({rows[i]->encoder, rows[i]->value, ranks[i]});
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.rank < b.rank; });
  return out;
}

struct ComparisonRow {
  std::string task;
  std::string metric;
  std::string set1;
  std::string set2;
  Direction direction = Direction::kLowerBetter;
  std::size_t n = 0;
  double pearson = 0.0;
  double spearman = 0.0;
  double mean_set1 = 0.0;
  double mean_set2 = 0.0;
  double diff_percent = 0.0;
  std::vector<RankEntry> ranking_set1;
  std::vector<RankEntry> ranking_set2;
  std::vector<std::string> notes;

  bool operator==(const ComparisonRow&) const = default;
};

struct ComparisonReport {
  std::vector<ComparisonRow> rows;

  bool operator==(const ComparisonReport&) const = default;
};

// Encoder-aligned comparison of two probe sets on one (task, metric).
// Encoders missing from either set are an error rather than dropped.
inline ComparisonRow compare_probe_sets(const BenchTable& table, const std::string& task,
                                        const std::string& metric, const std::string& set1,
                                        const std::string& set2) {
  const auto dir = table.direction(task, metric);
  if (!dir) throw DataError("compare: no rows for task '" + task + "' metric '" + metric + "'");
  const auto r1 = table.select(task, metric, set1);
  const auto r2 = table.select(task, metric, set2);
  if (r1.empty() || r2.empty()) {
    throw DataError("compare: task '" + task + "' metric '" + metric + "' has no rows for probe set '" +
                    (r1.empty() ? set1 : set2) + "'");
  }
  std::map<std::string, double> v2;
  for (const auto* r : r2) v2.emplace(r->encoder, r->value);
  std::vector<std::string> missing;
  std::vector<double> x, y;
  std::set<std::string> in1;
  for (const auto* r : r1) {
    in1.insert(r->encoder);
    auto it = v2.find(r->encoder);
    if (it == v2.end()) {
      missing.push_back("'" + r->encoder + "' missing from " + set2);
      continue;
    }
    x.push_back(r->value);
    y.push_back(it->second);
  }
  for (const auto* r : r2) {
    if (!in1.count(r->encoder)) missing.push_back("'" + r->encoder + "' missing from " + set1);
  }
  if (!missing.empty()) {
    std::string msg = "compare " + task + "/" + metric + ": encoder sets differ:";
    for (const auto& m : missing) msg += " " + m + ";";
    throw DataError(msg);
  }
  ComparisonRow row;
  row.task = task;
  row.metric = metric;
  row.set1 = set1;
  row.set2 = set2;
  row.direction = *dir;
  row.n = x.size();
  row.pearson = pearson(x, y);
  row.spearman = spearman(x, y);
  row.mean_set1 = mean(x);
  row.mean_set2 = mean(y);
  row.diff_percent = relative_diff_percent(row.mean_set1, row.mean_set2, *dir);
  row.ranking_set1 = rank_models(table, task, metric, set1);
  row.ranking_set2 = rank_models(table, task, metric, set2);
  return row;
}

struct BestEntry {
  std::string encoder;
  MetricValue best;
};

struct BestOverProbes {
  std::vector<BestEntry> entries;           // table encoder order
  std::vector<std::string> excluded;        // encoders with no probe set within capacity
};

// Per encoder, the direction-aware best value over probe sets whose
// parameter count is within capacity_limit (every set when unset). Ties
// keep the probe set appearing first in the table.
inline BestOverProbes best_over_probes(const BenchTable& table, const std::string& task,
                                       const std::string& metric,
                                       std::optional<double> capacity_limit = std::nullopt) {
  const auto dir = table.direction(task, metric);
  if (!dir) throw DataError("best_over_probes: no rows for task '" + task + "' metric '" + metric + "'");
  BestOverProbes out;
  for (const auto& enc : table.encoders(task, metric)) {
    const MetricValue* best = nullptr;
    for (const auto& r : table.rows()) {
      if (r.task != task || r.metric_name != metric || r.encoder != enc) continue;
      if (capacity_limit) {
        if (!r.probe_params) {
          throw DataError("best_over_probes: capacity limit set but probe set '" + r.probe_set +
                          "' for '" + enc + "' has no parameter count");
        }
        if (*r.probe_params > *capacity_limit) continue;
      }
      const bool better = !best || (*dir == Direction::kLowerBetter ? r.value < best->value
                                                                    : r.value > best->value);
      if (better) best = &r;
    }
    if (best) {
      out.entries.push_back({enc, *best});
    } else {
      out.excluded.push_back(enc);
    }
  }
  if (out.entries.empty()) {
    throw DataError("best_over_probes: every probe set for task '" + task +
                    "' exceeds the capacity limit");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Published reference values

struct PublishedValue {
  std::string task;
  std::string metric;
  std::string set1;
  std::string set2;
  std::string statistic;  // pearson | spearman | mean_set1 | mean_set2 | diff_percent
  double value = 0.0;
  double tolerance = 0.0;  // half a unit in the last printed digit
  double unit = 0.0;       // one unit in the last printed digit

  // True when the printed value is `v` rounded or truncated to the
  // printed number of decimals.
  bool reproduced_by(double v) const {
    const double gap = std::abs(v - value);
    if (gap <= tolerance + 1e-12) return true;
    const bool same_sign = (v >= 0) == (value >= 0) || value == 0.0;
    const double excess = std::abs(v) - std::abs(value);
    return same_sign && excess >= -1e-12 && excess < unit - 1e-12;
  }
};

// Half a unit in the last decimal place of a printed number.
inline double printed_half_unit(const std::string& s) {
  const auto dot = s.find('.');
  const int decimals = dot == std::string::npos ? 0 : static_cast<int>(s.size() - dot - 1);
  return 0.5 * std::pow(10.0, -decimals);
}

// CSV: task,metric,set1,set2,statistic,value
inline std::vector<PublishedValue> parse_published_csv(std::istream& in) {
  std::vector<PublishedValue> out;
  std::string line;
  std::size_t lineno = 0;
  bool header = true;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty() || detail::trim(line)[0] == '#') continue;
    auto f = detail::parse_csv_line(line);
    for (auto& x : f) x = detail::trim(x);
    if (header) {
      header = false;
      if (f != std::vector<std::string>{"task", "metric", "set1", "set2", "statistic", "value"}) {
        throw DataError("published CSV: header must be task,metric,set1,set2,statistic,value");
      }
      continue;
    }
    if (f.size() != 6) throw DataError("published CSV line " + std::to_string(lineno) + ": expected 6 fields");
    const double half = printed_half_unit(f[5]);
    out.push_back({f[0], f[1], f[2], f[3], f[4], parse_count(f[5]), half, 2.0 * half});
  }
  return out;
}

inline std::vector<PublishedValue> read_published_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open published values '" + path.string() + "'");
  return parse_published_csv(in);
}

inline std::optional<double> row_statistic(const ComparisonRow& row, const std::string& name) {
  if (name == "pearson") return row.pearson;
  if (name == "spearman") return row.spearman;
  if (name == "mean_set1") return row.mean_set1;
  if (name == "mean_set2") return row.mean_set2;
  if (name == "diff_percent") return row.diff_percent;
  return std::nullopt;
}

// Appends a note for every published statistic of this row that the
// recomputation does not reproduce to its printed precision (rounded or
// truncated).
inline void annotate_with_published(ComparisonRow& row, const std::vector<PublishedValue>& published) {
  for (const auto& p : published) {
    if (p.task != row.task || p.metric != row.metric || p.set1 != row.set1 || p.set2 != row.set2) {
      continue;
    }
    const auto got = row_statistic(row, p.statistic);
    if (!got) throw DataError("published CSV: unknown statistic '" + p.statistic + "'");
    const double gap = std::abs(*got - p.value);
    if (!p.reproduced_by(*got)) {
      row.notes.push_back(p.statistic + ": recomputed " + detail::format_number(*got, 4) +
                          " vs published " + detail::format_number(p.value, 6) + " (|diff| " +
                          detail::format_number(gap, 3) + ")");
    }
  }
}

}  // namespace mp3s

#endif  // MP3S_BENCH_HPP_
