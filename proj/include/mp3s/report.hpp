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

// Serialization of comparison reports as JSON, CSV and markdown.
//
// Every number is rounded to `precision` significant digits before it is
// written, in all three formats, so a JSON report re-emitted through CSV
// carries identical values. precision = 17 preserves doubles exactly.

#ifndef MP3S_REPORT_HPP_
#define MP3S_REPORT_HPP_

#include <cstdlib>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "mp3s/bench.hpp"
#include "mp3s/detail/csv.hpp"
#include "mp3s/detail/format.hpp"
#include "mp3s/error.hpp"

namespace mp3s {

enum class ReportFormat { kJson, kCsv, kMarkdown };

inline ReportFormat report_format_from_string(const std::string& s) {
  if (s == "json") return ReportFormat::kJson;
  if (s == "csv") return ReportFormat::kCsv;
  if (s == "markdown" || s == "md") return ReportFormat::kMarkdown;
  throw ArgumentError("unknown format '" + s + "'");
}

inline constexpr int kDefaultPrecision = 6;

namespace detail {

inline double round_sig(double v, int precision) {
  return std::strtod(format_number(v, precision).c_str(), nullptr);
}

inline double parse_double(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) throw DataError("bad number '" + s + "'");
  return v;
}

inline std::string encode_ranking(const std::vector<RankEntry>& r, int precision) {
  std::string out;
  for (std::size_t i = 0; i < r.size(); ++i) {
    if (i) out += ';';
    out += r[i].encoder + "=" + format_number(r[i].value, precision) + "@" +
           format_number(r[i].rank, precision);
  }
  return out;
}

inline std::vector<RankEntry> decode_ranking(const std::string& s) {
  std::vector<RankEntry> out;
  if (s.empty()) return out;
  for (const auto& item : split(s, ';')) {
    const auto eq = item.rfind('=');
    const auto at = item.rfind('@');
    if (eq == std::string::npos || at == std::string::npos || at < eq) {
      throw DataError("bad ranking entry '" + item + "'");
    }
    out.push_back({item.substr(0, eq), parse_double(item.substr(eq + 1, at - eq - 1)),
                   parse_double(item.substr(at + 1))});
  }
  return out;
}

// Notes share one CSV cell, joined by " | "; '|' and '\\' inside a note are
// backslash-escaped.
inline std::string encode_notes(const std::vector<std::string>& notes) {
  std::string out;
  for (std::size_t i = 0; i < notes.size(); ++i) {
    if (i) out += " | ";
    for (char c : notes[i]) {
      if (c == '|' || c == '\\') out += '\\';
      out += c;
    }
  }
  return out;
}

inline std::vector<std::string> decode_notes(const std::string& s) {
  std::vector<std::string> out;
  if (s.empty()) return out;
  std::string cur;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '\\' && i + 1 < s.size()) {
      cur += s[++i];
    } else if (s.compare(i, 3, " | ") == 0) {
      out.push_back(std::move(cur));
      cur.clear();
      i += 2;
    } else {
      cur += s[i];
    }
  }
  out.push_back(std::move(cur));
  return out;
}

inline const std::vector<std::string>& report_csv_header() {
  static const std::vector<std::string> h = {
      "task",      "metric",    "set1",         "set2",         "direction",
      "n",         "pearson",   "spearman",     "mean_set1",    "mean_set2",
      "diff_percent", "ranking_set1", "ranking_set2", "notes"};
  return h;
}

}  // namespace detail

inline nlohmann::json report_to_json(const ComparisonReport& report, int precision = kDefaultPrecision) {
  using nlohmann::json;
  auto r = [&](double v) { return detail::round_sig(v, precision); };
  auto ranking = [&](const std::vector<RankEntry>& entries) {
    json a = json::array();
    for (const auto& e : entries) a.push_back({{"encoder", e.encoder}, {"value", r(e.value)}, {"rank", r(e.rank)}});
    return a;
  };
  json rows = json::array();
  for (const auto& row : report.rows) {
    rows.push_back({{"task", row.task},
                    {"metric", row.metric},
                    {"set1", row.set1},
                    {"set2", row.set2},
                    {"direction", to_string(row.direction)},
                    {"n", row.n},
                    {"pearson", r(row.pearson)},
                    {"spearman", r(row.spearman)},
                    {"mean_set1", r(row.mean_set1)},
                    {"mean_set2", r(row.mean_set2)},
                    {"diff_percent", r(row.diff_percent)},
                    {"ranking_set1", ranking(row.ranking_set1)},
                    {"ranking_set2", ranking(row.ranking_set2)},
                    {"notes", row.notes}});
  }
  return {{"rows", std::move(rows)}};
}

inline ComparisonReport report_from_json(const nlohmann::json& j) {
  ComparisonReport report;
  try {
    for (const auto& jr : j.at("rows")) {
      ComparisonRow row;
      row.task = jr.at("task").get<std::string>();
      row.metric = jr.at("metric").get<std::string>();
      row.set1 = jr.at("set1").get<std::string>();
      row.set2 = jr.at("set2").get<std::string>();
      row.direction = direction_from_string(jr.at("direction").get<std::string>());
      row.n = jr.at("n").get<std::size_t>();
      row.pearson = jr.at("pearson").get<double>();
      row.spearman = jr.at("spearman").get<double>();
      row.mean_set1 = jr.at("mean_set1").get<double>();
      row.mean_set2 = jr.at("mean_set2").get<double>();
      row.diff_percent = jr.at("diff_percent").get<double>();
      for (const char* key : {"ranking_set1", "ranking_set2"}) {
        auto& dst = std::string(key) == "ranking_set1" ? row.ranking_set1 : row.ranking_set2;
        for (const auto& e : jr.at(key)) {
          dst.push_back({e.at("encoder").get<std::string>(), e.at("value").get<double>(),
                         e.at("rank").get<double>()});
        }
      }
      row.notes = jr.at("notes").get<std::vector<std::string>>();
      report.rows.push_back(std::move(row));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("report JSON: ") + e.what());
  }
  return report;
}

inline std::string report_to_csv(const ComparisonReport& report, int precision = kDefaultPrecision) {
  auto f = [&](double v) { return detail::format_number(v, precision); };
  std::ostringstream out;
  out << detail::join_csv(detail::report_csv_header()) << '\n';
  for (const auto& row : report.rows) {
    out << detail::join_csv({row.task, row.metric, row.set1, row.set2, to_string(row.direction),
                             std::to_string(row.n), f(row.pearson), f(row.spearman), f(row.mean_set1),
                             f(row.mean_set2), f(row.diff_percent),
                             detail::encode_ranking(row.ranking_set1, precision),
                             detail::encode_ranking(row.ranking_set2, precision),
                             detail::encode_notes(row.notes)})
        << '\n';
  }
  return out.str();
}

inline ComparisonReport report_from_csv(std::istream& in) {
  ComparisonReport report;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = detail::parse_csv_line(line);
    if (header) {
      if (f != detail::report_csv_header()) throw DataError("report CSV: unexpected header");
      header = false;
      continue;
    }
    if (f.size() != detail::report_csv_header().size()) throw DataError("report CSV: wrong field count");
    ComparisonRow row;
    row.task = f[0];
    row.metric = f[1];
    row.set1 = f[2];
    row.set2 = f[3];
    row.direction = direction_from_string(f[4]);
    row.n = static_cast<std::size_t>(std::stoull(f[5]));
    row.pearson = detail::parse_double(f[6]);
    row.spearman = detail::parse_double(f[7]);
    row.mean_set1 = detail::parse_double(f[8]);
    row.mean_set2 = detail::parse_double(f[9]);
    row.diff_percent = detail::parse_double(f[10]);
    row.ranking_set1 = detail::decode_ranking(f[11]);
    row.ranking_set2 = detail::decode_ranking(f[12]);
    row.notes = detail::decode_notes(f[13]);
    report.rows.push_back(std::move(row));
  }
  return report;
}

inline std::string report_to_markdown(const ComparisonReport& report, int precision = kDefaultPrecision) {
  auto f = [&](double v) { return detail::format_number(v, precision); };
  std::ostringstream out;
  out << "| Task | Metric | Sets | Pearson | Spearman | Mean set1 | Mean set2 | Diff (%) |\n"
      << "|---|---|---|---|---|---|---|---|\n";
  for (const auto& row : report.rows) {
    out << "| " << row.task << " | " << row.metric << " | " << row.set1 << " vs " << row.set2 << " | "
        << f(row.pearson) << " | " << f(row.spearman) << " | " << f(row.mean_set1) << " | "
        << f(row.mean_set2) << " | " << f(row.diff_percent) << " |\n";
  }
  bool any_notes = false;
  for (const auto& row : report.rows) {
    for (const auto& n : row.notes) {
      if (!any_notes) out << "\nNotes:\n\n";
      any_notes = true;
      out << "- " << row.task << " (" << row.set1 << " vs " << row.set2 << "): " << n << '\n';
    }
  }
  return out.str();
}

inline std::string emit_report(const ComparisonReport& report, ReportFormat format,
                               int precision = kDefaultPrecision) {
  switch (format) {
    case ReportFormat::kJson: return report_to_json(report, precision).dump(2) + "\n";
    case ReportFormat::kCsv: return report_to_csv(report, precision);
    case ReportFormat::kMarkdown: return report_to_markdown(report, precision);
  }
  return {};
}

}  // namespace mp3s

#endif  // MP3S_REPORT_HPP_
