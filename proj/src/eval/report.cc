// Copyright 2026 The libu-lab Authors.
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
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "libu/evaluate.h"

namespace libu {
namespace {

using nlohmann::ordered_json;

std::string Fixed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

}  // namespace

std::string ReportToJson(const EvalReport& r) {
  ordered_json j;
  j["schema_version"] = kReportSchemaVersion;
  j["label"] = r.label;
  j["forget_regurgitation"] = r.forget_regurgitation;
  j["retain_regurgitation"] = r.retain_regurgitation;
  j["forget_exact_match"] = r.forget_exact_match;
  j["retain_exact_match"] = r.retain_exact_match;
  j["task_aggregate"] = r.task_aggregate;
  j["mia_score"] = r.mia_score;
  j["utility"] = r.utility;
  j["final_aggregate"] = r.final_aggregate;
  j["formula"] = r.formula;
  j["prompts"] = {
      {"forget_completion", r.forget_completion_prompts},
      {"forget_qa", r.forget_qa_prompts},
      {"retain_completion", r.retain_completion_prompts},
      {"retain_qa", r.retain_qa_prompts},
  };
  j["flagged_prompts"] = r.flagged_prompts;
  return j.dump(2) + "\n";
}

EvalReport ReportFromJson(const std::string& text, const std::string& source) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const std::exception& e) {
    throw std::runtime_error(source + ": malformed JSON: " + e.what());
  }
  try {
    const int version = j.at("schema_version").get<int>();
    if (version != kReportSchemaVersion) {
      throw ReportSchemaError(source + ": schema_version " +
                              std::to_string(version) + " (expected " +
                              std::to_string(kReportSchemaVersion) + ")");
    }
    EvalReport r;
    r.label = j.at("label").get<std::string>();
    r.forget_regurgitation = j.at("forget_regurgitation").get<double>();
    r.retain_regurgitation = j.at("retain_regurgitation").get<double>();
    r.forget_exact_match = j.at("forget_exact_match").get<double>();
    r.retain_exact_match = j.at("retain_exact_match").get<double>();
    r.task_aggregate = j.at("task_aggregate").get<double>();
    r.mia_score = j.at("mia_score").get<double>();
    r.utility = j.at("utility").get<double>();
    r.final_aggregate = j.at("final_aggregate").get<double>();
    r.formula = j.at("formula").get<std::string>();
    const auto& p = j.at("prompts");
    r.forget_completion_prompts = p.at("forget_completion").get<std::size_t>();
    r.forget_qa_prompts = p.at("forget_qa").get<std::size_t>();
    r.retain_completion_prompts = p.at("retain_completion").get<std::size_t>();
    r.retain_qa_prompts = p.at("retain_qa").get<std::size_t>();
    r.flagged_prompts = j.at("flagged_prompts").get<std::vector<std::string>>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(source + ": invalid report: " + e.what());
  }
}

void WriteReport(const std::filesystem::path& path, const EvalReport& report) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write report " + path.string());
  out << ReportToJson(report);
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

EvalReport ReadReport(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open report " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return ReportFromJson(text, path.string());
}

std::string RenderTable(std::span<const EvalReport> reports) {
  if (reports.empty()) throw std::invalid_argument("render_table: no reports");
  struct Column {
    std::string title;
    double (*value)(const EvalReport&);
    bool closest_to_zero;
  };
  const Column columns[] = {
      {"Aggregate", [](const EvalReport& r) { return r.final_aggregate; },
       false},
      {"Task Aggregate", [](const EvalReport& r) { return r.task_aggregate; },
       false},
      {"MIA", [](const EvalReport& r) { return r.mia_score; }, true},
      {"Utility", [](const EvalReport& r) { return r.utility; }, false},
  };
  constexpr std::size_t kCols = std::size(columns);

  std::vector<std::vector<std::string>> cells(reports.size() + 1);
  cells[0].push_back("Algorithm");
  for (const auto& c : columns) cells[0].push_back(c.title);
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const std::string& label = reports[i].label;
    cells[i + 1].push_back(label.empty() ? "run" + std::to_string(i + 1)
                                         : label);
  }
  for (std::size_t c = 0; c < kCols; ++c) {
    auto key = [&](const EvalReport& r) {
      const double v = columns[c].value(r);
      return columns[c].closest_to_zero ? -std::abs(v) : v;
    };
    double best = key(reports[0]);
    for (const auto& r : reports) best = std::max(best, key(r));
    for (std::size_t i = 0; i < reports.size(); ++i) {
      std::string cell = Fixed(columns[c].value(reports[i]));
      if (key(reports[i]) == best) cell += '*';
      cells[i + 1].push_back(std::move(cell));
    }
  }

  std::vector<std::size_t> width(kCols + 1, 0);
  for (const auto& row : cells) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      width[c] = std::max(width[c], row[c].size());
    }
  }
  std::ostringstream out;
  for (std::size_t r = 0; r < cells.size(); ++r) {
    for (std::size_t c = 0; c < cells[r].size(); ++c) {
      const std::string& s = cells[r][c];
      if (c == 0) {
        out << s << std::string(width[c] - s.size(), ' ');
      } else {
        out << "  " << std::string(width[c] - s.size(), ' ') << s;
      }
    }
    out << '\n';
    if (r == 0) {
      std::size_t total = width[0];
      for (std::size_t c = 1; c < width.size(); ++c) total += 2 + width[c];
      out << std::string(total, '-') << '\n';
    }
  }
  return out.str();
}

}  // namespace libu
