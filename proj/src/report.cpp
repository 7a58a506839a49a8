// Copyright 2026 The UniPT Authors.
// SPDX-License-Identifier: Apache-2.0

#include "unipt/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <set>
#include <sstream>

#include "unipt/error.hpp"

namespace unipt {
namespace {

using nlohmann::json;

json number(double v) {
  if (!std::isfinite(v)) return nullptr;
  return round9(v);
}

json config_value(const ConfigEntry& e) {
  using Kind = ConfigEntry::Kind;
  auto items = [&] {
    std::vector<std::string> out;
    std::stringstream ss(e.value);
    std::string item;
    while (std::getline(ss, item, ',')) {
      const auto first = item.find_first_not_of(' ');
      if (first != std::string::npos) out.push_back(item.substr(first));
    }
    return out;
  };
  switch (e.kind) {
    case Kind::kText:
      return e.value;
    case Kind::kInteger:
      return std::stoull(e.value);
    case Kind::kReal:
      return number(std::strtod(e.value.c_str(), nullptr));
    case Kind::kBoolean:
      return e.value == "true";
    case Kind::kIntegerList: {
      json a = json::array();
      for (const auto& s : items()) a.push_back(std::stoull(s));
      return a;
    }
    case Kind::kRealList: {
      json a = json::array();
      for (const auto& s : items()) a.push_back(number(std::strtod(s.c_str(), nullptr)));
      return a;
    }
    case Kind::kTextList: {
      json a = json::array();
      for (const auto& s : items()) a.push_back(s);
      return a;
    }
  }
  return e.value;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

void expect_fields(const json& obj, const std::string& where, const std::set<std::string>& names,
                   std::vector<std::string>& errors) {
  if (!obj.is_object()) {
    errors.push_back(where + " is not an object");
    return;
  }
  for (const auto& n : names) {
    if (!obj.contains(n)) errors.push_back(where + " lacks field '" + n + "'");
  }
  for (const auto& [k, v] : obj.items()) {
    if (!names.count(k)) errors.push_back(where + " has unknown field '" + k + "'");
  }
}

bool is_number_or_null(const json& v) { return v.is_number() || v.is_null(); }

}  // namespace

const std::vector<std::string>& report_categories() {
  static const std::vector<std::string> names{kCategoryInput, kCategoryBackbone, kCategoryTap,
                                              kCategorySide};
  return names;
}

double round9(double v) {
  if (!std::isfinite(v) || v == 0.0) return v;
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return std::strtod(buf, nullptr);
}

std::string format9(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

json strategy_report_json(const StrategyReport& r) {
  json bytes = json::object();
  for (const auto& c : report_categories()) bytes[c] = r.memory.at(c);
  json trace = json::array();
  for (const auto& p : r.trace) {
    trace.push_back({{"step", p.step},
                     {"train_loss", number(p.train_loss)},
                     {"val_loss", number(p.val_loss)}});
  }
  json grid = json::array();
  for (const auto& g : r.lr_results) {
    grid.push_back({{"lr", number(g.lr)}, {"final_val_loss", number(g.final_val_loss)}});
  }
  return {{"label", r.label},
          {"kind", std::string(to_string(r.kind))},
          {"reduction", r.reduction},
          {"lr", number(r.lr)},
          {"trainable_params", r.trainable_params},
          {"retained_bytes", bytes},
          {"peak_bytes", r.memory.peak_total},
          {"trace", trace},
          {"initial_train_loss", number(r.initial_train_loss)},
          {"initial_val_loss", number(r.initial_val_loss)},
          {"final_train_loss", number(r.final_train_loss)},
          {"final_val_loss", number(r.final_val_loss)},
          {"best_val_loss", number(r.best_val_loss)},
          {"lr_results", grid},
          {"wall_clock_seconds", number(r.wall_clock_seconds)}};
}

json report_json(const RunConfig& config, const Comparison& result) {
  json echo = json::object();
  for (const auto& e : config_entries(config)) echo[e.section][e.key] = config_value(e);
  json rows = json::array();
  for (const auto& r : result.rows) rows.push_back(strategy_report_json(r));
  json checks = json::array();
  for (const auto& c : result.checks) {
    checks.push_back({{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
  }
  return {{"schema", kReportSchema},
          {"operation", std::string(to_string(config.experiment.operation))},
          {"config", echo},
          {"reports", rows},
          {"checks", checks},
          {"all_passed", result.all_passed()}};
}

std::vector<std::string> validate_report_json(const json& doc) {
  std::vector<std::string> errors;
  expect_fields(doc, "report", {"schema", "operation", "config", "reports", "checks", "all_passed"},
                errors);
  if (!errors.empty()) return errors;
  if (doc["schema"] != kReportSchema) errors.push_back("report schema is not " + std::string(kReportSchema));
  if (!doc["all_passed"].is_boolean()) errors.push_back("all_passed is not a boolean");

  std::set<std::string> sections;
  std::map<std::string, std::set<std::string>> keys;
  for (const auto& e : config_entries(RunConfig{})) {
    sections.insert(e.section);
    keys[e.section].insert(e.key);
  }
  expect_fields(doc["config"], "config", sections, errors);
  if (doc["config"].is_object()) {
    for (const auto& s : sections) {
      if (doc["config"].contains(s)) expect_fields(doc["config"][s], "config." + s, keys[s], errors);
    }
  }

  if (!doc["reports"].is_array()) {
    errors.push_back("reports is not an array");
  } else {
    std::set<std::string> categories(report_categories().begin(), report_categories().end());
    for (std::size_t i = 0; i < doc["reports"].size(); ++i) {
      const json& r = doc["reports"][i];
      const std::string where = "reports[" + std::to_string(i) + "]";
      expect_fields(r,
                    where,
                    {"label", "kind", "reduction", "lr", "trainable_params", "retained_bytes",
                     "peak_bytes", "trace", "initial_train_loss", "initial_val_loss",
                     "final_train_loss", "final_val_loss", "best_val_loss", "lr_results",
                     "wall_clock_seconds"},
                    errors);
      if (!r.is_object()) continue;
      if (r.contains("retained_bytes")) {
        expect_fields(r["retained_bytes"], where + ".retained_bytes", categories, errors);
      }
      if (r.contains("trace") && r["trace"].is_array()) {
        for (std::size_t j = 0; j < r["trace"].size(); ++j) {
          expect_fields(r["trace"][j], where + ".trace[" + std::to_string(j) + "]",
                        {"step", "train_loss", "val_loss"}, errors);
        }
      } else {
        errors.push_back(where + ".trace is not an array");
      }
      if (r.contains("lr_results") && r["lr_results"].is_array()) {
        for (std::size_t j = 0; j < r["lr_results"].size(); ++j) {
          const json& g = r["lr_results"][j];
          expect_fields(g, where + ".lr_results[" + std::to_string(j) + "]",
                        {"lr", "final_val_loss"}, errors);
          if (g.is_object() && g.contains("final_val_loss") &&
              !is_number_or_null(g["final_val_loss"])) {
            errors.push_back(where + ".lr_results[" + std::to_string(j) +
                             "].final_val_loss is not a number");
          }
        }
      } else {
        errors.push_back(where + ".lr_results is not an array");
      }
      for (const char* n : {"trainable_params", "peak_bytes", "reduction"}) {
        if (r.contains(n) && !r[n].is_number_unsigned()) {
          errors.push_back(where + "." + n + " is not an unsigned integer");
        }
      }
    }
  }

  if (!doc["checks"].is_array()) {
    errors.push_back("checks is not an array");
  } else {
    for (std::size_t i = 0; i < doc["checks"].size(); ++i) {
      expect_fields(doc["checks"][i], "checks[" + std::to_string(i) + "]",
                    {"name", "passed", "detail"}, errors);
    }
  }
  return errors;
}

std::string report_csv(const Comparison& result) {
  std::string out = "label,kind,reduction,lr,trainable_params,peak_bytes";
  for (const auto& c : report_categories()) out += ",bytes_" + c;
  out += ",initial_val_loss,final_train_loss,final_val_loss,best_val_loss,wall_clock_seconds\n";
  for (const auto& r : result.rows) {
    out += csv_field(r.label) + "," + std::string(to_string(r.kind)) + "," +
           std::to_string(r.reduction) + "," + format9(r.lr) + "," +
           std::to_string(r.trainable_params) + "," + std::to_string(r.memory.peak_total);
    for (const auto& c : report_categories()) out += "," + std::to_string(r.memory.at(c));
    out += "," + format9(r.initial_val_loss) + "," + format9(r.final_train_loss) + "," +
           format9(r.final_val_loss) + "," + format9(r.best_val_loss) + "," +
           format9(r.wall_clock_seconds) + "\n";
  }
  return out;
}

std::string report_table(const Comparison& result) {
  std::vector<std::vector<std::string>> cells{
      {"strategy", "r", "lr", "params", "peak_bytes", "backbone_bytes", "val_loss", "best_val"}};
  for (const auto& r : result.rows) {
    cells.push_back({r.label, std::to_string(r.reduction), format9(r.lr),
                     std::to_string(r.trainable_params), std::to_string(r.memory.peak_total),
                     std::to_string(r.memory.at(kCategoryBackbone)), format9(r.final_val_loss),
                     format9(r.best_val_loss)});
  }
  std::vector<std::size_t> width(cells.front().size(), 0);
  for (const auto& row : cells) {
    for (std::size_t i = 0; i < row.size(); ++i) width[i] = std::max(width[i], row[i].size());
  }
  std::string out;
  for (const auto& row : cells) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      out += row[i];
      if (i + 1 < row.size()) out += std::string(width[i] - row[i].size() + 2, ' ');
    }
    out += "\n";
  }
  for (const auto& c : result.checks) {
    out += (c.passed ? "PASS " : "FAIL ") + c.name + ": " + c.detail + "\n";
  }
  return out;
}

std::vector<PlotPoint> plot_points(const std::vector<StrategyReport>& rows) {
  if (rows.empty()) throw Error(ErrorCode::kInvalidArgument, "plot data needs at least one report");
  std::vector<PlotPoint> out;
  for (const auto& r : rows) out.push_back({r.label, r.memory.peak_total, r.final_val_loss});
  std::stable_sort(out.begin(), out.end(),
                   [](const PlotPoint& a, const PlotPoint& b) { return a.peak_bytes < b.peak_bytes; });
  return out;
}

std::string plotdata_csv(const std::vector<StrategyReport>& rows) {
  std::string out = "label,peak_bytes,final_val_loss\n";
  for (const auto& p : plot_points(rows)) {
    out += csv_field(p.label) + "," + std::to_string(p.peak_bytes) + "," + format9(p.metric) + "\n";
  }
  return out;
}

}  // namespace unipt
