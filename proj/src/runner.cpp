// Copyright 2026 The UniPT Authors.
// SPDX-License-Identifier: Apache-2.0

#include "unipt/runner.hpp"

#include <filesystem>
#include <fstream>
#include <memory>

#include "unipt/report.hpp"

namespace unipt {
namespace {

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw Error(ErrorCode::kIo, "failed to write " + path.string());
}

}  // namespace

Comparison execute(const RunConfig& config) {
  if (auto errors = validate_config(config); !errors.empty()) throw ConfigError(std::move(errors));
  auto backbone = std::make_shared<const Backbone>(config.backbone);
  const SyntheticTask task = make_mid_layer_task(backbone, config.task);
  switch (config.experiment.operation) {
    case Operation::kRun: {
      Comparison c;
      c.rows.push_back(train(task, config.run));
      c.checks = comparison_checks(c.rows);
      return c;
    }
    case Operation::kCompare:
      return compare_strategies(task, config.experiment.kinds, config.run);
    case Operation::kSweep:
      return sweep_reduction_factor(task, config.run, config.experiment.reductions);
    case Operation::kGuidance: {
      const auto spec = guide_backbone_spec(config);
      std::unique_ptr<Backbone> guide;
      if (spec) guide = std::make_unique<Backbone>(*spec);
      return stronger_guidance_experiment(task, guide.get(), config.run);
    }
  }
  throw Error(ErrorCode::kState, "unhandled operation");
}

std::vector<std::string> write_reports(const RunConfig& config, const Comparison& result,
                                       const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create " + dir + ": " + ec.message());
  const std::filesystem::path root(dir);
  const auto json_path = root / kReportJsonFile;
  const auto csv_path = root / kReportCsvFile;
  const auto plot_path = root / kPlotdataFile;
  write_file(json_path, report_json(config, result).dump(2) + "\n");
  write_file(csv_path, report_csv(result));
  write_file(plot_path, plotdata_csv(result.rows));
  return {json_path.string(), csv_path.string(), plot_path.string()};
}

}  // namespace unipt
