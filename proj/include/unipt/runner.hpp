// Copyright 2026 The UniPT Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "unipt/config.hpp"
#include "unipt/harness.hpp"

namespace unipt {

/// Builds the backbone and task, then runs `config.experiment.operation`.
Comparison execute(const RunConfig& config);

/// Files written by write_reports, relative to the output directory.
inline constexpr const char* kReportJsonFile = "report.json";
inline constexpr const char* kReportCsvFile = "report.csv";
inline constexpr const char* kPlotdataFile = "plotdata.csv";

/// Writes the JSON report, the CSV table, and the plot series into `dir`
/// (created if missing). Returns the paths written.
std::vector<std::string> write_reports(const RunConfig& config, const Comparison& result,
                                       const std::string& dir);

}  // namespace unipt
