// Copyright 2026 The UniPT Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "unipt/config.hpp"
#include "unipt/harness.hpp"

namespace unipt {

inline constexpr const char* kReportSchema = "unipt-report/1";

/// Ledger categories emitted as CSV columns, in column order.
const std::vector<std::string>& report_categories();

/// Rounds to 9 significant digits; non-finite values pass through.
double round9(double v);

/// Text form of `v` with 9 significant digits; "inf" for diverged runs.
std::string format9(double v);

/// The hierarchical report: schema tag, full config echo, one object per
/// strategy row, and the checks of the operation. Non-finite numbers
/// (diverged grid points) are written as null.
nlohmann::json report_json(const RunConfig& config, const Comparison& result);

nlohmann::json strategy_report_json(const StrategyReport& report);

/// Errors against the documented field list; empty when the document is
/// valid. Missing and unknown fields are both errors.
std::vector<std::string> validate_report_json(const nlohmann::json& doc);

/// One header line plus one line per row.
std::string report_csv(const Comparison& result);

/// Aligned plain-text table for terminals.
std::string report_table(const Comparison& result);

struct PlotPoint {
  std::string label;
  std::size_t peak_bytes = 0;
  double metric = 0.0;  // final validation loss
};

/// (peak bytes, final validation loss) per row, ascending by bytes.
std::vector<PlotPoint> plot_points(const std::vector<StrategyReport>& rows);
std::string plotdata_csv(const std::vector<StrategyReport>& rows);

}  // namespace unipt
