// Copyright 2026 The UniPT Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "unipt/backbones.hpp"
#include "unipt/baselines.hpp"
#include "unipt/error.hpp"
#include "unipt/harness.hpp"

namespace unipt {

enum class Operation { kRun, kCompare, kSweep, kGuidance };

std::string_view to_string(Operation op);
Operation parse_operation(std::string_view name);

enum class OutputFormat { kTable, kCsv, kBoth };

std::string_view to_string(OutputFormat format);
OutputFormat parse_output_format(std::string_view name);

struct ExperimentSpec {
  Operation operation = Operation::kRun;
  std::vector<StrategyKind> kinds;        // compare
  std::vector<std::size_t> reductions;    // sweep

  bool operator==(const ExperimentSpec&) const = default;
};

/// Guide for the stronger-guidance experiment. `self_guided` uses the
/// backbone's own final output; otherwise a second Transformer with the
/// same token width is built from these fields.
struct GuideSpec {
  bool self_guided = false;
  std::size_t depth = 8;
  std::size_t dim = 96;
  std::size_t heads = 4;
  std::size_t mlp_ratio = 4;
  double mixing = 1.0;
  std::uint64_t seed = 1234;

  bool operator==(const GuideSpec&) const = default;
};

struct OutputSpec {
  std::string path = "unipt-out";
  OutputFormat format = OutputFormat::kBoth;

  bool operator==(const OutputSpec&) const = default;
};

struct RunConfig {
  BackboneSpec backbone;
  TrainRun run;  // strategy kind, options, optimizer, seed, timing flag
  TaskSpec task;
  ExperimentSpec experiment;
  GuideSpec guide;
  OutputSpec output;

  bool operator==(const RunConfig&) const = default;
};

/// Every problem found in a config file, in file order.
class ConfigError : public Error {
 public:
  explicit ConfigError(std::vector<std::string> errors);
  const std::vector<std::string>& errors() const noexcept { return errors_; }

 private:
  std::vector<std::string> errors_;
};

/// Parses the INI-style text documented in the README. Throws ConfigError
/// listing every error.
RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::string& path);

/// Semantic checks on an already-built config; empty when valid.
std::vector<std::string> validate_config(const RunConfig& config);

/// Canonical text form; parse_config(serialize_config(c)) == c.
std::string serialize_config(const RunConfig& config);

/// One key of the canonical form with its value kind, used for the
/// config echo in reports.
struct ConfigEntry {
  enum class Kind { kText, kInteger, kReal, kBoolean, kIntegerList, kTextList, kRealList };
  std::string section;
  std::string key;
  std::string value;  // canonical text
  Kind kind = Kind::kText;
};

std::vector<ConfigEntry> config_entries(const RunConfig& config);

/// The guide backbone described by `config.guide`, or nullopt when self-guided.
std::optional<BackboneSpec> guide_backbone_spec(const RunConfig& config);

}  // namespace unipt
