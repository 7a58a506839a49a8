// Copyright 2026 The UniPT Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "unipt/backbones.hpp"
#include "unipt/baselines.hpp"

namespace unipt {

enum class LossKind { kSquaredError, kCrossEntropy };

std::string_view to_string(LossKind kind);
LossKind parse_loss_kind(std::string_view name);

struct TaskSpec {
  std::size_t layer = 1;  // tap index the target reads
  double noise = 0.1;
  std::size_t train_size = 256;
  std::size_t val_size = 128;
  std::size_t target_dim = 4;
  // Share of each input row's variance that is common to all rows of a
  // sample. Token means then vary between samples instead of averaging out.
  double token_correlation = 0.5;
  std::uint64_t seed = 7;
  LossKind loss = LossKind::kSquaredError;

  bool operator==(const TaskSpec&) const = default;
};

/// Inputs with cached frozen taps and targets. For squared error the target
/// is a fixed random readout of the token-mean of tap `layer`, standardised
/// per output over the whole sample set, plus N(0, noise^2). For
/// cross-entropy the target is the one-hot argmax of the noisy readout.
struct SyntheticTask {
  TaskSpec spec;
  std::shared_ptr<const Backbone> backbone;
  std::vector<Sample> train;
  std::vector<Sample> val;
  Tensor readout;  // D_layer x T

  /// Bayes-optimal validation loss for squared error: noise^2.
  double noise_floor() const { return spec.noise * spec.noise; }
};

SyntheticTask make_mid_layer_task(std::shared_ptr<const Backbone> backbone, const TaskSpec& spec);

/// Fills `Sample::guide` with the guide's final output, or with the
/// backbone's own final tap when `guide` is null.
void attach_guidance(SyntheticTask& task, const Backbone* guide);

struct OptimizerSpec {
  double lr = 0.05;
  std::size_t steps = 2000;
  std::size_t batch = 8;
  std::vector<double> lr_grid{20.0, 10.0, 1.0};  // multipliers of lr; empty means {1}
  std::size_t eval_every = 250;
  // Trace train losses use the first `train_eval_size` training samples;
  // 0 means all of them.
  std::size_t train_eval_size = 256;

  bool operator==(const OptimizerSpec&) const = default;
};

struct TrainRun {
  StrategyKind kind = StrategyKind::kUniPT;
  StrategyOptions options;
  OptimizerSpec optimizer;
  std::uint64_t seed = 1;      // parameter init and data order
  bool record_timing = false;  // wall clock makes reports non-reproducible

  bool operator==(const TrainRun&) const = default;
};

struct TracePoint {
  std::size_t step = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;

  bool operator==(const TracePoint&) const = default;
};

/// Retained bytes by category at the step with the largest total.
struct LedgerSnapshot {
  std::map<std::string, std::size_t> bytes;
  std::size_t peak_total = 0;

  std::size_t at(const std::string& category) const;
  bool operator==(const LedgerSnapshot&) const = default;
};

struct LrResult {
  double lr = 0.0;
  double final_val_loss = 0.0;

  bool operator==(const LrResult&) const = default;
};

struct StrategyReport {
  std::string label;
  StrategyKind kind = StrategyKind::kUniPT;
  std::size_t reduction = 0;
  double lr = 0.0;  // the selected step size
  std::size_t trainable_params = 0;
  LedgerSnapshot memory;
  std::vector<TracePoint> trace;
  double initial_train_loss = 0.0;
  double initial_val_loss = 0.0;
  double final_train_loss = 0.0;
  double final_val_loss = 0.0;
  double best_val_loss = 0.0;  // minimum over the trace
  std::vector<LrResult> lr_results;
  double wall_clock_seconds = 0.0;

  bool operator==(const StrategyReport&) const = default;
};

/// Mean loss of `strategy` over `samples`, computed without recording.
double evaluate(const Strategy& strategy, std::span<const Sample> samples, LossKind loss);

/// Trains a fresh clone of `prototype` with one fixed step size.
StrategyReport train_with_lr(const SyntheticTask& task, const Strategy& prototype,
                             const TrainRun& run, double lr);

/// Plain SGD over the learning-rate grid; the report is the run with the
/// lowest final validation loss, with every grid point in `lr_results`.
StrategyReport train(const SyntheticTask& task, const TrainRun& run);
StrategyReport train(const SyntheticTask& task, const Strategy& prototype, const TrainRun& run);

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;

  bool operator==(const CheckResult&) const = default;
};

struct Comparison {
  std::vector<StrategyReport> rows;
  std::vector<CheckResult> checks;

  bool all_passed() const;
  const StrategyReport* find(const std::string& label) const;
};

/// Frozen-backbone and ordering checks over whatever rows are present.
std::vector<CheckResult> comparison_checks(const std::vector<StrategyReport>& rows);

Comparison compare_strategies(const SyntheticTask& task, const std::vector<StrategyKind>& kinds,
                              const TrainRun& base);

/// One report per reduction factor. Checks parameter and byte monotonicity.
Comparison sweep_reduction_factor(const SyntheticTask& task, const TrainRun& base,
                                  const std::vector<std::size_t>& reductions);

/// Baseline UniPT against UniPT guided by `guide`'s final output (null
/// means the backbone guides itself). Exactly two rows.
Comparison stronger_guidance_experiment(const SyntheticTask& task, const Backbone* guide,
                                        const TrainRun& base);

}  // namespace unipt
