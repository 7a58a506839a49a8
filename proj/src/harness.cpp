// Copyright 2026 The UniPT Authors.
// SPDX-License-Identifier: Apache-2.0

#include "unipt/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "unipt/error.hpp"

namespace unipt {
namespace {

std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

// Loss of one prediction (1 x T) on the tape; averaged over outputs for
// squared error so that the noise floor is noise^2.
Tensor sample_loss(Tape& tape, const Tensor& pred, const Tensor& target, LossKind loss) {
  if (loss == LossKind::kCrossEntropy) {
    const std::size_t label = argmax(target.values());
    return tape.cross_entropy(pred, std::span<const std::size_t>(&label, 1));
  }
  const Tensor diff = tape.sub(pred, target);
  return tape.scale(tape.sum(tape.mul(diff, diff)), 1.0 / static_cast<double>(target.size()));
}

Tensor correlate_rows(const Tensor& x, double rho, Rng& rng) {
  const std::size_t rows = x.rows(), cols = x.cols();
  const auto shared = rng.normal(cols, 1.0);
  const double a = std::sqrt(1.0 - rho), b = std::sqrt(rho);
  auto v = x.values();
  std::vector<double> out(v.size());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = a * v[r * cols + c] + b * shared[c];
  return Tensor(x.shape(), std::move(out), TensorOptions{false, false, x.category()});
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(9);
  os << v;
  return os.str();
}

const StrategyReport* find_kind(const std::vector<StrategyReport>& rows, StrategyKind kind) {
  for (const auto& r : rows) {
    if (r.kind == kind && r.label == to_string(kind)) return &r;
  }
  return nullptr;
}

}  // namespace

std::string_view to_string(LossKind kind) {
  return kind == LossKind::kCrossEntropy ? "cross_entropy" : "squared_error";
}

LossKind parse_loss_kind(std::string_view name) {
  if (name == "squared_error") return LossKind::kSquaredError;
  if (name == "cross_entropy") return LossKind::kCrossEntropy;
  throw Error(ErrorCode::kConfig, "unknown loss kind '" + std::string(name) + "'");
}

SyntheticTask make_mid_layer_task(std::shared_ptr<const Backbone> backbone, const TaskSpec& spec) {
  if (!backbone) throw Error(ErrorCode::kInvalidArgument, "task needs a backbone");
  const auto dims = backbone->tap_dims();
  const std::size_t n = dims.size() - 1;
  if (spec.layer >= n) {
    throw Error(ErrorCode::kInvalidArgument, "task layer " + std::to_string(spec.layer) +
                                                 " out of range 0.." + std::to_string(n - 1));
  }
  if (spec.train_size == 0 || spec.val_size == 0) {
    throw Error(ErrorCode::kInvalidArgument, "task needs non-empty train and validation sets");
  }
  if (spec.target_dim == 0) throw Error(ErrorCode::kInvalidArgument, "target dimension must be positive");
  if (!(spec.token_correlation >= 0.0 && spec.token_correlation <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "token correlation must lie in [0, 1]");
  }
  if (!(spec.noise >= 0.0) || !std::isfinite(spec.noise)) {
    throw Error(ErrorCode::kInvalidArgument, "noise must be finite and non-negative");
  }

  SyntheticTask task;
  task.spec = spec;
  task.backbone = backbone;
  Rng rng(spec.seed);
  const std::size_t width = dims[spec.layer];
  const std::size_t t = spec.target_dim;
  task.readout = Tensor({width, t}, rng.normal(width * t, 1.0 / std::sqrt(static_cast<double>(width))));

  const std::size_t total = spec.train_size + spec.val_size;
  std::vector<Sample> samples(total);
  std::vector<double> signal(total * t, 0.0);
  Tape tape;
  for (std::size_t s = 0; s < total; ++s) {
    samples[s].inputs = backbone->sample_inputs(rng);
    for (auto& x : samples[s].inputs) x = correlate_rows(x, spec.token_correlation, rng);
    tape.reset();
    samples[s].taps = backbone->taps(tape, samples[s].inputs);
    const Tensor& tap = samples[s].taps.layers[spec.layer];
    const std::size_t k = tap.rows();
    auto tv = tap.values();
    auto rv = task.readout.values();
    for (std::size_t j = 0; j < width; ++j) {
      double m = 0.0;
      for (std::size_t r = 0; r < k; ++r) m += tv[r * width + j];
      m /= static_cast<double>(k);
      for (std::size_t o = 0; o < t; ++o) signal[s * t + o] += m * rv[j * t + o];
    }
  }
  for (std::size_t o = 0; o < t; ++o) {
    double mean = 0.0, sq = 0.0;
    for (std::size_t s = 0; s < total; ++s) mean += signal[s * t + o];
    mean /= static_cast<double>(total);
    for (std::size_t s = 0; s < total; ++s) sq += std::pow(signal[s * t + o] - mean, 2);
    const double sd = std::sqrt(sq / static_cast<double>(total));
    for (std::size_t s = 0; s < total; ++s) {
      signal[s * t + o] = sd > 0.0 ? (signal[s * t + o] - mean) / sd : 0.0;
    }
  }
  for (std::size_t s = 0; s < total; ++s) {
    std::vector<double> y(signal.begin() + static_cast<std::ptrdiff_t>(s * t),
                          signal.begin() + static_cast<std::ptrdiff_t>((s + 1) * t));
    const auto noise = rng.normal(t, spec.noise);
    for (std::size_t o = 0; o < t; ++o) y[o] += noise[o];
    if (spec.loss == LossKind::kCrossEntropy) {
      const std::size_t label = argmax(y);
      std::fill(y.begin(), y.end(), 0.0);
      y[label] = 1.0;
    }
    samples[s].target = Tensor({1, t}, std::move(y));
  }
  task.train.assign(samples.begin(), samples.begin() + static_cast<std::ptrdiff_t>(spec.train_size));
  task.val.assign(samples.begin() + static_cast<std::ptrdiff_t>(spec.train_size), samples.end());
  return task;
}

void attach_guidance(SyntheticTask& task, const Backbone* guide) {
  Tape tape;
  for (auto* set : {&task.train, &task.val}) {
    for (auto& s : *set) {
      if (!guide) {
        s.guide = s.taps.output();
        continue;
      }
      tape.reset();
      s.guide = guide->taps(tape, s.inputs).output();
    }
  }
}

std::size_t LedgerSnapshot::at(const std::string& category) const {
  auto it = bytes.find(category);
  return it == bytes.end() ? 0 : it->second;
}

double evaluate(const Strategy& strategy, std::span<const Sample> samples, LossKind loss) {
  if (samples.empty()) return 0.0;
  Tape tape;
  InferenceScope frozen(tape);
  double total = 0.0;
  for (const auto& s : samples) {
    total += sample_loss(tape, strategy.predict(tape, s), s.target, loss).item();
  }
  return total / static_cast<double>(samples.size());
}

StrategyReport train_with_lr(const SyntheticTask& task, const Strategy& prototype,
                             const TrainRun& run, double lr) {
  const auto& opt = run.optimizer;
  if (opt.batch == 0) throw Error(ErrorCode::kInvalidArgument, "batch size must be positive");
  if (!(lr > 0.0) || !std::isfinite(lr)) {
    throw Error(ErrorCode::kInvalidArgument, "step size must be positive, got " + fmt(lr));
  }
  if (task.train.empty()) throw Error(ErrorCode::kInvalidArgument, "empty training set");
  const auto start = std::chrono::steady_clock::now();
  const LossKind loss_kind = task.spec.loss;

  std::unique_ptr<Strategy> strategy = prototype.clone();
  StrategyReport report;
  report.label = strategy->label();
  report.kind = strategy->kind();
  report.reduction = run.options.reduction;
  report.lr = lr;
  report.trainable_params = strategy->trainable_parameters();

  // Data order depends only on the run seed, so every strategy in a
  // comparison sees the same batches.
  std::mt19937_64 order_rng(run.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(task.train.size());
  std::size_t cursor = order.size();
  auto next_batch = [&]() {
    std::vector<std::size_t> batch;
    while (batch.size() < std::min(opt.batch, order.size())) {
      if (cursor == order.size()) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), order_rng);
        cursor = 0;
      }
      batch.push_back(order[cursor++]);
    }
    return batch;
  };

  std::span<const Sample> train_probe(task.train);
  if (opt.train_eval_size && opt.train_eval_size < train_probe.size()) {
    train_probe = train_probe.first(opt.train_eval_size);
  }
  auto record = [&](std::size_t step) {
    TracePoint p{step, evaluate(*strategy, train_probe, loss_kind),
                 evaluate(*strategy, task.val, loss_kind)};
    report.trace.push_back(p);
    return p;
  };

  const TracePoint first = record(0);
  report.initial_train_loss = first.train_loss;
  report.initial_val_loss = first.val_loss;

  Tape tape;
  auto forward = [&](const std::vector<std::size_t>& batch) {
    tape.reset();
    Tensor total;
    for (auto idx : batch) {
      const Sample& s = task.train[idx];
      const Tensor l = sample_loss(tape, strategy->predict(tape, s), s.target, loss_kind);
      total = total.defined() ? tape.add(total, l) : l;
    }
    const Tensor mean = tape.scale(total, 1.0 / static_cast<double>(batch.size()));
    const auto& ledger = tape.ledger();
    if (report.memory.bytes.empty() || ledger.total_bytes() > report.memory.peak_total) {
      report.memory.peak_total = ledger.total_bytes();
      report.memory.bytes = ledger.by_category();
    }
    return mean;
  };

  // Without steps the ledger snapshot comes from one forward pass.
  if (opt.steps == 0) forward(next_batch());

  for (std::size_t step = 1; step <= opt.steps; ++step) {
    Tensor loss;
    try {
      loss = forward(next_batch());
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kNonFinite) throw;
      throw Error(ErrorCode::kDivergence, "training diverged at step " + std::to_string(step) +
                                              " (lr " + fmt(lr) + "): " + e.what());
    }
    if (!std::isfinite(loss.item())) {
      throw Error(ErrorCode::kDivergence, "training diverged at step " + std::to_string(step) +
                                              " (lr " + fmt(lr) + ")");
    }
    const GradMap grads = tape.backward(loss);
    strategy->visit([&](const std::string&, Tensor& p) {
      if (!p.requires_grad() || !grads.contains(p)) return;
      auto g = grads.values(p);
      auto v = p.values();
      std::vector<double> next(v.begin(), v.end());
      for (std::size_t i = 0; i < next.size(); ++i) next[i] -= lr * g[i];
      p = p.with_values(std::move(next));
    });
    if (step == opt.steps || (opt.eval_every && step % opt.eval_every == 0)) {
      const TracePoint p = record(step);
      if (!std::isfinite(p.train_loss) || !std::isfinite(p.val_loss)) {
        throw Error(ErrorCode::kDivergence, "training diverged at step " + std::to_string(step) +
                                                " (lr " + fmt(lr) + ")");
      }
    }
  }

  report.final_train_loss = report.trace.back().train_loss;
  report.final_val_loss = report.trace.back().val_loss;
  report.best_val_loss = report.trace.front().val_loss;
  for (const auto& p : report.trace) report.best_val_loss = std::min(report.best_val_loss, p.val_loss);
  report.lr_results = {{lr, report.final_val_loss}};
  if (run.record_timing) {
    report.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
  return report;
}

StrategyReport train(const SyntheticTask& task, const Strategy& prototype, const TrainRun& run) {
  std::vector<double> grid = run.optimizer.lr_grid;
  if (grid.empty()) grid = {1.0};
  StrategyReport best;
  std::vector<LrResult> results;
  double seconds = 0.0;
  bool have = false;
  for (double m : grid) {
    const double lr = run.optimizer.lr * m;
    StrategyReport r;
    try {
      r = train_with_lr(task, prototype, run, lr);
    } catch (const Error& e) {
      // A diverging grid point is a result, not a failure, unless every
      // point diverges.
      if (e.code() != ErrorCode::kDivergence) throw;
      results.push_back({lr, std::numeric_limits<double>::infinity()});
      continue;
    }
    results.push_back({lr, r.final_val_loss});
    seconds += r.wall_clock_seconds;
    if (!have || r.final_val_loss < best.final_val_loss) {
      best = std::move(r);
      have = true;
    }
  }
  if (!have) {
    throw Error(ErrorCode::kDivergence, "training diverged at every step size of the grid for " +
                                            std::string(to_string(run.kind)));
  }
  best.lr_results = std::move(results);
  best.wall_clock_seconds = seconds;
  return best;
}

StrategyReport train(const SyntheticTask& task, const TrainRun& run) {
  const auto prototype = make_strategy(run.kind, task.backbone, run.options,
                                       task.spec.target_dim, run.seed);
  return train(task, *prototype, run);
}

bool Comparison::all_passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
}

const StrategyReport* Comparison::find(const std::string& label) const {
  for (const auto& r : rows) {
    if (r.label == label) return &r;
  }
  return nullptr;
}

std::vector<CheckResult> comparison_checks(const std::vector<StrategyReport>& rows) {
  std::vector<CheckResult> checks;
  for (const auto& r : rows) {
    const std::size_t b = r.memory.at(kCategoryBackbone);
    const bool frozen = is_frozen_backbone_kind(r.kind);
    checks.push_back({"frozen_backbone:" + r.label, frozen ? b == 0 : b > 0,
                      "backbone bytes " + std::to_string(b)});
  }
  const auto* unipt = find_kind(rows, StrategyKind::kUniPT);
  const auto* lst = find_kind(rows, StrategyKind::kLST);
  const auto* adapter = find_kind(rows, StrategyKind::kAdapter);
  const auto* full = find_kind(rows, StrategyKind::kFullFT);
  if (unipt && lst && adapter && full) {
    const auto u = unipt->memory.peak_total, l = lst->memory.peak_total,
               a = adapter->memory.peak_total, f = full->memory.peak_total;
    checks.push_back({"memory_order", u < l && l < a && a <= f,
                      "UniPT " + std::to_string(u) + " < LST " + std::to_string(l) +
                          " < Adapter " + std::to_string(a) + " <= FullFT " + std::to_string(f)});
  }
  if (unipt && full) {
    checks.push_back({"params_fullft_gt_unipt", full->trainable_params > unipt->trainable_params,
                      "FullFT " + std::to_string(full->trainable_params) + " vs UniPT " +
                          std::to_string(unipt->trainable_params)});
  }
  return checks;
}

Comparison compare_strategies(const SyntheticTask& task, const std::vector<StrategyKind>& kinds,
                              const TrainRun& base) {
  if (kinds.empty()) throw Error(ErrorCode::kInvalidArgument, "comparison needs at least one kind");
  Comparison c;
  for (auto kind : kinds) {
    TrainRun run = base;
    run.kind = kind;
    c.rows.push_back(train(task, run));
  }
  c.checks = comparison_checks(c.rows);
  return c;
}

Comparison sweep_reduction_factor(const SyntheticTask& task, const TrainRun& base,
                                  const std::vector<std::size_t>& reductions) {
  if (reductions.empty()) throw Error(ErrorCode::kInvalidArgument, "sweep needs reduction factors");
  const std::size_t d = task.backbone->output_dim();
  for (auto r : reductions) {
    if (r == 0 || d % r != 0) {
      throw Error(ErrorCode::kInvalidArgument, "reduction factor " + std::to_string(r) +
                                                   " does not divide output dimension " +
                                                   std::to_string(d));
    }
  }
  Comparison c;
  for (auto r : reductions) {
    TrainRun run = base;
    run.options.reduction = r;
    c.rows.push_back(train(task, run));
  }
  std::vector<const StrategyReport*> by_r;
  for (const auto& row : c.rows) by_r.push_back(&row);
  std::sort(by_r.begin(), by_r.end(),
            [](const auto* a, const auto* b) { return a->reduction > b->reduction; });
  bool bytes_up = true, params_up = true;
  std::string detail;
  for (std::size_t i = 0; i < by_r.size(); ++i) {
    if (i) {
      bytes_up = bytes_up && by_r[i]->memory.peak_total > by_r[i - 1]->memory.peak_total;
      params_up = params_up && by_r[i]->trainable_params > by_r[i - 1]->trainable_params;
      detail += ", ";
    }
    detail += "r=" + std::to_string(by_r[i]->reduction) + ":" +
              std::to_string(by_r[i]->memory.peak_total);
  }
  c.checks.push_back({"bytes_increase_as_r_decreases", bytes_up, detail});
  c.checks.push_back({"params_increase_as_r_decreases", params_up, ""});
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (const auto& row : c.rows) {
    lo = std::min(lo, row.final_val_loss);
    hi = std::max(hi, row.final_val_loss);
  }
  c.checks.push_back({"val_loss_spread_within_2x", hi <= 2.0 * lo,
                      "best " + fmt(lo) + ", worst " + fmt(hi)});
  for (auto& chk : comparison_checks(c.rows)) c.checks.push_back(std::move(chk));
  return c;
}

Comparison stronger_guidance_experiment(const SyntheticTask& task, const Backbone* guide,
                                        const TrainRun& base) {
  if (task.backbone->kind() != BackboneKind::kTransformer) {
    throw Error(ErrorCode::kInvalidArgument, "guidance experiment needs a transformer backbone");
  }
  if (guide && guide->kind() != BackboneKind::kTransformer) {
    throw Error(ErrorCode::kInvalidArgument, "guide must be a transformer");
  }
  if (guide && guide->spec().transformer.token_dim() != task.backbone->spec().transformer.token_dim()) {
    throw Error(ErrorCode::kInvalidArgument, "guide does not share the backbone's input space");
  }
  SyntheticTask guided = task;
  attach_guidance(guided, guide);
  TrainRun run = base;
  run.kind = StrategyKind::kUniPT;
  Comparison c;
  c.rows.push_back(train(task, run));
  const auto proto = make_guided_unipt(task.backbone, run.options, task.spec.target_dim,
                                       guide ? guide->output_dim() : 0, run.seed);
  c.rows.push_back(train(guided, *proto, run));
  for (auto& chk : comparison_checks(c.rows)) c.checks.push_back(std::move(chk));
  return c;
}

}  // namespace unipt
