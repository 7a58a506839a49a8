// Copyright 2026 The UniPT Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "unipt/autodiff.hpp"
#include "unipt/baselines.hpp"
#include "unipt/nn.hpp"

namespace unipt::testing {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst;          // parameter name of the worst entry
  std::size_t checked = 0;    // finite-difference probes compared
  std::size_t skipped = 0;    // probes that straddled a ReLU or L1 kink
  std::size_t tensors = 0;    // trainable parameter tensors visited
};

/// |a - n| / max(|a|, |n|, floor). The floor keeps entries whose true
/// gradient is zero or tiny from dividing roundoff by roundoff.
inline double rel_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Scalar loss of a strategy on one sample: sum(prediction * weights).
/// `kink` receives the tape's kink signature.
inline double probe_loss(const Strategy& s, const Sample& sample, const Tensor& weights,
                         std::uint64_t* kink = nullptr) {
  Tape tape;
  const Tensor loss = tape.sum(tape.mul(s.predict(tape, sample), weights));
  if (kink) *kink = tape.kink_signature();
  return loss.item();
}

/// Compares backward gradients of probe_loss with central differences.
/// For each trainable tensor: `coords` random entries (all entries when the
/// tensor is that small), plus one random direction over the whole tensor.
/// Probes whose +h and -h evaluations land on a different ReLU/L1 piece
/// than the base point are redrawn, up to a limit, then counted as skipped.
inline GradCheckResult check_strategy_gradients(Strategy& strategy, const Sample& sample,
                                                std::uint64_t seed, std::size_t coords = 3,
                                                double h = 1e-5) {
  Rng rng(seed);
  GradCheckResult result;
  const Tensor prediction_shape = [&] {
    Tape tape;
    InferenceScope frozen(tape);
    return strategy.predict(tape, sample);
  }();
  const Tensor weights(prediction_shape.shape(), rng.normal(prediction_shape.size(), 1.0));
  // Central differences lose about eps * sum|pred * w| / h to roundoff, so
  // the floor grows with the magnitude of the summed terms.
  double magnitude = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    magnitude += std::abs(prediction_shape.values()[i] * weights.values()[i]);
  }
  const double noise_floor = 1e-6 * std::max(1.0, magnitude);

  Tape tape;
  std::uint64_t base_kink = 0;
  {
    const Tensor loss = tape.sum(tape.mul(strategy.predict(tape, sample), weights));
    base_kink = tape.kink_signature();
    const GradMap grads = tape.backward(loss);
    std::vector<std::pair<std::string, std::vector<double>>> analytic;
    strategy.visit([&](const std::string& name, Tensor& p) {
      if (!p.requires_grad()) return;
      const auto g = grads.contains(p) ? grads.values(p) : std::span<const double>();
      std::vector<double> v(p.size(), 0.0);
      std::copy(g.begin(), g.end(), v.begin());
      analytic.emplace_back(name, std::move(v));
    });

    for (std::size_t t = 0; t < analytic.size(); ++t) {
      const auto& [name, grad] = analytic[t];
      ++result.tensors;
      auto evaluate = [&](const std::vector<double>& delta, std::uint64_t* kink) {
        std::size_t index = 0;
        Tensor saved;
        strategy.visit([&](const std::string&, Tensor& p) {
          if (!p.requires_grad()) return;
          if (index++ != t) return;
          saved = p;
          auto v = p.values();
          std::vector<double> next(v.begin(), v.end());
          for (std::size_t i = 0; i < next.size(); ++i) next[i] += delta[i];
          p = p.with_values(std::move(next));
        });
        const double f = probe_loss(strategy, sample, weights, kink);
        index = 0;
        strategy.visit([&](const std::string&, Tensor& p) {
          if (!p.requires_grad()) return;
          if (index++ == t) p = saved;
        });
        return f;
      };
      auto probe = [&](const std::vector<double>& dir) {
        std::vector<double> plus(dir.size()), minus(dir.size());
        for (std::size_t i = 0; i < dir.size(); ++i) {
          plus[i] = h * dir[i];
          minus[i] = -h * dir[i];
        }
        std::uint64_t kp = 0, km = 0;
        const double fp = evaluate(plus, &kp);
        const double fm = evaluate(minus, &km);
        if (kp != base_kink || km != base_kink) return false;
        double analytic_dir = 0.0;
        for (std::size_t i = 0; i < dir.size(); ++i) analytic_dir += grad[i] * dir[i];
        const double numeric = (fp - fm) / (2.0 * h);
        const double err = rel_error(analytic_dir, numeric, noise_floor);
        ++result.checked;
        if (err > result.max_rel_error) {
          result.max_rel_error = err;
          result.worst = name;
        }
        return true;
      };

      const std::size_t n = grad.size();
      std::vector<std::size_t> entries;
      if (n <= coords) {
        for (std::size_t i = 0; i < n; ++i) entries.push_back(i);
      } else {
        for (std::size_t i = 0; i < coords; ++i) entries.push_back(rng.next() % n);
      }
      for (auto e : entries) {
        bool ok = false;
        for (std::size_t attempt = 0; attempt < 4 && !ok; ++attempt) {
          std::vector<double> dir(n, 0.0);
          dir[attempt == 0 ? e : rng.next() % n] = 1.0;
          ok = probe(dir);
        }
        if (!ok) ++result.skipped;
      }
      bool ok = false;
      for (std::size_t attempt = 0; attempt < 4 && !ok; ++attempt) {
        auto dir = rng.normal(n, 1.0);
        ok = probe(dir);
      }
      if (!ok) ++result.skipped;
    }
  }
  return result;
}

}  // namespace unipt::testing
