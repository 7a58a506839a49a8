// Copyright 2026 The UniPT Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "unipt/autodiff.hpp"
#include "unipt/tensor.hpp"

namespace unipt {

/// Seeded generator; all randomness in the library flows through it.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::vector<double> normal(std::size_t n, double stddev);
  double uniform();
  std::uint64_t next() { return engine_(); }
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

using ParamVisitor = std::function<void(const std::string& name, Tensor& param)>;

// kFixed draws side-network weights with a fixed standard deviation;
// kFanIn uses 1/sqrt(fan_in) so every projection starts with unit gain.
enum class InitMode { kFixed, kFanIn };

inline double init_std(InitMode mode, double fixed_std, std::size_t fan_in) {
  return mode == InitMode::kFanIn ? 1.0 / std::sqrt(static_cast<double>(fan_in)) : fixed_std;
}

Tensor random_parameter(Shape shape, double stddev, Rng& rng, bool trainable,
                        const std::string& category);

/// y = x W + b with W stored in x-major (in x out) layout.
struct Linear {
  Tensor weight;
  Tensor bias;  // may be undefined

  static Linear init(std::size_t in, std::size_t out, double stddev, Rng& rng, bool trainable,
                     const std::string& category, bool with_bias = true);

  std::size_t in_features() const { return weight.rows(); }
  std::size_t out_features() const { return weight.cols(); }
  Tensor operator()(Tape& tape, const Tensor& x) const;
  void visit(const std::string& prefix, const ParamVisitor& fn);
};

struct LayerNormWeights {
  Tensor gain;
  Tensor shift;

  static LayerNormWeights init(std::size_t width, bool trainable, const std::string& category);
  Tensor operator()(Tape& tape, const Tensor& x) const;
  void visit(const std::string& prefix, const ParamVisitor& fn);
};

struct AttentionWeights {
  Linear query, key, value, out;
  std::size_t heads = 1;

  static AttentionWeights init(std::size_t width, std::size_t heads, double stddev, Rng& rng,
                               bool trainable, const std::string& category);
  void visit(const std::string& prefix, const ParamVisitor& fn);
};

/// Dot-product attention, softmax over keys, heads split by columns. Scores
/// are divided by sqrt(head width) unless `scaled` is false.
Tensor multi_head_attention(Tape& tape, const AttentionWeights& w, const Tensor& queries,
                            const Tensor& memory, bool scaled = true);

/// Pre-norm block: self-attention, optional cross-attention over `memory`,
/// and a ReLU MLP, each with a residual connection.
struct BlockWeights {
  LayerNormWeights norm1;
  AttentionWeights self_attn;
  bool has_cross = false;
  LayerNormWeights norm_cross;
  AttentionWeights cross_attn;
  LayerNormWeights norm2;
  Linear fc1, fc2;

  static BlockWeights init(std::size_t width, std::size_t heads, std::size_t mlp_ratio,
                           double stddev_scale, bool cross, Rng& rng, bool trainable,
                           const std::string& category);
  void visit(const std::string& prefix, const ParamVisitor& fn);
};

Tensor transformer_block(Tape& tape, const BlockWeights& w, const Tensor& h,
                         const Tensor* memory = nullptr);

/// Replaces every visited parameter by a copy with the given trainable flag.
void set_trainable(const std::function<void(const ParamVisitor&)>& visit_all, bool trainable);

inline constexpr double kLayerNormEpsilon = 1e-5;

}  // namespace unipt
