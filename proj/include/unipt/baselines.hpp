// Copyright 2026 The UniPT Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "unipt/autodiff.hpp"
#include "unipt/backbones.hpp"
#include "unipt/layers.hpp"
#include "unipt/nn.hpp"

namespace unipt {

enum class StrategyKind {
  kFullFT,
  kPartialDown,
  kPartialUp,
  kAdapter,
  kLST,
  kUniPT,
  kUniPTNoGuidance,
  kUniPTPooling,
  kUniPTGate,
  kUniPTMHSA,
};

std::string_view to_string(StrategyKind kind);
StrategyKind parse_strategy_kind(std::string_view name);
const std::vector<StrategyKind>& all_strategy_kinds();

/// True for kinds that read cached taps and never backpropagate into the
/// backbone.
bool is_frozen_backbone_kind(StrategyKind kind);

struct StrategyOptions {
  std::size_t reduction = 2;
  std::size_t adapter_reduction = 16;      // adapter bottleneck = D / adapter_reduction
  std::vector<std::size_t> lst_kept_layers;  // tap indices 1..N; empty keeps all
  std::size_t partial_up_blocks = 1;
  std::size_t mhsa_heads = 4;
  double init_scale = 0.02;
  InitMode init_mode = InitMode::kFixed;
  double mlp_init_factor = 0.1;
  bool include_embeddings = true;
  ChunkResidual chunk_residual = ChunkResidual::kChunkMean;

  bool operator==(const StrategyOptions&) const = default;
};

/// One example as the strategies see it. `taps` are computed once, inside an
/// inference scope, and reused across steps.
struct Sample {
  std::vector<Tensor> inputs;
  BackboneTaps taps;
  Tensor guide;   // external query for guided runs, K x D'
  Tensor target;  // 1 x T
};

/// A transfer strategy: a feature extractor producing K x D plus a shared
/// task head (per-token linear map, then mean over tokens) giving 1 x T.
class Strategy {
 public:
  virtual ~Strategy() = default;

  StrategyKind kind() const { return kind_; }
  virtual std::string label() const { return std::string(to_string(kind_)); }

  virtual Tensor features(Tape& tape, const Sample& sample) const = 0;
  Tensor predict(Tape& tape, const Sample& sample) const;

  /// Every owned parameter, trainable or not. Training updates only the
  /// ones with requires_grad.
  void visit(const ParamVisitor& fn);
  std::size_t trainable_parameters();

  virtual std::unique_ptr<Strategy> clone() const = 0;

  Linear& task_head() { return task_head_; }

 protected:
  Strategy(StrategyKind kind, std::shared_ptr<const Backbone> backbone, Linear task_head)
      : kind_(kind), backbone_(std::move(backbone)), task_head_(std::move(task_head)) {}

  virtual void visit_own(const ParamVisitor& fn) = 0;

  StrategyKind kind_;
  std::shared_ptr<const Backbone> backbone_;
  Linear task_head_;
};

std::unique_ptr<Strategy> make_strategy(StrategyKind kind, std::shared_ptr<const Backbone> backbone,
                                        const StrategyOptions& options, std::size_t target_dim,
                                        std::uint64_t seed);

/// UniPT whose query role is played by `Sample::guide`. A zero `guide_dim`
/// means self-guidance through the head's own final projection.
std::unique_ptr<Strategy> make_guided_unipt(std::shared_ptr<const Backbone> backbone,
                                            const StrategyOptions& options,
                                            std::size_t target_dim, std::size_t guide_dim,
                                            std::uint64_t seed);

UniPTConfig unipt_config_for(const Backbone& backbone, const StrategyOptions& options);

// ---------------------------------------------------------------------------
// Ablation policies

class TrainablePolicy : public InteractionPolicy {
 public:
  virtual std::unique_ptr<TrainablePolicy> clone() const = 0;
  virtual void visit(const ParamVisitor&) {}
};

/// Each layer interacts with itself instead of with F_N.
class NoGuidancePolicy : public TrainablePolicy {
 public:
  Tensor blend(Tape& tape, const Tensor& query, const Tensor& keys, std::size_t layer,
               const UniPTHead& head) const override;
  std::unique_ptr<TrainablePolicy> clone() const override;
};

/// C_i = 1/N.
class PoolingPolicy : public TrainablePolicy {
 public:
  Tensor weights(Tape& tape, std::span<const Tensor> keys, const Tensor& query,
                 const UniPTHead& head) const override;
  std::unique_ptr<TrainablePolicy> clone() const override;
};

/// C = softmax(logits), input-independent learned logits (init 0).
class GatePolicy : public TrainablePolicy {
 public:
  explicit GatePolicy(std::size_t layers);
  Tensor weights(Tape& tape, std::span<const Tensor> keys, const Tensor& query,
                 const UniPTHead& head) const override;
  std::unique_ptr<TrainablePolicy> clone() const override;
  void visit(const ParamVisitor& fn) override;

  Tensor logits;
};

/// keys + MultiHeadAttention(query, keys), softmax attention per layer.
class MhsaPolicy : public TrainablePolicy {
 public:
  MhsaPolicy(std::size_t layers, std::size_t width, std::size_t heads, double init_scale,
             Rng& rng);
  Tensor blend(Tape& tape, const Tensor& query, const Tensor& keys, std::size_t layer,
               const UniPTHead& head) const override;
  std::unique_ptr<TrainablePolicy> clone() const override;
  void visit(const ParamVisitor& fn) override;

  std::vector<AttentionWeights> attention;
  bool scaled = true;
};

std::unique_ptr<TrainablePolicy> make_policy(StrategyKind kind, std::size_t layers,
                                             std::size_t width, const StrategyOptions& options,
                                             Rng& rng);

// ---------------------------------------------------------------------------
// LST side network

/// s_0 = down_0(h_0); s_i = block_i(g_i down_i(h_i) + (1 - g_i) s_prev) with
/// g_i = sigmoid(gate_i); output up(s_last). CNN taps are pooled to the
/// output grid by chunk means after projection.
struct LstSideNet {
  std::vector<std::size_t> kept;  // tap indices with a side block, ascending
  std::vector<Linear> down;       // one per tap
  std::vector<Tensor> gates;      // one 1x1 logit per kept layer
  std::vector<BlockWeights> blocks;
  Linear up;

  static LstSideNet init(const std::vector<std::size_t>& tap_dims, std::size_t output_dim,
                         std::size_t reduction, std::size_t heads,
                         const std::vector<std::size_t>& kept_layers, InitMode mode,
                         double init_scale, Rng& rng);
  std::size_t parameter_count() const;
  void visit(const ParamVisitor& fn);
};

Tensor lst_forward(Tape& tape, const BackboneTaps& taps, const LstSideNet& side);

/// Mean of `x` rows over each chunk of `grid`, row-major over `output`.
Tensor chunk_mean(Tape& tape, const Tensor& x, Grid grid, Grid output);

// ---------------------------------------------------------------------------
// Adapters

struct AdapterWeights {
  Linear down;
  Linear up;  // zero-initialised

  static AdapterWeights init(std::size_t width, std::size_t bottleneck, InitMode mode,
                             double init_scale, Rng& rng);
  Tensor operator()(Tape& tape, const Tensor& h) const;  // h + up(relu(down(h)))
  void visit(const std::string& prefix, const ParamVisitor& fn);
};

}  // namespace unipt
