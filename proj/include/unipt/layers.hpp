// Copyright 2026 The UniPT Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "unipt/autodiff.hpp"
#include "unipt/nn.hpp"
#include "unipt/tensor.hpp"

namespace unipt {

struct UniPTConfig {
  // Native output width D of the backbone.
  std::size_t output_dim = 64;
  // Reduction factor r; the unified width is d = D / r.
  std::size_t reduction = 2;
  // Native feature width of every tap, F_0 .. F_N. N = tap_dims.size() - 1.
  std::vector<std::size_t> tap_dims;
  double epsilon = 1e-12;
  double init_scale = 0.02;
  InitMode init_mode = InitMode::kFixed;
  // Extra factor on W_1 and W_2 so the MLP branch starts near zero.
  double mlp_init_factor = 0.1;
  // When false, F_0 is left out of interaction and confidence weighting.
  bool include_embeddings = true;

  std::size_t unified_dim() const { return output_dim / reduction; }
  std::size_t last_layer() const { return tap_dims.empty() ? 0 : tap_dims.size() - 1; }
  std::size_t first_key() const { return include_embeddings ? 0 : 1; }
  void validate() const;
};

/// Trainable side network. Parameter names (checkpoint keys):
///   down_proj.<i>.weight  D_i x d     down_proj.<i>.bias  1 x d
///   w1                    d x D       w2                  D x d
///   w3                    d x 1
///   up_proj.weight        d x D       up_proj.bias        1 x D
struct UniPTHead {
  UniPTConfig config;
  std::vector<Linear> down_proj;
  Tensor w1;
  Tensor w2;
  Tensor w3;
  Linear up_proj;

  static UniPTHead init(const UniPTConfig& config, Rng& rng);

  std::size_t parameter_count() const;
  void visit(const ParamVisitor& fn);
};

/// sum_i (D_i d + d) + d D + D d + d + d D + D
std::size_t analytic_parameter_count(const UniPTConfig& config);

struct ProjectedTaps {
  std::vector<Tensor> layers;  // F_0 .. F_N, each K x d

  const Tensor& last() const { return layers.back(); }
  std::size_t last_index() const { return layers.size() - 1; }
};

/// F_i = tap_i W_i + b_i for every tap.
ProjectedTaps project_taps(Tape& tape, std::span<const Tensor> taps, const UniPTHead& head);

/// M = L1Norm_rows(relu(query keys^T)) + I. Requires equal row counts.
Tensor interaction_matrix(Tape& tape, const Tensor& query, const Tensor& keys, double epsilon);

/// Guided interaction: returns M keys with M from interaction_matrix().
Tensor interact(Tape& tape, const Tensor& query, const Tensor& keys, double epsilon);

/// L1Norm_rows(relu(query keys^T)) keys, no identity term. Row counts may
/// differ; used by the chunked and encoder-decoder pre-interactions.
Tensor truncated_attention(Tape& tape, const Tensor& query, const Tensor& keys, double epsilon);

/// softmax_i((mean(query) * mean(keys_i)) w3); returns 1 x n.
Tensor confidence_weights(Tape& tape, std::span<const Tensor> keys, const Tensor& query,
                          const Tensor& w3);
Tensor confidence_weights(Tape& tape, const ProjectedTaps& taps, const UniPTHead& head);

/// relu((sum_i C_i blended_i) W_1) W_2 + residual.
Tensor aggregate(Tape& tape, const Tensor& weights, std::span<const Tensor> blended,
                 const Tensor& residual, const UniPTHead& head);

/// Hooks for swapping the interaction or the layer weighting while keeping
/// the rest of the pipeline. The defaults are the guided interaction and the
/// confidence weighting.
class InteractionPolicy {
 public:
  virtual ~InteractionPolicy() = default;
  virtual Tensor blend(Tape& tape, const Tensor& query, const Tensor& keys, std::size_t layer,
                       const UniPTHead& head) const;
  virtual Tensor weights(Tape& tape, std::span<const Tensor> keys, const Tensor& query,
                         const UniPTHead& head) const;
};

/// Interaction, weighting, aggregation and upsampling over projected
/// features. `query` plays F_N's guidance role, `residual` its value role.
/// Returns K x D.
Tensor fuse_projected(Tape& tape, std::span<const Tensor> keys, const Tensor& query,
                      const Tensor& residual, const UniPTHead& head,
                      const InteractionPolicy* policy = nullptr);

/// Full head over raw taps F_0 .. F_N (each K x D_i). Returns K x D.
Tensor unipt_forward(Tape& tape, std::span<const Tensor> taps, const UniPTHead& head,
                     const InteractionPolicy* policy = nullptr);

struct GuidanceProjection {
  Linear proj;

  static GuidanceProjection init(std::size_t guide_dim, const UniPTConfig& config, Rng& rng);
  void visit(const std::string& prefix, const ParamVisitor& fn);
};

/// Same as unipt_forward, except that the projected external query replaces
/// F_N in the query role of the interaction and of the confidence weights.
/// With `projection == nullptr` the head's own last down-projection is used.
Tensor guidance_override(Tape& tape, std::span<const Tensor> taps, const UniPTHead& head,
                         const Tensor& external_query, const GuidanceProjection* projection,
                         const InteractionPolicy* policy = nullptr);

Tensor identity_matrix(std::size_t n);

}  // namespace unipt
