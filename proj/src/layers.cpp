// Copyright 2026 The UniPT Authors.
// SPDX-License-Identifier: Apache-2.0

#include "unipt/layers.hpp"

#include "unipt/error.hpp"

namespace unipt {

void UniPTConfig::validate() const {
  if (reduction == 0) throw Error(ErrorCode::kInvalidArgument, "reduction factor must be positive");
  if (output_dim == 0) throw Error(ErrorCode::kInvalidArgument, "output dimension must be positive");
  if (output_dim % reduction != 0) {
    throw Error(ErrorCode::kInvalidArgument,
                "reduction factor " + std::to_string(reduction) +
                    " does not divide output dimension " + std::to_string(output_dim));
  }
  if (tap_dims.size() < 2) {
    throw Error(ErrorCode::kInvalidArgument, "need at least two taps (N >= 1)");
  }
  if (!include_embeddings && tap_dims.size() < 3) {
    throw Error(ErrorCode::kInvalidArgument,
                "excluding the embedding tap needs at least three taps");
  }
  for (std::size_t i = 0; i < tap_dims.size(); ++i) {
    if (tap_dims[i] == 0) {
      throw Error(ErrorCode::kInvalidArgument, "tap " + std::to_string(i) + " has zero width");
    }
  }
  if (!(epsilon > 0.0)) throw Error(ErrorCode::kInvalidArgument, "epsilon must be positive");
}

UniPTHead UniPTHead::init(const UniPTConfig& config, Rng& rng) {
  config.validate();
  const std::size_t d = config.unified_dim();
  const std::size_t D = config.output_dim;
  auto s = [&](std::size_t fan_in) { return init_std(config.init_mode, config.init_scale, fan_in); };
  UniPTHead head;
  head.config = config;
  for (auto dim : config.tap_dims) {
    head.down_proj.push_back(Linear::init(dim, d, s(dim), rng, true, kCategorySide));
  }
  head.w1 = random_parameter({d, D}, s(d) * config.mlp_init_factor, rng, true, kCategorySide);
  head.w2 = random_parameter({D, d}, s(D) * config.mlp_init_factor, rng, true, kCategorySide);
  head.w3 = random_parameter({d, 1}, s(d), rng, true, kCategorySide);
  head.up_proj = Linear::init(d, D, s(d), rng, true, kCategorySide);
  return head;
}

std::size_t UniPTHead::parameter_count() const {
  std::size_t n = w1.size() + w2.size() + w3.size() + up_proj.weight.size() + up_proj.bias.size();
  for (const auto& p : down_proj) n += p.weight.size() + p.bias.size();
  return n;
}

void UniPTHead::visit(const ParamVisitor& fn) {
  for (std::size_t i = 0; i < down_proj.size(); ++i) {
    down_proj[i].visit("down_proj." + std::to_string(i), fn);
  }
  fn("w1", w1);
  fn("w2", w2);
  fn("w3", w3);
  up_proj.visit("up_proj", fn);
}

std::size_t analytic_parameter_count(const UniPTConfig& config) {
  const std::size_t d = config.unified_dim();
  const std::size_t D = config.output_dim;
  std::size_t n = 0;
  for (auto dim : config.tap_dims) n += dim * d + d;
  return n + d * D + D * d + d + d * D + D;
}

ProjectedTaps project_taps(Tape& tape, std::span<const Tensor> taps, const UniPTHead& head) {
  if (taps.size() != head.down_proj.size()) {
    throw Error(ErrorCode::kShapeMismatch, "expected " + std::to_string(head.down_proj.size()) +
                                               " taps, got " + std::to_string(taps.size()));
  }
  ProjectedTaps out;
  out.layers.reserve(taps.size());
  for (std::size_t i = 0; i < taps.size(); ++i) {
    if (taps[i].rank() != 2 || taps[i].cols() != head.down_proj[i].in_features()) {
      throw Error(ErrorCode::kShapeMismatch,
                  "tap " + std::to_string(i) + " has shape " + shape_string(taps[i].shape()) +
                      " but its projection expects width " +
                      std::to_string(head.down_proj[i].in_features()));
    }
    out.layers.push_back(head.down_proj[i](tape, taps[i]));
  }
  return out;
}

Tensor identity_matrix(std::size_t n) {
  std::vector<double> v(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;
  return Tensor({n, n}, std::move(v));
}

Tensor truncated_attention(Tape& tape, const Tensor& query, const Tensor& keys, double epsilon) {
  if (query.cols() != keys.cols()) {
    throw Error(ErrorCode::kShapeMismatch, "interaction width mismatch: query " +
                                               shape_string(query.shape()) + " vs keys " +
                                               shape_string(keys.shape()));
  }
  const Tensor scores = tape.relu(tape.matmul(query, tape.transpose(keys)));
  return tape.matmul(tape.l1_normalize(scores, 1, epsilon), keys);
}

Tensor interaction_matrix(Tape& tape, const Tensor& query, const Tensor& keys, double epsilon) {
  if (query.rank() != 2 || keys.rank() != 2 || query.rows() != keys.rows() ||
      query.cols() != keys.cols()) {
    throw Error(ErrorCode::kShapeMismatch, "interaction expects equal KxD inputs, got query " +
                                               shape_string(query.shape()) + " and keys " +
                                               shape_string(keys.shape()));
  }
  const Tensor scores = tape.relu(tape.matmul(query, tape.transpose(keys)));
  return tape.add(tape.l1_normalize(scores, 1, epsilon), identity_matrix(keys.rows()));
}

Tensor interact(Tape& tape, const Tensor& query, const Tensor& keys, double epsilon) {
  return tape.matmul(interaction_matrix(tape, query, keys, epsilon), keys);
}

Tensor confidence_weights(Tape& tape, std::span<const Tensor> keys, const Tensor& query,
                          const Tensor& w3) {
  if (keys.empty()) throw Error(ErrorCode::kInvalidArgument, "confidence weights need N >= 1");
  const Tensor global_query = tape.mean(query, 0);
  std::vector<Tensor> scores;
  scores.reserve(keys.size());
  for (const auto& k : keys) {
    scores.push_back(tape.matmul(tape.mul(global_query, tape.mean(k, 0)), w3));
  }
  return tape.softmax(tape.concat(scores, 1), 1);
}

Tensor confidence_weights(Tape& tape, const ProjectedTaps& taps, const UniPTHead& head) {
  std::span<const Tensor> all(taps.layers);
  const std::size_t first = head.config.first_key();
  return confidence_weights(tape, all.subspan(first, taps.last_index() - first), taps.last(),
                            head.w3);
}

Tensor aggregate(Tape& tape, const Tensor& weights, std::span<const Tensor> blended,
                 const Tensor& residual, const UniPTHead& head) {
  if (blended.empty() || weights.size() != blended.size()) {
    throw Error(ErrorCode::kShapeMismatch, "aggregate: " + std::to_string(weights.size()) +
                                               " weights for " + std::to_string(blended.size()) +
                                               " blended layers");
  }
  Tensor mixed;
  for (std::size_t i = 0; i < blended.size(); ++i) {
    Tensor term = tape.scale_by(blended[i], tape.slice(weights, 1, i, i + 1));
    mixed = mixed.defined() ? tape.add(mixed, term) : term;
  }
  const Tensor hidden = tape.relu(tape.matmul(mixed, head.w1));
  return tape.add(tape.matmul(hidden, head.w2), residual);
}

Tensor InteractionPolicy::blend(Tape& tape, const Tensor& query, const Tensor& keys, std::size_t,
                                const UniPTHead& head) const {
  return interact(tape, query, keys, head.config.epsilon);
}

Tensor InteractionPolicy::weights(Tape& tape, std::span<const Tensor> keys, const Tensor& query,
                                  const UniPTHead& head) const {
  return confidence_weights(tape, keys, query, head.w3);
}

Tensor fuse_projected(Tape& tape, std::span<const Tensor> keys, const Tensor& query,
                      const Tensor& residual, const UniPTHead& head,
                      const InteractionPolicy* policy) {
  static const InteractionPolicy kDefault;
  const InteractionPolicy& p = policy ? *policy : kDefault;
  std::vector<Tensor> blended;
  blended.reserve(keys.size());
  for (std::size_t i = 0; i < keys.size(); ++i) {
    blended.push_back(p.blend(tape, query, keys[i], i, head));
  }
  const Tensor c = p.weights(tape, keys, query, head);
  return head.up_proj(tape, aggregate(tape, c, blended, residual, head));
}

Tensor unipt_forward(Tape& tape, std::span<const Tensor> taps, const UniPTHead& head,
                     const InteractionPolicy* policy) {
  const ProjectedTaps f = project_taps(tape, taps, head);
  std::span<const Tensor> all(f.layers);
  const std::size_t first = head.config.first_key();
  return fuse_projected(tape, all.subspan(first, f.last_index() - first), f.last(), f.last(), head,
                        policy);
}

GuidanceProjection GuidanceProjection::init(std::size_t guide_dim, const UniPTConfig& config,
                                            Rng& rng) {
  return {Linear::init(guide_dim, config.unified_dim(),
                       init_std(config.init_mode, config.init_scale, guide_dim), rng, true,
                       kCategorySide)};
}

void GuidanceProjection::visit(const std::string& prefix, const ParamVisitor& fn) {
  proj.visit(prefix, fn);
}

Tensor guidance_override(Tape& tape, std::span<const Tensor> taps, const UniPTHead& head,
                         const Tensor& external_query, const GuidanceProjection* projection,
                         const InteractionPolicy* policy) {
  if (taps.empty() || external_query.rows() != taps.back().rows()) {
    throw Error(ErrorCode::kShapeMismatch,
                "external query " + shape_string(external_query.shape()) +
                    " must have as many rows as the taps" +
                    (taps.empty() ? std::string() : " " + shape_string(taps.back().shape())));
  }
  const Linear& qproj = projection ? projection->proj : head.down_proj.back();
  if (external_query.cols() != qproj.in_features()) {
    throw Error(ErrorCode::kShapeMismatch,
                "external query width " + std::to_string(external_query.cols()) +
                    " does not match its projection " + std::to_string(qproj.in_features()));
  }
  const ProjectedTaps f = project_taps(tape, taps, head);
  // Self-guidance through the shared projection is the baseline graph.
  const bool self = !projection && external_query.id() == taps.back().id();
  const Tensor query = self ? f.last() : qproj(tape, external_query);
  std::span<const Tensor> all(f.layers);
  const std::size_t first = head.config.first_key();
  return fuse_projected(tape, all.subspan(first, f.last_index() - first), query, f.last(), head,
                        policy);
}

}  // namespace unipt
