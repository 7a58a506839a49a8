// Copyright 2026 The UniPT Authors.
// SPDX-License-Identifier: Apache-2.0

#include "unipt/nn.hpp"

#include <cmath>

#include "unipt/error.hpp"

namespace unipt {

std::vector<double> Rng::normal(std::size_t n, double stddev) {
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<double> out(n);
  for (auto& v : out) v = stddev * dist(engine_);
  return out;
}

double Rng::uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }

Tensor random_parameter(Shape shape, double stddev, Rng& rng, bool trainable,
                        const std::string& category) {
  const auto n = numel(shape);
  return Tensor::parameter(std::move(shape), rng.normal(n, stddev), trainable, category);
}

Linear Linear::init(std::size_t in, std::size_t out, double stddev, Rng& rng, bool trainable,
                    const std::string& category, bool with_bias) {
  Linear l;
  l.weight = random_parameter({in, out}, stddev, rng, trainable, category);
  if (with_bias) {
    l.bias = Tensor::parameter({1, out}, std::vector<double>(out, 0.0), trainable, category);
  }
  return l;
}

Tensor Linear::operator()(Tape& tape, const Tensor& x) const {
  Tensor y = tape.matmul(x, weight);
  return bias.defined() ? tape.add_row(y, bias) : y;
}

void Linear::visit(const std::string& prefix, const ParamVisitor& fn) {
  fn(prefix + ".weight", weight);
  if (bias.defined()) fn(prefix + ".bias", bias);
}

LayerNormWeights LayerNormWeights::init(std::size_t width, bool trainable,
                                        const std::string& category) {
  return {Tensor::parameter({1, width}, std::vector<double>(width, 1.0), trainable, category),
          Tensor::parameter({1, width}, std::vector<double>(width, 0.0), trainable, category)};
}

Tensor LayerNormWeights::operator()(Tape& tape, const Tensor& x) const {
  return tape.layer_norm(x, gain, shift, kLayerNormEpsilon);
}

void LayerNormWeights::visit(const std::string& prefix, const ParamVisitor& fn) {
  fn(prefix + ".gain", gain);
  fn(prefix + ".shift", shift);
}

AttentionWeights AttentionWeights::init(std::size_t width, std::size_t heads, double stddev,
                                        Rng& rng, bool trainable, const std::string& category) {
  if (heads == 0 || width % heads != 0) {
    throw Error(ErrorCode::kInvalidArgument, "attention width " + std::to_string(width) +
                                                 " is not divisible by " + std::to_string(heads) +
                                                 " heads");
  }
  AttentionWeights w;
  w.query = Linear::init(width, width, stddev, rng, trainable, category);
  // A key bias adds the same amount to every score in a row, which softmax
  // cancels, so keys carry no bias.
  w.key = Linear::init(width, width, stddev, rng, trainable, category, false);
  w.value = Linear::init(width, width, stddev, rng, trainable, category);
  w.out = Linear::init(width, width, stddev, rng, trainable, category);
  w.heads = heads;
  return w;
}

void AttentionWeights::visit(const std::string& prefix, const ParamVisitor& fn) {
  query.visit(prefix + ".query", fn);
  key.visit(prefix + ".key", fn);
  value.visit(prefix + ".value", fn);
  out.visit(prefix + ".out", fn);
}

Tensor multi_head_attention(Tape& tape, const AttentionWeights& w, const Tensor& queries,
                            const Tensor& memory, bool scaled) {
  const Tensor q = w.query(tape, queries);
  const Tensor k = w.key(tape, memory);
  const Tensor v = w.value(tape, memory);
  const std::size_t width = q.cols();
  const std::size_t head_dim = width / w.heads;
  const double scale = scaled ? 1.0 / std::sqrt(static_cast<double>(head_dim)) : 1.0;
  std::vector<Tensor> heads;
  heads.reserve(w.heads);
  for (std::size_t h = 0; h < w.heads; ++h) {
    const std::size_t b = h * head_dim, e = b + head_dim;
    Tensor qh = w.heads == 1 ? q : tape.slice(q, 1, b, e);
    Tensor kh = w.heads == 1 ? k : tape.slice(k, 1, b, e);
    Tensor vh = w.heads == 1 ? v : tape.slice(v, 1, b, e);
    Tensor scores = tape.matmul(qh, tape.transpose(kh));
    if (scaled) scores = tape.scale(scores, scale);
    heads.push_back(tape.matmul(tape.softmax(scores, 1), vh));
  }
  Tensor merged = w.heads == 1 ? heads.front() : tape.concat(heads, 1);
  return w.out(tape, merged);
}

BlockWeights BlockWeights::init(std::size_t width, std::size_t heads, std::size_t mlp_ratio,
                                double stddev_scale, bool cross, Rng& rng, bool trainable,
                                const std::string& category) {
  const double s_in = stddev_scale / std::sqrt(static_cast<double>(width));
  const double s_hidden = stddev_scale / std::sqrt(static_cast<double>(width * mlp_ratio));
  BlockWeights w;
  w.norm1 = LayerNormWeights::init(width, trainable, category);
  w.self_attn = AttentionWeights::init(width, heads, s_in, rng, trainable, category);
  w.has_cross = cross;
  if (cross) {
    w.norm_cross = LayerNormWeights::init(width, trainable, category);
    w.cross_attn = AttentionWeights::init(width, heads, s_in, rng, trainable, category);
  }
  w.norm2 = LayerNormWeights::init(width, trainable, category);
  w.fc1 = Linear::init(width, width * mlp_ratio, s_in, rng, trainable, category);
  w.fc2 = Linear::init(width * mlp_ratio, width, s_hidden, rng, trainable, category);
  return w;
}

void BlockWeights::visit(const std::string& prefix, const ParamVisitor& fn) {
  norm1.visit(prefix + ".norm1", fn);
  self_attn.visit(prefix + ".self_attn", fn);
  if (has_cross) {
    norm_cross.visit(prefix + ".norm_cross", fn);
    cross_attn.visit(prefix + ".cross_attn", fn);
  }
  norm2.visit(prefix + ".norm2", fn);
  fc1.visit(prefix + ".fc1", fn);
  fc2.visit(prefix + ".fc2", fn);
}

Tensor transformer_block(Tape& tape, const BlockWeights& w, const Tensor& h, const Tensor* memory) {
  const Tensor n1 = w.norm1(tape, h);
  Tensor x = tape.add(h, multi_head_attention(tape, w.self_attn, n1, n1));
  if (w.has_cross) {
    if (!memory) throw Error(ErrorCode::kInvalidArgument, "decoder block needs encoder memory");
    if (memory->cols() != x.cols()) {
      throw Error(ErrorCode::kShapeMismatch, "cross-attention memory " +
                                                 shape_string(memory->shape()) + " vs state " +
                                                 shape_string(x.shape()));
    }
    x = tape.add(x, multi_head_attention(tape, w.cross_attn, w.norm_cross(tape, x), *memory));
  }
  const Tensor hidden = tape.relu(w.fc1(tape, w.norm2(tape, x)));
  return tape.add(x, w.fc2(tape, hidden));
}

void set_trainable(const std::function<void(const ParamVisitor&)>& visit_all, bool trainable) {
  visit_all([trainable](const std::string&, Tensor& p) { p = p.as_parameter(trainable); });
}

}  // namespace unipt
