// Copyright 2026 The UniPT Authors.
// SPDX-License-Identifier: Apache-2.0

#include "unipt/backbones.hpp"

#include <cmath>

#include "unipt/error.hpp"

namespace unipt {
namespace {

std::vector<Tensor> as_tap_leaves(const std::vector<Tensor>& ts) {
  std::vector<Tensor> out;
  out.reserve(ts.size());
  for (const auto& t : ts) out.push_back(t.as_leaf(kCategoryTap));
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Transformer

TransformerWeights TransformerWeights::init(std::size_t in_dim, std::size_t width,
                                            std::size_t depth, std::size_t heads,
                                            std::size_t mlp_ratio, double mixing, bool cross,
                                            Rng& rng) {
  if (depth == 0) throw Error(ErrorCode::kInvalidArgument, "transformer depth must be >= 1");
  TransformerWeights w;
  w.embed = Linear::init(in_dim, width, 1.0 / std::sqrt(static_cast<double>(in_dim)), rng, false,
                         kCategoryBackbone);
  for (std::size_t i = 0; i < depth; ++i) {
    w.blocks.push_back(
        BlockWeights::init(width, heads, mlp_ratio, mixing, cross, rng, false, kCategoryBackbone));
  }
  w.final_norm = LayerNormWeights::init(width, false, kCategoryBackbone);
  return w;
}

void TransformerWeights::visit(const std::string& prefix, const ParamVisitor& fn) {
  embed.visit(prefix + "embed", fn);
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    blocks[i].visit(prefix + "blocks." + std::to_string(i), fn);
  }
  final_norm.visit(prefix + "final_norm", fn);
}

BackboneTaps run_transformer(Tape& tape, const TransformerWeights& w, const Tensor& tokens,
                             const Tensor* memory, int stack, const BlockHook& hook) {
  if (tokens.rank() != 2 || tokens.cols() != w.embed.in_features()) {
    throw Error(ErrorCode::kShapeMismatch,
                "transformer input " + shape_string(tokens.shape()) + " does not match width " +
                    std::to_string(w.embed.in_features()));
  }
  BackboneTaps taps;
  Tensor h = w.embed(tape, tokens);
  taps.layers.push_back(h);
  for (std::size_t i = 0; i < w.blocks.size(); ++i) {
    h = transformer_block(tape, w.blocks[i], h, memory);
    if (hook) h = hook(tape, stack, i, h);
    if (i + 1 < w.blocks.size()) taps.layers.push_back(h);
  }
  taps.layers.push_back(w.final_norm(tape, h));
  return taps;
}

ToyTransformer::ToyTransformer(const TransformerSpec& spec) : spec_(spec) {
  Rng rng(spec.seed);
  weights_ = TransformerWeights::init(spec.token_dim(), spec.dim, spec.depth, spec.heads, spec.mlp_ratio,
                                      spec.mixing, false, rng);
}

BackboneTaps ToyTransformer::forward(Tape& tape, const Tensor& tokens) const {
  InferenceScope frozen(tape);
  CategoryScope cat(tape, kCategoryBackbone);
  BackboneTaps taps = run_transformer(tape, weights_, tokens);
  taps.layers = as_tap_leaves(taps.layers);
  return taps;
}

// ---------------------------------------------------------------------------
// CNN

Grid CnnSpec::stage_grid(std::size_t stage) const {
  const std::size_t side = image >> stage;
  return {side, side};
}

void CnnSpec::validate() const {
  if (channels.size() < 2) {
    throw Error(ErrorCode::kInvalidArgument, "CNN needs at least two stages");
  }
  for (auto c : channels) {
    if (c == 0) throw Error(ErrorCode::kInvalidArgument, "CNN channel counts must be positive");
  }
  if (in_channels == 0) throw Error(ErrorCode::kInvalidArgument, "CNN needs input channels");
  const std::size_t factor = std::size_t{1} << (channels.size() - 1);
  if (image == 0 || image % factor != 0) {
    throw Error(ErrorCode::kInvalidArgument,
                "CNN image size " + std::to_string(image) + " is not divisible by " +
                    std::to_string(factor) + " (" + std::to_string(channels.size()) +
                    " stages halve it " + std::to_string(channels.size() - 1) + " times)");
  }
}

CnnWeights CnnWeights::init(const CnnSpec& spec, Rng& rng) {
  spec.validate();
  auto he = [&](std::size_t fan_in) {
    return spec.mixing * std::sqrt(2.0 / static_cast<double>(fan_in));
  };
  CnnWeights w;
  w.stem = Linear::init(spec.in_channels, spec.channels[0], he(spec.in_channels), rng, false,
                        kCategoryBackbone);
  for (std::size_t s = 1; s < spec.channels.size(); ++s) {
    const std::size_t fan_in = 4 * spec.channels[s - 1];
    w.stages.push_back(
        Linear::init(fan_in, spec.channels[s], he(fan_in), rng, false, kCategoryBackbone));
  }
  const std::size_t last = spec.channels.back();
  w.head = Linear::init(last, last, 1.0 / std::sqrt(static_cast<double>(last)), rng, false,
                        kCategoryBackbone);
  return w;
}

void CnnWeights::visit(const std::string& prefix, const ParamVisitor& fn) {
  stem.visit(prefix + "stem", fn);
  for (std::size_t i = 0; i < stages.size(); ++i) {
    stages[i].visit(prefix + "stages." + std::to_string(i), fn);
  }
  head.visit(prefix + "head", fn);
}

Tensor image_to_rows(const Tensor& image) {
  if (image.rank() != 3) {
    throw Error(ErrorCode::kShapeMismatch,
                "expected a C x H x W image, got " + shape_string(image.shape()));
  }
  const std::size_t c = image.shape()[0], h = image.shape()[1], w = image.shape()[2];
  std::vector<double> rows(h * w * c);
  auto v = image.values();
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t p = 0; p < h * w; ++p) rows[p * c + ch] = v[ch * h * w + p];
  return Tensor({h * w, c}, std::move(rows), TensorOptions{false, false, image.category()});
}

std::vector<std::size_t> space_to_depth_order(Grid grid) {
  if (grid.height % 2 || grid.width % 2) {
    throw Error(ErrorCode::kInvalidArgument, "space-to-depth needs an even grid");
  }
  std::vector<std::size_t> order;
  order.reserve(grid.cells());
  for (std::size_t y = 0; y < grid.height; y += 2) {
    for (std::size_t x = 0; x < grid.width; x += 2) {
      for (std::size_t dy = 0; dy < 2; ++dy) {
        for (std::size_t dx = 0; dx < 2; ++dx) order.push_back((y + dy) * grid.width + x + dx);
      }
    }
  }
  return order;
}

BackboneTaps run_cnn(Tape& tape, const CnnWeights& w, const CnnSpec& spec, const Tensor& image_rows,
                     const BlockHook& hook) {
  const Grid input = spec.stage_grid(0);
  if (image_rows.rank() != 2 || image_rows.rows() != input.cells() ||
      image_rows.cols() != spec.in_channels) {
    throw Error(ErrorCode::kShapeMismatch,
                "CNN input rows " + shape_string(image_rows.shape()) + " do not match " +
                    std::to_string(spec.in_channels) + "x" + std::to_string(input.height) + "x" +
                    std::to_string(input.width));
  }
  BackboneTaps taps;
  Tensor x = tape.relu(w.stem(tape, image_rows));
  if (hook) x = hook(tape, 0, 0, x);
  for (std::size_t s = 1; s < spec.stages(); ++s) {
    const Grid grid = spec.stage_grid(s - 1);
    const auto order = space_to_depth_order(grid);
    Tensor grouped = tape.reshape(tape.gather_rows(x, order), {grid.cells() / 4, 4 * x.cols()});
    x = tape.relu(w.stages[s - 1](tape, grouped));
    if (hook) x = hook(tape, 0, s, x);
    taps.layers.push_back(x);
    taps.grids.push_back(spec.stage_grid(s));
  }
  taps.layers.push_back(w.head(tape, x));
  taps.grids.push_back(spec.output_grid());
  return taps;
}

ToyCnn::ToyCnn(const CnnSpec& spec) : spec_(spec) {
  Rng rng(spec.seed);
  weights_ = CnnWeights::init(spec, rng);
}

BackboneTaps ToyCnn::forward(Tape& tape, const Tensor& image) const {
  const Tensor rows = image.rank() == 3 ? image_to_rows(image) : image;
  InferenceScope frozen(tape);
  CategoryScope cat(tape, kCategoryBackbone);
  BackboneTaps taps = run_cnn(tape, weights_, spec_, rows);
  taps.layers = as_tap_leaves(taps.layers);
  return taps;
}

std::vector<std::vector<std::size_t>> chunk_partition(Grid shallow, Grid output) {
  if (output.cells() == 0 || shallow.height % output.height || shallow.width % output.width) {
    throw Error(ErrorCode::kInvalidArgument,
                "shallow grid " + std::to_string(shallow.height) + "x" +
                    std::to_string(shallow.width) + " is not divisible by output grid " +
                    std::to_string(output.height) + "x" + std::to_string(output.width));
  }
  std::vector<std::vector<std::size_t>> chunks(output.cells());
  for (std::size_t y = 0; y < shallow.height; ++y) {
    for (std::size_t x = 0; x < shallow.width; ++x) {
      const std::size_t cy = y * output.height / shallow.height;
      const std::size_t cx = x * output.width / shallow.width;
      chunks[cy * output.width + cx].push_back(y * shallow.width + x);
    }
  }
  return chunks;
}

Tensor chunk_pre_interact(Tape& tape, const Tensor& shallow, Grid shallow_grid,
                          const Tensor& last_proj, Grid output_grid, const Linear& projection,
                          double epsilon, ChunkResidual residual) {
  const auto chunks = chunk_partition(shallow_grid, output_grid);
  if (shallow.rank() != 2 || shallow.rows() != shallow_grid.cells()) {
    throw Error(ErrorCode::kShapeMismatch, "shallow map " + shape_string(shallow.shape()) +
                                               " does not cover its grid");
  }
  if (last_proj.rows() != output_grid.cells()) {
    throw Error(ErrorCode::kShapeMismatch, "projected final map " +
                                               shape_string(last_proj.shape()) +
                                               " does not cover the output grid");
  }
  const Tensor keys_all = projection(tape, shallow);
  std::vector<Tensor> outputs;
  outputs.reserve(chunks.size());
  for (std::size_t p = 0; p < chunks.size(); ++p) {
    const Tensor keys = tape.gather_rows(keys_all, chunks[p]);
    const Tensor query = tape.slice(last_proj, 0, p, p + 1);
    Tensor out = truncated_attention(tape, query, keys, epsilon);
    if (residual == ChunkResidual::kChunkMean) out = tape.add(out, tape.mean(keys, 0));
    outputs.push_back(out);
  }
  return tape.concat(outputs, 0);
}

Tensor cnn_unipt_forward(Tape& tape, const BackboneTaps& taps, const UniPTHead& head,
                         ChunkResidual residual, const InteractionPolicy* policy) {
  if (taps.grids.size() != taps.layers.size()) {
    throw Error(ErrorCode::kInvalidArgument, "CNN taps need one grid per layer");
  }
  if (taps.layers.size() != head.down_proj.size()) {
    throw Error(ErrorCode::kShapeMismatch, "expected " + std::to_string(head.down_proj.size()) +
                                               " taps, got " + std::to_string(taps.layers.size()));
  }
  const std::size_t n = taps.layers.size() - 1;
  for (std::size_t i = 0; i <= n; ++i) {
    if (taps.layers[i].cols() != head.down_proj[i].in_features()) {
      throw Error(ErrorCode::kShapeMismatch,
                  "tap " + std::to_string(i) + " has width " +
                      std::to_string(taps.layers[i].cols()) + " but its projection expects " +
                      std::to_string(head.down_proj[i].in_features()));
    }
  }
  const Tensor last = head.down_proj[n](tape, taps.layers[n]);
  std::vector<Tensor> keys;
  for (std::size_t i = head.config.first_key(); i < n; ++i) {
    keys.push_back(chunk_pre_interact(tape, taps.layers[i], taps.grids[i], last, taps.grids[n],
                                      head.down_proj[i], head.config.epsilon, residual));
  }
  return fuse_projected(tape, keys, last, last, head, policy);
}

// ---------------------------------------------------------------------------
// Encoder-decoder

EncDecWeights EncDecWeights::init(const EncDecSpec& spec, Rng& rng) {
  EncDecWeights w;
  w.encoder = TransformerWeights::init(spec.dim, spec.dim, spec.encoder_depth, spec.heads,
                                       spec.mlp_ratio, spec.mixing, false, rng);
  w.decoder = TransformerWeights::init(spec.dim, spec.dim, spec.decoder_depth, spec.heads,
                                       spec.mlp_ratio, spec.mixing, true, rng);
  return w;
}

void EncDecWeights::visit(const std::string& prefix, const ParamVisitor& fn) {
  encoder.visit(prefix + "encoder.", fn);
  decoder.visit(prefix + "decoder.", fn);
}

BackboneTaps run_encdec(Tape& tape, const EncDecWeights& w, const Tensor& source,
                        const Tensor& target, const BlockHook& hook) {
  BackboneTaps enc = run_transformer(tape, w.encoder, source, nullptr, 0, hook);
  BackboneTaps dec = run_transformer(tape, w.decoder, target, &enc.output(), 1, hook);
  dec.encoder_layers = std::move(enc.layers);
  return dec;
}

ToyEncDec::ToyEncDec(const EncDecSpec& spec) : spec_(spec) {
  Rng rng(spec.seed);
  weights_ = EncDecWeights::init(spec, rng);
}

BackboneTaps ToyEncDec::forward(Tape& tape, const Tensor& source, const Tensor& target) const {
  InferenceScope frozen(tape);
  CategoryScope cat(tape, kCategoryBackbone);
  BackboneTaps taps = run_encdec(tape, weights_, source, target);
  taps.layers = as_tap_leaves(taps.layers);
  taps.encoder_layers = as_tap_leaves(taps.encoder_layers);
  return taps;
}

EncDecHead EncDecHead::init(const UniPTConfig& encoder, const UniPTConfig& decoder, Rng& rng) {
  EncDecHead h;
  h.encoder = UniPTHead::init(encoder, rng);
  h.decoder = UniPTHead::init(decoder, rng);
  h.bridge = Linear::init(encoder.output_dim, decoder.unified_dim(),
                          init_std(decoder.init_mode, decoder.init_scale, encoder.output_dim), rng, true,
                          kCategorySide);
  return h;
}

std::size_t EncDecHead::parameter_count() const {
  return encoder.parameter_count() + decoder.parameter_count() + bridge.weight.size() +
         bridge.bias.size();
}

void EncDecHead::visit(const ParamVisitor& fn) {
  encoder.visit([&](const std::string& name, Tensor& t) { fn("encoder." + name, t); });
  decoder.visit([&](const std::string& name, Tensor& t) { fn("decoder." + name, t); });
  bridge.visit("bridge", fn);
}

Tensor encdec_unipt_forward(Tape& tape, const BackboneTaps& taps, const EncDecHead& head,
                            const InteractionPolicy* policy) {
  const Tensor encoded = unipt_forward(tape, taps.encoder_layers, head.encoder, policy);
  const Tensor memory = head.bridge(tape, encoded);
  const ProjectedTaps dec = project_taps(tape, taps.layers, head.decoder);
  const double eps = head.decoder.config.epsilon;
  std::vector<Tensor> keys;
  for (std::size_t i = head.decoder.config.first_key(); i < dec.last_index(); ++i) {
    keys.push_back(tape.add(dec.layers[i], truncated_attention(tape, dec.layers[i], memory, eps)));
  }
  return fuse_projected(tape, keys, dec.last(), dec.last(), head.decoder, policy);
}

// ---------------------------------------------------------------------------
// Backbone

std::string_view to_string(BackboneKind kind) {
  switch (kind) {
    case BackboneKind::kTransformer: return "transformer";
    case BackboneKind::kCnn: return "cnn";
    case BackboneKind::kEncDec: return "encdec";
  }
  return "unknown";
}

BackboneKind parse_backbone_kind(std::string_view name) {
  if (name == "transformer") return BackboneKind::kTransformer;
  if (name == "cnn") return BackboneKind::kCnn;
  if (name == "encdec") return BackboneKind::kEncDec;
  throw Error(ErrorCode::kConfig, "unknown backbone kind '" + std::string(name) + "'");
}

std::size_t BackboneSpec::output_dim() const {
  switch (kind) {
    case BackboneKind::kTransformer: return transformer.dim;
    case BackboneKind::kCnn: return cnn.channels.empty() ? 0 : cnn.channels.back();
    case BackboneKind::kEncDec: return encdec.dim;
  }
  return 0;
}

std::uint64_t BackboneSpec::seed() const {
  switch (kind) {
    case BackboneKind::kTransformer: return transformer.seed;
    case BackboneKind::kCnn: return cnn.seed;
    case BackboneKind::kEncDec: return encdec.seed;
  }
  return 0;
}

Backbone::Backbone(const BackboneSpec& spec) : spec_(spec) {
  switch (spec.kind) {
    case BackboneKind::kTransformer: transformer_.emplace(spec.transformer); break;
    case BackboneKind::kCnn: cnn_.emplace(spec.cnn); break;
    case BackboneKind::kEncDec: encdec_.emplace(spec.encdec); break;
  }
}

std::vector<std::size_t> Backbone::tap_dims() const {
  switch (spec_.kind) {
    case BackboneKind::kTransformer:
      return std::vector<std::size_t>(spec_.transformer.depth + 1, spec_.transformer.dim);
    case BackboneKind::kCnn: {
      std::vector<std::size_t> dims(spec_.cnn.channels.begin() + 1, spec_.cnn.channels.end());
      dims.push_back(spec_.cnn.channels.back());
      return dims;
    }
    case BackboneKind::kEncDec:
      return std::vector<std::size_t>(spec_.encdec.decoder_depth + 1, spec_.encdec.dim);
  }
  return {};
}

std::vector<std::size_t> Backbone::encoder_tap_dims() const {
  if (spec_.kind != BackboneKind::kEncDec) return {};
  return std::vector<std::size_t>(spec_.encdec.encoder_depth + 1, spec_.encdec.dim);
}

std::vector<Tensor> Backbone::sample_inputs(Rng& rng) const {
  switch (spec_.kind) {
    case BackboneKind::kTransformer: {
      const auto& s = spec_.transformer;
      return {Tensor({s.tokens, s.token_dim()}, rng.normal(s.tokens * s.token_dim(), 1.0))};
    }
    case BackboneKind::kCnn: {
      const auto& s = spec_.cnn;
      const std::size_t cells = s.image * s.image;
      return {Tensor({cells, s.in_channels}, rng.normal(cells * s.in_channels, 1.0))};
    }
    case BackboneKind::kEncDec: {
      const auto& s = spec_.encdec;
      Tensor src({s.source_tokens, s.dim}, rng.normal(s.source_tokens * s.dim, 1.0));
      Tensor tgt({s.target_tokens, s.dim}, rng.normal(s.target_tokens * s.dim, 1.0));
      return {src, tgt};
    }
  }
  return {};
}

BackboneTaps Backbone::taps(Tape& tape, std::span<const Tensor> inputs) const {
  switch (spec_.kind) {
    case BackboneKind::kTransformer:
      if (inputs.size() != 1) throw Error(ErrorCode::kInvalidArgument, "transformer takes 1 input");
      return transformer_->forward(tape, inputs[0]);
    case BackboneKind::kCnn:
      if (inputs.size() != 1) throw Error(ErrorCode::kInvalidArgument, "cnn takes 1 input");
      return cnn_->forward(tape, inputs[0]);
    case BackboneKind::kEncDec:
      if (inputs.size() != 2) throw Error(ErrorCode::kInvalidArgument, "encdec takes 2 inputs");
      return encdec_->forward(tape, inputs[0], inputs[1]);
  }
  return {};
}

const ToyTransformer& Backbone::transformer() const {
  if (!transformer_) throw Error(ErrorCode::kState, "backbone is not a transformer");
  return *transformer_;
}

const ToyCnn& Backbone::cnn() const {
  if (!cnn_) throw Error(ErrorCode::kState, "backbone is not a CNN");
  return *cnn_;
}

const ToyEncDec& Backbone::encdec() const {
  if (!encdec_) throw Error(ErrorCode::kState, "backbone is not an encoder-decoder");
  return *encdec_;
}

std::uint64_t Backbone::weights_hash() const {
  std::uint64_t h = 1469598103934665603ULL;
  ParamVisitor mix = [&h](const std::string&, Tensor& t) {
    h ^= content_hash(t);
    h *= 1099511628211ULL;
  };
  switch (spec_.kind) {
    case BackboneKind::kTransformer: {
      auto w = transformer_->weights();
      w.visit("", mix);
      break;
    }
    case BackboneKind::kCnn: {
      auto w = cnn_->weights();
      w.visit("", mix);
      break;
    }
    case BackboneKind::kEncDec: {
      auto w = encdec_->weights();
      w.visit("", mix);
      break;
    }
  }
  return h;
}

}  // namespace unipt
