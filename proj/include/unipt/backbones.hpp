// Copyright 2026 The UniPT Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "unipt/autodiff.hpp"
#include "unipt/layers.hpp"
#include "unipt/nn.hpp"
#include "unipt/tensor.hpp"

namespace unipt {

struct Grid {
  std::size_t height = 1;
  std::size_t width = 1;

  std::size_t cells() const { return height * width; }
  bool operator==(const Grid&) const = default;
};

/// Activations exposed by a frozen backbone. Every tensor is a matrix with
/// one row per token (Transformer) or spatial position (CNN, row-major).
struct BackboneTaps {
  std::vector<Tensor> layers;          // F_0 .. F_N; decoder taps for encoder-decoder
  std::vector<Tensor> encoder_layers;  // encoder-decoder only
  std::vector<Grid> grids;             // CNN only, one per entry of `layers`

  const Tensor& output() const { return layers.back(); }
};

// Called after block `index` of `stack` (0 = encoder or single stack,
// 1 = decoder); returns the state passed on. Used to insert adapters.
using BlockHook =
    std::function<Tensor(Tape& tape, int stack, std::size_t index, const Tensor& state)>;

// ---------------------------------------------------------------------------
// Transformer

struct TransformerSpec {
  std::size_t depth = 6;
  std::size_t dim = 64;
  std::size_t heads = 4;
  std::size_t tokens = 16;
  std::size_t input_dim = 0;  // token width fed to the embedding; 0 means `dim`
  std::size_t mlp_ratio = 4;
  double mixing = 1.0;  // std multiplier of block weights (x 1/sqrt(fan_in))
  std::uint64_t seed = 42;

  std::size_t token_dim() const { return input_dim ? input_dim : dim; }
  bool operator==(const TransformerSpec&) const = default;
};

struct TransformerWeights {
  Linear embed;
  std::vector<BlockWeights> blocks;
  LayerNormWeights final_norm;

  static TransformerWeights init(std::size_t in_dim, std::size_t width, std::size_t depth,
                                 std::size_t heads, std::size_t mlp_ratio, double mixing,
                                 bool cross, Rng& rng);
  void visit(const std::string& prefix, const ParamVisitor& fn);
};

/// Runs embed -> blocks -> final norm on the tape in whatever mode the
/// caller has set. Taps: embeddings, outputs of blocks 1..L-1, final output.
/// `memory` is required when the blocks carry cross-attention.
BackboneTaps run_transformer(Tape& tape, const TransformerWeights& w, const Tensor& tokens,
                             const Tensor* memory = nullptr, int stack = 0,
                             const BlockHook& hook = {});

class ToyTransformer {
 public:
  explicit ToyTransformer(const TransformerSpec& spec);

  const TransformerSpec& spec() const { return spec_; }
  const TransformerWeights& weights() const { return weights_; }
  TransformerWeights& mutable_weights() { return weights_; }

  /// Frozen forward inside an inference scope. Returned taps are constant
  /// leaves in the "tap" category. N = depth, so depth + 1 taps.
  BackboneTaps forward(Tape& tape, const Tensor& tokens) const;

 private:
  TransformerSpec spec_;
  TransformerWeights weights_;
};

// ---------------------------------------------------------------------------
// CNN

struct CnnSpec {
  std::size_t in_channels = 3;
  std::size_t image = 32;
  std::vector<std::size_t> channels{8, 16, 32, 64, 128};
  double mixing = 1.0;
  std::uint64_t seed = 42;

  std::size_t stages() const { return channels.size(); }
  Grid stage_grid(std::size_t stage) const;
  Grid output_grid() const { return stage_grid(stages() - 1); }
  void validate() const;

  bool operator==(const CnnSpec&) const = default;
};

/// Stem is a 1x1 convolution at full resolution; every later stage is a 2x2
/// stride-2 convolution (space-to-depth followed by a channel matmul) and
/// ReLU; the head is a linear 1x1 convolution on the last stage.
struct CnnWeights {
  Linear stem;
  std::vector<Linear> stages;
  Linear head;

  static CnnWeights init(const CnnSpec& spec, Rng& rng);
  void visit(const std::string& prefix, const ParamVisitor& fn);
};

/// C x H x W image to (H*W) x C rows.
Tensor image_to_rows(const Tensor& image);

/// Row order that groups each 2x2 cell of `grid` contiguously, so a reshape
/// to (cells/4) x 4C realises space-to-depth.
std::vector<std::size_t> space_to_depth_order(Grid grid);

/// Taps: outputs of stages 2..S and the head output.
BackboneTaps run_cnn(Tape& tape, const CnnWeights& w, const CnnSpec& spec, const Tensor& image_rows,
                     const BlockHook& hook = {});

class ToyCnn {
 public:
  explicit ToyCnn(const CnnSpec& spec);

  const CnnSpec& spec() const { return spec_; }
  const CnnWeights& weights() const { return weights_; }
  CnnWeights& mutable_weights() { return weights_; }

  /// Accepts a C x H x W image or its (H*W) x C rows.
  BackboneTaps forward(Tape& tape, const Tensor& image) const;

 private:
  CnnSpec spec_;
  CnnWeights weights_;
};

/// For every output cell p (row-major), the shallow-grid rows in its chunk,
/// row-major inside the chunk. Chunk of (y, x) is (y*Ho/Hl, x*Wo/Wl).
std::vector<std::vector<std::size_t>> chunk_partition(Grid shallow, Grid output);

enum class ChunkResidual { kChunkMean, kNone };

/// Projects the shallow map, then lets each output position attend (ReLU +
/// L1) to the keys of its own chunk, adding the chunk mean as residual.
/// Returns (Ho*Wo) x d.
Tensor chunk_pre_interact(Tape& tape, const Tensor& shallow, Grid shallow_grid,
                          const Tensor& last_proj, Grid output_grid, const Linear& projection,
                          double epsilon, ChunkResidual residual = ChunkResidual::kChunkMean);

/// Pre-interaction of every shallow tap against the projected final map,
/// followed by the Transformer-style fusion.
Tensor cnn_unipt_forward(Tape& tape, const BackboneTaps& taps, const UniPTHead& head,
                         ChunkResidual residual = ChunkResidual::kChunkMean,
                         const InteractionPolicy* policy = nullptr);

// ---------------------------------------------------------------------------
// Encoder-decoder

struct EncDecSpec {
  std::size_t encoder_depth = 4;
  std::size_t decoder_depth = 4;
  std::size_t dim = 32;
  std::size_t heads = 4;
  std::size_t source_tokens = 8;
  std::size_t target_tokens = 8;
  std::size_t mlp_ratio = 4;
  double mixing = 1.0;
  std::uint64_t seed = 42;

  bool operator==(const EncDecSpec&) const = default;
};

struct EncDecWeights {
  TransformerWeights encoder;
  TransformerWeights decoder;

  static EncDecWeights init(const EncDecSpec& spec, Rng& rng);
  void visit(const std::string& prefix, const ParamVisitor& fn);
};

/// `layers` holds decoder taps, `encoder_layers` encoder taps. Decoder
/// blocks cross-attend to the encoder's final output.
BackboneTaps run_encdec(Tape& tape, const EncDecWeights& w, const Tensor& source,
                        const Tensor& target, const BlockHook& hook = {});

class ToyEncDec {
 public:
  explicit ToyEncDec(const EncDecSpec& spec);

  const EncDecSpec& spec() const { return spec_; }
  const EncDecWeights& weights() const { return weights_; }
  EncDecWeights& mutable_weights() { return weights_; }

  BackboneTaps forward(Tape& tape, const Tensor& source, const Tensor& target) const;

 private:
  EncDecSpec spec_;
  EncDecWeights weights_;
};

struct EncDecHead {
  UniPTHead encoder;
  UniPTHead decoder;
  Linear bridge;  // encoder UniPT output (D) -> decoder unified width (d)

  static EncDecHead init(const UniPTConfig& encoder, const UniPTConfig& decoder, Rng& rng);
  std::size_t parameter_count() const;
  void visit(const ParamVisitor& fn);
};

/// Encoder UniPT, decoder pre-interaction against the bridged encoder
/// output (residual sum), then guided fusion with the decoder output.
Tensor encdec_unipt_forward(Tape& tape, const BackboneTaps& taps, const EncDecHead& head,
                            const InteractionPolicy* policy = nullptr);

// ---------------------------------------------------------------------------
// Kind-erased backbone used by strategies and the harness.

enum class BackboneKind { kTransformer, kCnn, kEncDec };

std::string_view to_string(BackboneKind kind);
BackboneKind parse_backbone_kind(std::string_view name);

struct BackboneSpec {
  BackboneKind kind = BackboneKind::kTransformer;
  TransformerSpec transformer;
  CnnSpec cnn;
  EncDecSpec encdec;

  std::size_t output_dim() const;
  std::uint64_t seed() const;
  bool operator==(const BackboneSpec&) const = default;
};

class Backbone {
 public:
  explicit Backbone(const BackboneSpec& spec);

  BackboneKind kind() const { return spec_.kind; }
  const BackboneSpec& spec() const { return spec_; }
  std::size_t output_dim() const { return spec_.output_dim(); }
  /// Widths of `taps().layers`.
  std::vector<std::size_t> tap_dims() const;
  std::vector<std::size_t> encoder_tap_dims() const;

  /// Random inputs for one sample, in the layout `taps` expects.
  std::vector<Tensor> sample_inputs(Rng& rng) const;
  BackboneTaps taps(Tape& tape, std::span<const Tensor> inputs) const;

  const ToyTransformer& transformer() const;
  const ToyCnn& cnn() const;
  const ToyEncDec& encdec() const;

  /// Hash over every backbone weight.
  std::uint64_t weights_hash() const;

 private:
  BackboneSpec spec_;
  std::optional<ToyTransformer> transformer_;
  std::optional<ToyCnn> cnn_;
  std::optional<ToyEncDec> encdec_;
};

}  // namespace unipt
