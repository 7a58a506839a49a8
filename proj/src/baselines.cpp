// Copyright 2026 The UniPT Authors.
// SPDX-License-Identifier: Apache-2.0

#include "unipt/baselines.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <optional>

#include "unipt/error.hpp"

namespace unipt {
namespace {

struct KindName {
  StrategyKind kind;
  std::string_view name;
};

constexpr KindName kKindNames[] = {
    {StrategyKind::kFullFT, "FullFT"},
    {StrategyKind::kPartialDown, "PartialDown"},
    {StrategyKind::kPartialUp, "PartialUp"},
    {StrategyKind::kAdapter, "Adapter"},
    {StrategyKind::kLST, "LST"},
    {StrategyKind::kUniPT, "UniPT"},
    {StrategyKind::kUniPTNoGuidance, "UniPT-NoGuidance"},
    {StrategyKind::kUniPTPooling, "UniPT-Pooling"},
    {StrategyKind::kUniPTGate, "UniPT-Gate"},
    {StrategyKind::kUniPTMHSA, "UniPT-MHSA"},
};

bool iequals(std::string_view a, std::string_view b) {
  return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
           return std::tolower(static_cast<unsigned char>(x)) ==
                  std::tolower(static_cast<unsigned char>(y));
         });
}

std::size_t side_heads(std::size_t width, std::size_t heads) {
  return heads && width % heads == 0 ? heads : 1;
}

// ---------------------------------------------------------------------------

class PartialDownStrategy final : public Strategy {
 public:
  PartialDownStrategy(std::shared_ptr<const Backbone> b, Linear head)
      : Strategy(StrategyKind::kPartialDown, std::move(b), std::move(head)) {}

  Tensor features(Tape&, const Sample& s) const override { return s.taps.output(); }
  std::unique_ptr<Strategy> clone() const override {
    return std::make_unique<PartialDownStrategy>(*this);
  }

 protected:
  void visit_own(const ParamVisitor&) override {}
};

class UniPTStrategy final : public Strategy {
 public:
  UniPTStrategy(StrategyKind kind, std::shared_ptr<const Backbone> b, Linear task_head,
                const StrategyOptions& options, Rng& rng)
      : Strategy(kind, std::move(b), std::move(task_head)), residual_(options.chunk_residual) {
    const UniPTConfig config = unipt_config_for(*backbone_, options);
    std::size_t layers = config.tap_dims.size() - 1 - config.first_key();
    if (backbone_->kind() == BackboneKind::kEncDec) {
      UniPTConfig enc = config;
      enc.tap_dims = backbone_->encoder_tap_dims();
      encdec_head_ = EncDecHead::init(enc, config, rng);
      layers = std::max(layers, enc.tap_dims.size() - 1 - enc.first_key());
    } else {
      head_ = UniPTHead::init(config, rng);
    }
    policy_ = make_policy(kind, layers, config.unified_dim(), options, rng);
  }

  UniPTStrategy(const UniPTStrategy& o)
      : Strategy(o),
        residual_(o.residual_),
        head_(o.head_),
        encdec_head_(o.encdec_head_),
        policy_(o.policy_ ? o.policy_->clone() : nullptr) {}

  Tensor features(Tape& tape, const Sample& s) const override {
    switch (backbone_->kind()) {
      case BackboneKind::kTransformer: return unipt_forward(tape, s.taps.layers, head_, policy_.get());
      case BackboneKind::kCnn: return cnn_unipt_forward(tape, s.taps, head_, residual_, policy_.get());
      case BackboneKind::kEncDec: return encdec_unipt_forward(tape, s.taps, encdec_head_, policy_.get());
    }
    return {};
  }

  std::unique_ptr<Strategy> clone() const override { return std::make_unique<UniPTStrategy>(*this); }

 protected:
  void visit_own(const ParamVisitor& fn) override {
    if (backbone_->kind() == BackboneKind::kEncDec) {
      encdec_head_.visit(fn);
    } else {
      head_.visit(fn);
    }
    if (policy_) {
      policy_->visit([&](const std::string& name, Tensor& t) { fn("policy." + name, t); });
    }
  }

 private:
  ChunkResidual residual_;
  UniPTHead head_;
  EncDecHead encdec_head_;
  std::unique_ptr<TrainablePolicy> policy_;
};

class GuidedUniPTStrategy final : public Strategy {
 public:
  GuidedUniPTStrategy(std::shared_ptr<const Backbone> b, Linear task_head,
                      const StrategyOptions& options, std::size_t guide_dim, Rng& rng)
      : Strategy(StrategyKind::kUniPT, std::move(b), std::move(task_head)) {
    if (backbone_->kind() != BackboneKind::kTransformer) {
      throw Error(ErrorCode::kInvalidArgument, "guided UniPT needs a transformer backbone");
    }
    const UniPTConfig config = unipt_config_for(*backbone_, options);
    head_ = UniPTHead::init(config, rng);
    if (guide_dim) projection_ = GuidanceProjection::init(guide_dim, config, rng);
  }

  std::string label() const override { return projection_ ? "UniPT-Guided" : "UniPT-SelfGuided"; }

  Tensor features(Tape& tape, const Sample& s) const override {
    if (!s.guide.defined()) throw Error(ErrorCode::kState, "sample carries no guidance query");
    return guidance_override(tape, s.taps.layers, head_, s.guide,
                             projection_ ? &*projection_ : nullptr);
  }

  std::unique_ptr<Strategy> clone() const override {
    return std::make_unique<GuidedUniPTStrategy>(*this);
  }

 protected:
  void visit_own(const ParamVisitor& fn) override {
    head_.visit(fn);
    if (projection_) projection_->visit("guide_proj", fn);
  }

 private:
  UniPTHead head_;
  std::optional<GuidanceProjection> projection_;
};

class LstStrategy final : public Strategy {
 public:
  LstStrategy(std::shared_ptr<const Backbone> b, Linear task_head, const StrategyOptions& options,
              Rng& rng)
      : Strategy(StrategyKind::kLST, std::move(b), std::move(task_head)) {
    std::size_t heads = 1;
    switch (backbone_->kind()) {
      case BackboneKind::kTransformer: heads = backbone_->spec().transformer.heads; break;
      case BackboneKind::kEncDec: heads = backbone_->spec().encdec.heads; break;
      case BackboneKind::kCnn: heads = 1; break;
    }
    side_ = LstSideNet::init(backbone_->tap_dims(), backbone_->output_dim(), options.reduction,
                             heads, options.lst_kept_layers, options.init_mode,
                             options.init_scale, rng);
  }

  Tensor features(Tape& tape, const Sample& s) const override {
    return lst_forward(tape, s.taps, side_);
  }
  std::unique_ptr<Strategy> clone() const override { return std::make_unique<LstStrategy>(*this); }

 protected:
  void visit_own(const ParamVisitor& fn) override { side_.visit(fn); }

 private:
  LstSideNet side_;
};

class AdapterStrategy final : public Strategy {
 public:
  AdapterStrategy(std::shared_ptr<const Backbone> b, Linear task_head,
                  const StrategyOptions& options, Rng& rng)
      : Strategy(StrategyKind::kAdapter, std::move(b), std::move(task_head)) {
    if (options.adapter_reduction == 0) {
      throw Error(ErrorCode::kInvalidArgument, "adapter reduction must be positive");
    }
    auto add_stack = [&](const std::vector<std::size_t>& widths) {
      std::vector<AdapterWeights> stack;
      for (auto w : widths) {
        stack.push_back(AdapterWeights::init(w, std::max<std::size_t>(1, w / options.adapter_reduction),
                                             options.init_mode, options.init_scale, rng));
      }
      adapters_.push_back(std::move(stack));
    };
    const auto& spec = backbone_->spec();
    switch (backbone_->kind()) {
      case BackboneKind::kTransformer:
        add_stack(std::vector<std::size_t>(spec.transformer.depth, spec.transformer.dim));
        break;
      case BackboneKind::kCnn: add_stack(spec.cnn.channels); break;
      case BackboneKind::kEncDec:
        add_stack(std::vector<std::size_t>(spec.encdec.encoder_depth, spec.encdec.dim));
        add_stack(std::vector<std::size_t>(spec.encdec.decoder_depth, spec.encdec.dim));
        break;
    }
  }

  Tensor features(Tape& tape, const Sample& s) const override {
    BlockHook hook = [this](Tape& t, int stack, std::size_t index, const Tensor& h) {
      CategoryScope side(t, kCategorySide);
      return adapters_.at(static_cast<std::size_t>(stack)).at(index)(t, h);
    };
    CategoryScope cat(tape, kCategoryBackbone);
    switch (backbone_->kind()) {
      case BackboneKind::kTransformer:
        return run_transformer(tape, backbone_->transformer().weights(), s.inputs.at(0), nullptr, 0,
                               hook)
            .output();
      case BackboneKind::kCnn:
        return run_cnn(tape, backbone_->cnn().weights(), backbone_->cnn().spec(), s.inputs.at(0),
                       hook)
            .output();
      case BackboneKind::kEncDec:
        return run_encdec(tape, backbone_->encdec().weights(), s.inputs.at(0), s.inputs.at(1), hook)
            .output();
    }
    return {};
  }

  std::unique_ptr<Strategy> clone() const override { return std::make_unique<AdapterStrategy>(*this); }

 protected:
  void visit_own(const ParamVisitor& fn) override {
    for (std::size_t s = 0; s < adapters_.size(); ++s) {
      for (std::size_t i = 0; i < adapters_[s].size(); ++i) {
        adapters_[s][i].visit("adapters." + std::to_string(s) + "." + std::to_string(i), fn);
      }
    }
  }

 private:
  std::vector<std::vector<AdapterWeights>> adapters_;
};

// Full and partial fine-tuning run a private copy of the backbone weights.
class TunedBackboneStrategy final : public Strategy {
 public:
  TunedBackboneStrategy(StrategyKind kind, std::shared_ptr<const Backbone> b, Linear task_head,
                        const StrategyOptions& options)
      : Strategy(kind, std::move(b), std::move(task_head)) {
    const bool full = kind == StrategyKind::kFullFT;
    const std::size_t k = options.partial_up_blocks;
    auto unfreeze = [](auto& weights) {
      weights.visit("", [](const std::string&, Tensor& p) { p = p.as_parameter(true); });
    };
    auto top = [&](std::size_t units) {
      if (!full && k > units) {
        throw Error(ErrorCode::kInvalidArgument, "cannot unfreeze " + std::to_string(k) +
                                                     " of " + std::to_string(units) + " blocks");
      }
      return full ? units : k;
    };
    switch (backbone_->kind()) {
      case BackboneKind::kTransformer: {
        transformer_ = backbone_->transformer().weights();
        auto& w = *transformer_;
        const std::size_t n = top(w.blocks.size());
        for (std::size_t i = w.blocks.size() - n; i < w.blocks.size(); ++i) unfreeze(w.blocks[i]);
        if (n) unfreeze_norm(w.final_norm);
        if (full) w.embed.visit("", [](const std::string&, Tensor& p) { p = p.as_parameter(true); });
        break;
      }
      case BackboneKind::kCnn: {
        cnn_ = backbone_->cnn().weights();
        auto& w = *cnn_;
        const std::size_t n = top(w.stages.size());
        for (std::size_t i = w.stages.size() - n; i < w.stages.size(); ++i) {
          w.stages[i].visit("", [](const std::string&, Tensor& p) { p = p.as_parameter(true); });
        }
        if (n) w.head.visit("", [](const std::string&, Tensor& p) { p = p.as_parameter(true); });
        if (full) w.stem.visit("", [](const std::string&, Tensor& p) { p = p.as_parameter(true); });
        break;
      }
      case BackboneKind::kEncDec: {
        encdec_ = backbone_->encdec().weights();
        auto& w = *encdec_;
        if (full) {
          unfreeze(w);
          break;
        }
        auto& dec = w.decoder;
        const std::size_t n = top(dec.blocks.size());
        for (std::size_t i = dec.blocks.size() - n; i < dec.blocks.size(); ++i) {
          unfreeze(dec.blocks[i]);
        }
        if (n) unfreeze_norm(dec.final_norm);
        break;
      }
    }
  }

  Tensor features(Tape& tape, const Sample& s) const override {
    CategoryScope cat(tape, kCategoryBackbone);
    if (transformer_) return run_transformer(tape, *transformer_, s.inputs.at(0)).output();
    if (cnn_) {
      return run_cnn(tape, *cnn_, backbone_->cnn().spec(), s.inputs.at(0)).output();
    }
    return run_encdec(tape, *encdec_, s.inputs.at(0), s.inputs.at(1)).output();
  }

  std::unique_ptr<Strategy> clone() const override {
    return std::make_unique<TunedBackboneStrategy>(*this);
  }

 protected:
  void visit_own(const ParamVisitor& fn) override {
    if (transformer_) transformer_->visit("backbone.", fn);
    if (cnn_) cnn_->visit("backbone.", fn);
    if (encdec_) encdec_->visit("backbone.", fn);
  }

 private:
  static void unfreeze_norm(LayerNormWeights& n) {
    n.gain = n.gain.as_parameter(true);
    n.shift = n.shift.as_parameter(true);
  }

  std::optional<TransformerWeights> transformer_;
  std::optional<CnnWeights> cnn_;
  std::optional<EncDecWeights> encdec_;
};

}  // namespace

std::string_view to_string(StrategyKind kind) {
  for (const auto& k : kKindNames) {
    if (k.kind == kind) return k.name;
  }
  return "unknown";
}

StrategyKind parse_strategy_kind(std::string_view name) {
  for (const auto& k : kKindNames) {
    if (iequals(k.name, name)) return k.kind;
  }
  throw Error(ErrorCode::kConfig, "unknown strategy kind '" + std::string(name) + "'");
}

const std::vector<StrategyKind>& all_strategy_kinds() {
  static const std::vector<StrategyKind> kinds = [] {
    std::vector<StrategyKind> v;
    for (const auto& k : kKindNames) v.push_back(k.kind);
    return v;
  }();
  return kinds;
}

bool is_frozen_backbone_kind(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::kFullFT:
    case StrategyKind::kPartialUp:
    case StrategyKind::kAdapter: return false;
    default: return true;
  }
}

Tensor Strategy::predict(Tape& tape, const Sample& sample) const {
  const Tensor f = features(tape, sample);
  CategoryScope side(tape, kCategorySide);
  return tape.mean(task_head_(tape, f), 0);
}

void Strategy::visit(const ParamVisitor& fn) {
  task_head_.visit("task_head", fn);
  visit_own(fn);
}

std::size_t Strategy::trainable_parameters() {
  std::size_t n = 0;
  visit([&n](const std::string&, Tensor& p) {
    if (p.requires_grad()) n += p.size();
  });
  return n;
}

UniPTConfig unipt_config_for(const Backbone& backbone, const StrategyOptions& options) {
  UniPTConfig c;
  c.output_dim = backbone.output_dim();
  c.reduction = options.reduction;
  c.tap_dims = backbone.tap_dims();
  c.init_scale = options.init_scale;
  c.init_mode = options.init_mode;
  c.mlp_init_factor = options.mlp_init_factor;
  c.include_embeddings = options.include_embeddings;
  c.validate();
  return c;
}

namespace {

Linear make_task_head(const Backbone& backbone, std::size_t target_dim, Rng& rng) {
  if (target_dim == 0) throw Error(ErrorCode::kInvalidArgument, "target dimension must be positive");
  const std::size_t d = backbone.output_dim();
  return Linear::init(d, target_dim, 1.0 / std::sqrt(static_cast<double>(d)), rng, true,
                      kCategorySide);
}

}  // namespace

std::unique_ptr<Strategy> make_strategy(StrategyKind kind, std::shared_ptr<const Backbone> backbone,
                                        const StrategyOptions& options, std::size_t target_dim,
                                        std::uint64_t seed) {
  if (!backbone) throw Error(ErrorCode::kInvalidArgument, "strategy needs a backbone");
  Rng rng(seed);
  Linear head = make_task_head(*backbone, target_dim, rng);
  switch (kind) {
    case StrategyKind::kPartialDown:
      return std::make_unique<PartialDownStrategy>(std::move(backbone), std::move(head));
    case StrategyKind::kFullFT:
    case StrategyKind::kPartialUp:
      return std::make_unique<TunedBackboneStrategy>(kind, std::move(backbone), std::move(head),
                                                     options);
    case StrategyKind::kAdapter:
      return std::make_unique<AdapterStrategy>(std::move(backbone), std::move(head), options, rng);
    case StrategyKind::kLST:
      return std::make_unique<LstStrategy>(std::move(backbone), std::move(head), options, rng);
    case StrategyKind::kUniPT:
    case StrategyKind::kUniPTNoGuidance:
    case StrategyKind::kUniPTPooling:
    case StrategyKind::kUniPTGate:
    case StrategyKind::kUniPTMHSA:
      return std::make_unique<UniPTStrategy>(kind, std::move(backbone), std::move(head), options,
                                             rng);
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown strategy kind");
}

std::unique_ptr<Strategy> make_guided_unipt(std::shared_ptr<const Backbone> backbone,
                                            const StrategyOptions& options,
                                            std::size_t target_dim, std::size_t guide_dim,
                                            std::uint64_t seed) {
  if (!backbone) throw Error(ErrorCode::kInvalidArgument, "strategy needs a backbone");
  Rng rng(seed);
  Linear head = make_task_head(*backbone, target_dim, rng);
  return std::make_unique<GuidedUniPTStrategy>(std::move(backbone), std::move(head), options,
                                               guide_dim, rng);
}

// ---------------------------------------------------------------------------
// Policies

Tensor NoGuidancePolicy::blend(Tape& tape, const Tensor&, const Tensor& keys, std::size_t,
                               const UniPTHead& head) const {
  return interact(tape, keys, keys, head.config.epsilon);
}

std::unique_ptr<TrainablePolicy> NoGuidancePolicy::clone() const {
  return std::make_unique<NoGuidancePolicy>(*this);
}

Tensor PoolingPolicy::weights(Tape&, std::span<const Tensor> keys, const Tensor&,
                              const UniPTHead&) const {
  if (keys.empty()) throw Error(ErrorCode::kInvalidArgument, "pooling needs N >= 1");
  const std::size_t n = keys.size();
  return Tensor::filled({1, n}, 1.0 / static_cast<double>(n));
}

std::unique_ptr<TrainablePolicy> PoolingPolicy::clone() const {
  return std::make_unique<PoolingPolicy>(*this);
}

GatePolicy::GatePolicy(std::size_t layers)
    : logits(Tensor::parameter({1, layers}, std::vector<double>(layers, 0.0), true, kCategorySide)) {}

Tensor GatePolicy::weights(Tape& tape, std::span<const Tensor> keys, const Tensor&,
                           const UniPTHead&) const {
  if (keys.size() != logits.size()) {
    throw Error(ErrorCode::kShapeMismatch, "gate has " + std::to_string(logits.size()) +
                                               " logits for " + std::to_string(keys.size()) +
                                               " layers");
  }
  return tape.softmax(logits, 1);
}

std::unique_ptr<TrainablePolicy> GatePolicy::clone() const {
  return std::make_unique<GatePolicy>(*this);
}

void GatePolicy::visit(const ParamVisitor& fn) { fn("gate.logits", logits); }

MhsaPolicy::MhsaPolicy(std::size_t layers, std::size_t width, std::size_t heads, double init_scale,
                       Rng& rng) {
  for (std::size_t i = 0; i < layers; ++i) {
    attention.push_back(AttentionWeights::init(width, heads, init_scale, rng, true, kCategorySide));
  }
}

Tensor MhsaPolicy::blend(Tape& tape, const Tensor& query, const Tensor& keys, std::size_t layer,
                         const UniPTHead&) const {
  return tape.add(keys, multi_head_attention(tape, attention.at(layer), query, keys, scaled));
}

std::unique_ptr<TrainablePolicy> MhsaPolicy::clone() const {
  return std::make_unique<MhsaPolicy>(*this);
}

void MhsaPolicy::visit(const ParamVisitor& fn) {
  for (std::size_t i = 0; i < attention.size(); ++i) {
    attention[i].visit("mhsa." + std::to_string(i), fn);
  }
}

std::unique_ptr<TrainablePolicy> make_policy(StrategyKind kind, std::size_t layers,
                                             std::size_t width, const StrategyOptions& options,
                                             Rng& rng) {
  switch (kind) {
    case StrategyKind::kUniPT: return nullptr;
    case StrategyKind::kUniPTNoGuidance: return std::make_unique<NoGuidancePolicy>();
    case StrategyKind::kUniPTPooling: return std::make_unique<PoolingPolicy>();
    case StrategyKind::kUniPTGate: return std::make_unique<GatePolicy>(layers);
    case StrategyKind::kUniPTMHSA:
      return std::make_unique<MhsaPolicy>(layers, width, side_heads(width, options.mhsa_heads),
                                          1.0 / std::sqrt(static_cast<double>(width)), rng);
    default:
      throw Error(ErrorCode::kInvalidArgument,
                  "'" + std::string(to_string(kind)) + "' is not a UniPT variant");
  }
}

// ---------------------------------------------------------------------------
// LST

LstSideNet LstSideNet::init(const std::vector<std::size_t>& tap_dims, std::size_t output_dim,
                            std::size_t reduction, std::size_t heads,
                            const std::vector<std::size_t>& kept_layers, InitMode mode,
                            double init_scale, Rng& rng) {
  if (tap_dims.size() < 2) throw Error(ErrorCode::kInvalidArgument, "LST needs at least two taps");
  if (reduction == 0 || output_dim % reduction != 0) {
    throw Error(ErrorCode::kInvalidArgument,
                "reduction factor " + std::to_string(reduction) +
                    " does not divide output dimension " + std::to_string(output_dim));
  }
  const std::size_t d = output_dim / reduction;
  const std::size_t n = tap_dims.size() - 1;
  LstSideNet side;
  if (kept_layers.empty()) {
    for (std::size_t i = 1; i <= n; ++i) side.kept.push_back(i);
  } else {
    side.kept = kept_layers;
    std::sort(side.kept.begin(), side.kept.end());
    side.kept.erase(std::unique(side.kept.begin(), side.kept.end()), side.kept.end());
    if (side.kept.front() < 1 || side.kept.back() > n) {
      throw Error(ErrorCode::kInvalidArgument,
                  "LST kept layers must lie in 1.." + std::to_string(n));
    }
  }
  for (auto dim : tap_dims) {
    side.down.push_back(Linear::init(dim, d, init_std(mode, init_scale, dim), rng, true, kCategorySide));
  }
  for (std::size_t j = 0; j < side.kept.size(); ++j) {
    side.gates.push_back(Tensor::parameter({1, 1}, {0.0}, true, kCategorySide));
    side.blocks.push_back(
        BlockWeights::init(d, side_heads(d, heads), 4, 1.0, false, rng, true, kCategorySide));
  }
  side.up = Linear::init(d, output_dim, init_std(mode, init_scale, d), rng, true, kCategorySide);
  return side;
}

std::size_t LstSideNet::parameter_count() const {
  std::size_t n = 0;
  const_cast<LstSideNet*>(this)->visit([&n](const std::string&, Tensor& p) { n += p.size(); });
  return n;
}

void LstSideNet::visit(const ParamVisitor& fn) {
  for (std::size_t i = 0; i < down.size(); ++i) down[i].visit("down." + std::to_string(i), fn);
  for (std::size_t j = 0; j < kept.size(); ++j) {
    const std::string layer = std::to_string(kept[j]);
    fn("gate." + layer, gates[j]);
    blocks[j].visit("block." + layer, fn);
  }
  up.visit("up", fn);
}

Tensor chunk_mean(Tape& tape, const Tensor& x, Grid grid, Grid output) {
  if (x.rows() != grid.cells()) {
    throw Error(ErrorCode::kShapeMismatch,
                "map " + shape_string(x.shape()) + " does not cover its grid");
  }
  const auto chunks = chunk_partition(grid, output);
  std::vector<Tensor> parts;
  parts.reserve(chunks.size());
  for (const auto& c : chunks) parts.push_back(tape.mean(tape.gather_rows(x, c), 0));
  return tape.concat(parts, 0);
}

Tensor lst_forward(Tape& tape, const BackboneTaps& taps, const LstSideNet& side) {
  if (taps.layers.size() != side.down.size()) {
    throw Error(ErrorCode::kShapeMismatch, "LST expects " + std::to_string(side.down.size()) +
                                               " taps, got " + std::to_string(taps.layers.size()));
  }
  const bool pooled = !taps.grids.empty();
  auto project = [&](std::size_t i) {
    Tensor p = side.down[i](tape, taps.layers[i]);
    if (pooled && taps.grids[i] != taps.grids.back()) {
      p = chunk_mean(tape, p, taps.grids[i], taps.grids.back());
    }
    return p;
  };
  const Tensor one = Tensor::filled({1, 1}, 1.0);
  Tensor s = project(0);
  for (std::size_t j = 0; j < side.kept.size(); ++j) {
    const Tensor g = tape.sigmoid(side.gates[j]);
    const Tensor mixed =
        tape.add(tape.scale_by(project(side.kept[j]), g), tape.scale_by(s, tape.sub(one, g)));
    s = transformer_block(tape, side.blocks[j], mixed);
  }
  return side.up(tape, s);
}

// ---------------------------------------------------------------------------
// Adapters

AdapterWeights AdapterWeights::init(std::size_t width, std::size_t bottleneck, InitMode mode,
                                    double init_scale, Rng& rng) {
  AdapterWeights a;
  a.down = Linear::init(width, bottleneck, init_std(mode, init_scale, width), rng, true, kCategorySide);
  a.up = Linear::init(bottleneck, width, 0.0, rng, true, kCategorySide);
  return a;
}

Tensor AdapterWeights::operator()(Tape& tape, const Tensor& h) const {
  return tape.add(h, up(tape, tape.relu(down(tape, h))));
}

void AdapterWeights::visit(const std::string& prefix, const ParamVisitor& fn) {
  down.visit(prefix + ".down", fn);
  up.visit(prefix + ".up", fn);
}

}  // namespace unipt
