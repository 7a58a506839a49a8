// Copyright 2026 The UniPT Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <memory>

#include "unipt/backbones.hpp"
#include "unipt/harness.hpp"

namespace unipt::testing {

inline std::shared_ptr<const Backbone> make_backbone(BackboneKind kind) {
  BackboneSpec spec;
  spec.kind = kind;
  return std::make_shared<const Backbone>(spec);
}

/// Task with `n` training and `n` validation samples, read from tap 1.
inline SyntheticTask tiny_task(BackboneKind kind, std::size_t n = 2, std::uint64_t seed = 7) {
  TaskSpec spec;
  spec.train_size = n;
  spec.val_size = n;
  spec.seed = seed;
  return make_mid_layer_task(make_backbone(kind), spec);
}

inline constexpr BackboneKind kAllBackbones[] = {BackboneKind::kTransformer, BackboneKind::kCnn,
                                                 BackboneKind::kEncDec};

}  // namespace unipt::testing
