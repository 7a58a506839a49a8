// Copyright 2026 The UniPT Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "unipt/nn.hpp"
#include "unipt/tensor.hpp"

namespace unipt {

/// Flat named-tensor container. Layout, all integers little-endian:
///   "UNIPTCKP" | u32 version | u64 count |
///   count x ( u32 name_len | name | u32 rank | u64 dims[rank] | f64 values )
/// Keys are the parameter names produced by the owner's visit().
using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

inline constexpr std::uint32_t kCheckpointVersion = 1;

NamedTensors collect_parameters(const std::function<void(const ParamVisitor&)>& visit_all);

void write_checkpoint(std::ostream& out, const NamedTensors& tensors);
NamedTensors read_checkpoint(std::istream& in);

void save_checkpoint(const std::string& path, const NamedTensors& tensors);
NamedTensors load_checkpoint(const std::string& path);

/// Overwrites every visited parameter with the stored values, keeping its
/// trainable flag. Missing, extra, or misshapen entries are errors.
void restore_parameters(const std::function<void(const ParamVisitor&)>& visit_all,
                        const NamedTensors& tensors);

}  // namespace unipt
