// Copyright 2026 The UniPT Authors.
// SPDX-License-Identifier: Apache-2.0

#include "unipt/checkpoint.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include "unipt/error.hpp"

namespace unipt {
namespace {

constexpr std::array<char, 8> kMagic{'U', 'N', 'I', 'P', 'T', 'C', 'K', 'P'};
constexpr std::uint64_t kMaxNameLength = 1 << 16;
constexpr std::uint64_t kMaxRank = 8;

template <typename T>
void put(std::ostream& out, T value) {
  std::array<unsigned char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  out.write(reinterpret_cast<const char*>(bytes.data()), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  std::array<unsigned char, sizeof(T)> bytes;
  if (!in.read(reinterpret_cast<char*>(bytes.data()), sizeof(T))) {
    throw Error(ErrorCode::kIo, "checkpoint truncated");
  }
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  T value;
  std::memcpy(&value, bytes.data(), sizeof(T));
  return value;
}

}  // namespace

NamedTensors collect_parameters(const std::function<void(const ParamVisitor&)>& visit_all) {
  NamedTensors out;
  visit_all([&](const std::string& name, Tensor& p) { out.emplace_back(name, p); });
  return out;
}

void write_checkpoint(std::ostream& out, const NamedTensors& tensors) {
  out.write(kMagic.data(), kMagic.size());
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, tensors.size());
  for (const auto& [name, t] : tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (auto dim : t.shape()) put<std::uint64_t>(out, dim);
    for (double v : t.values()) put<double>(out, v);
  }
  if (!out) throw Error(ErrorCode::kIo, "failed to write checkpoint");
}

NamedTensors read_checkpoint(std::istream& in) {
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) {
    throw Error(ErrorCode::kIo, "not a checkpoint: bad magic");
  }
  const auto version = get<std::uint32_t>(in);
  if (version != kCheckpointVersion) {
    throw Error(ErrorCode::kIo, "unsupported checkpoint version " + std::to_string(version));
  }
  const auto count = get<std::uint64_t>(in);
  NamedTensors out;
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto length = get<std::uint32_t>(in);
    if (length > kMaxNameLength) throw Error(ErrorCode::kIo, "checkpoint name too long");
    std::string name(length, '\0');
    if (!in.read(name.data(), length)) throw Error(ErrorCode::kIo, "checkpoint truncated");
    const auto rank = get<std::uint32_t>(in);
    if (rank > kMaxRank) throw Error(ErrorCode::kIo, "checkpoint rank too large for " + name);
    Shape shape;
    std::size_t size = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      shape.push_back(get<std::uint64_t>(in));
      size *= shape.back();
    }
    std::vector<double> values(size);
    for (auto& v : values) v = get<double>(in);
    out.emplace_back(std::move(name), Tensor(std::move(shape), std::move(values)));
  }
  return out;
}

void save_checkpoint(const std::string& path, const NamedTensors& tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot open " + path + " for writing");
  write_checkpoint(out, tensors);
}

NamedTensors load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path);
  return read_checkpoint(in);
}

void restore_parameters(const std::function<void(const ParamVisitor&)>& visit_all,
                        const NamedTensors& tensors) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& [name, t] : tensors) {
    if (!by_name.emplace(name, &t).second) {
      throw Error(ErrorCode::kIo, "duplicate checkpoint entry " + name);
    }
  }
  std::size_t used = 0;
  visit_all([&](const std::string& name, Tensor& p) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw Error(ErrorCode::kIo, "checkpoint has no entry " + name);
    if (it->second->shape() != p.shape()) {
      throw Error(ErrorCode::kShapeMismatch, "checkpoint entry " + name + " has shape " +
                                                 shape_string(it->second->shape()) +
                                                 ", expected " + shape_string(p.shape()));
    }
    const auto v = it->second->values();
    p = p.with_values(std::vector<double>(v.begin(), v.end()));
    ++used;
  });
  if (used != by_name.size()) {
    throw Error(ErrorCode::kIo, "checkpoint has " + std::to_string(by_name.size() - used) +
                                    " entries the model does not own");
  }
}

}  // namespace unipt
