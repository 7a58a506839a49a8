// Copyright 2026 The UniPT Authors.
// SPDX-License-Identifier: Apache-2.0

#include "unipt/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "unipt/error.hpp"

namespace unipt {
namespace {

[[noreturn]] void shape_error(OpKind kind, const Shape& a, const Shape& b,
                              const std::string& detail = {}) {
  std::string msg = std::string(op_name(kind)) + ": shape mismatch " + shape_string(a) + " vs " +
                    shape_string(b);
  if (!detail.empty()) msg += " (" + detail + ")";
  throw Error(ErrorCode::kShapeMismatch, msg);
}

void require_matrix(OpKind kind, const Tensor& a) {
  if (!a.defined()) {
    throw Error(ErrorCode::kInvalidArgument, std::string(op_name(kind)) + ": undefined input");
  }
  if (a.rank() != 2) {
    throw Error(ErrorCode::kShapeMismatch,
                std::string(op_name(kind)) + ": expected a matrix, got " + shape_string(a.shape()));
  }
}

void require_axis(OpKind kind, int axis) {
  if (axis != 0 && axis != 1) {
    throw Error(ErrorCode::kInvalidArgument,
                std::string(op_name(kind)) + ": axis must be 0 or 1, got " + std::to_string(axis));
  }
}

std::vector<double> copy_values(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

// Slice geometry for reductions along one axis of an RxC matrix.
struct Lanes {
  std::size_t count;   // number of independent slices
  std::size_t length;  // elements per slice
  std::size_t stride;  // distance between consecutive elements of a slice
  std::size_t step;    // distance between the first elements of consecutive slices
};

Lanes lanes_for(const Tensor& a, int axis) {
  const std::size_t r = a.rows();
  const std::size_t c = a.cols();
  if (axis == 1) return {r, c, 1, c};
  return {c, r, c, 1};
}

}  // namespace

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kMatMul: return "matmul";
    case OpKind::kTranspose: return "transpose";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul";
    case OpKind::kScale: return "scale";
    case OpKind::kScaleBy: return "scale_by";
    case OpKind::kRelu: return "relu";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kSoftmax: return "softmax";
    case OpKind::kL1Normalize: return "l1_normalize";
    case OpKind::kMean: return "mean";
    case OpKind::kSum: return "sum";
    case OpKind::kReshape: return "reshape";
    case OpKind::kConcat: return "concat";
    case OpKind::kSlice: return "slice";
    case OpKind::kAddRow: return "add_row";
    case OpKind::kGatherRows: return "gather_rows";
    case OpKind::kLayerNorm: return "layer_norm";
    case OpKind::kCrossEntropy: return "cross_entropy";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// MemoryLedger

void MemoryLedger::charge(const std::string& category, std::size_t elements) {
  bytes_[category] += elements * kBytesPerElement;
}

std::size_t MemoryLedger::bytes(const std::string& category) const {
  auto it = bytes_.find(category);
  return it == bytes_.end() ? 0 : it->second;
}

std::size_t MemoryLedger::total_bytes() const {
  std::size_t total = 0;
  for (const auto& [_, b] : bytes_) total += b;
  return total;
}

void MemoryLedger::clear() { bytes_.clear(); }

// ---------------------------------------------------------------------------
// GradMap

Tensor GradMap::grad(const Tensor& t) const {
  auto it = grads_.find(t.id());
  if (it == grads_.end()) {
    throw Error(ErrorCode::kState, "no gradient recorded for tensor " + shape_string(t.shape()));
  }
  return Tensor(t.shape(), it->second);
}

std::span<const double> GradMap::values(const Tensor& t) const {
  auto it = grads_.find(t.id());
  if (it == grads_.end()) {
    throw Error(ErrorCode::kState, "no gradient recorded for tensor " + shape_string(t.shape()));
  }
  return it->second;
}

// ---------------------------------------------------------------------------
// Tape core

void Tape::mix_kink(std::uint64_t v) {
  kink_hash_ ^= v;
  kink_hash_ *= 1099511628211ULL;
}

Tensor Tape::emit(OpKind kind, std::vector<Tensor> inputs, Shape shape, std::vector<double> values,
                  Retain retain, BackwardFn fn) {
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw Error(ErrorCode::kNonFinite,
                  std::string(op_name(kind)) + ": nonfinite output in " + shape_string(shape));
    }
  }
  const bool tracked =
      recording() && std::any_of(inputs.begin(), inputs.end(),
                                 [](const Tensor& t) { return t.requires_grad(); });
  Tensor out(std::move(shape), std::move(values), TensorOptions{tracked, false, category_});
  if (!tracked) return out;

  std::size_t retained = 0;
  for (const auto& t : retain.operands) {
    if (t.is_parameter() || !charged_.insert(t.id()).second) continue;
    ledger_.charge(t.category(), t.size());
    retained += t.size();
  }
  if (retain.derived) {
    ledger_.charge(category_, retain.derived);
    retained += retain.derived;
  }
  if (retain.output && charged_.insert(out.id()).second) {
    ledger_.charge(category_, out.size());
    retained += out.size();
  }

  OpRecord rec;
  rec.kind = kind;
  for (const auto& t : inputs) rec.inputs.push_back(t.id());
  rec.output = out.id();
  rec.output_shape = out.shape();
  rec.retained_elements = retained;
  records_.push_back(std::move(rec));
  backward_fns_.push_back(std::move(fn));
  record_inputs_.push_back(std::move(inputs));
  return out;
}

GradMap Tape::backward(const Tensor& loss) {
  if (backward_done_) {
    throw Error(ErrorCode::kState, "backward called twice without reset");
  }
  if (loss.size() != 1) {
    throw Error(ErrorCode::kInvalidArgument,
                "backward needs a scalar loss, got " + shape_string(loss.shape()));
  }
  if (!loss.requires_grad()) {
    throw Error(ErrorCode::kState,
                "loss does not depend on any tracked tensor (produced inside an inference scope "
                "or from constants only)");
  }
  if (records_.empty()) throw Error(ErrorCode::kState, "backward on an empty tape");

  GradMap gm;
  gm.grads_[loss.id()] = {1.0};
  for (std::size_t i = records_.size(); i-- > 0;) {
    auto it = gm.grads_.find(records_[i].output);
    if (it == gm.grads_.end()) continue;
    const auto& inputs = record_inputs_[i];
    std::vector<std::vector<double>*> gin(inputs.size(), nullptr);
    for (std::size_t j = 0; j < inputs.size(); ++j) {
      if (!inputs[j].requires_grad()) continue;
      auto& g = gm.grads_[inputs[j].id()];
      if (g.empty()) g.assign(inputs[j].size(), 0.0);
      gin[j] = &g;
    }
    // Element references in unordered_map survive rehashing.
    backward_fns_[i](it->second, gin);
  }
  backward_done_ = true;
  return gm;
}

void Tape::reset() {
  records_.clear();
  backward_fns_.clear();
  record_inputs_.clear();
  charged_.clear();
  ledger_.clear();
  backward_done_ = false;
}

// ---------------------------------------------------------------------------
// Operations

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
  require_matrix(OpKind::kMatMul, a);
  require_matrix(OpKind::kMatMul, b);
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) shape_error(OpKind::kMatMul, a.shape(), b.shape());
  std::vector<double> out(m * n, 0.0);
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = &out[i * n];
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = &bv[p * n];
      for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
  return emit(OpKind::kMatMul, {a, b}, {m, n}, std::move(out), Retain{{a, b}},
              [a, b, m, k, n](const std::vector<double>& g, std::span<std::vector<double>*> gin) {
                auto av = a.values();
                auto bv = b.values();
                if (auto* ga = gin[0]) {
                  for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t p = 0; p < k; ++p) {
                      double s = 0.0;
                      for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * bv[p * n + j];
                      (*ga)[i * k + p] += s;
                    }
                  }
                }
                if (auto* gb = gin[1]) {
                  for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t p = 0; p < k; ++p) {
                      const double aip = av[i * k + p];
                      if (aip == 0.0) continue;
                      for (std::size_t j = 0; j < n; ++j) (*gb)[p * n + j] += aip * g[i * n + j];
                    }
                  }
                }
              });
}

Tensor Tape::transpose(const Tensor& a) {
  require_matrix(OpKind::kTranspose, a);
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<double> out(r * c);
  auto av = a.values();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = av[i * c + j];
  return emit(OpKind::kTranspose, {a}, {c, r}, std::move(out), {},
              [r, c](const std::vector<double>& g, std::span<std::vector<double>*> gin) {
                for (std::size_t i = 0; i < r; ++i)
                  for (std::size_t j = 0; j < c; ++j) (*gin[0])[i * c + j] += g[j * r + i];
              });
}

Tensor Tape::add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error(OpKind::kAdd, a.shape(), b.shape());
  std::vector<double> out = copy_values(a);
  auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return emit(OpKind::kAdd, {a, b}, a.shape(), std::move(out), {},
              [](const std::vector<double>& g, std::span<std::vector<double>*> gin) {
                for (auto* gi : gin) {
                  if (!gi) continue;
                  for (std::size_t i = 0; i < g.size(); ++i) (*gi)[i] += g[i];
                }
              });
}

Tensor Tape::sub(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error(OpKind::kSub, a.shape(), b.shape());
  std::vector<double> out = copy_values(a);
  auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return emit(OpKind::kSub, {a, b}, a.shape(), std::move(out), {},
              [](const std::vector<double>& g, std::span<std::vector<double>*> gin) {
                if (gin[0])
                  for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i];
                if (gin[1])
                  for (std::size_t i = 0; i < g.size(); ++i) (*gin[1])[i] -= g[i];
              });
}

Tensor Tape::mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error(OpKind::kMul, a.shape(), b.shape());
  std::vector<double> out = copy_values(a);
  auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return emit(OpKind::kMul, {a, b}, a.shape(), std::move(out), Retain{{a, b}},
              [a, b](const std::vector<double>& g, std::span<std::vector<double>*> gin) {
                auto av = a.values();
                auto bv = b.values();
                if (gin[0])
                  for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i] * bv[i];
                if (gin[1])
                  for (std::size_t i = 0; i < g.size(); ++i) (*gin[1])[i] += g[i] * av[i];
              });
}

Tensor Tape::scale(const Tensor& a, double factor) {
  std::vector<double> out = copy_values(a);
  for (auto& v : out) v *= factor;
  return emit(OpKind::kScale, {a}, a.shape(), std::move(out), {},
              [factor](const std::vector<double>& g, std::span<std::vector<double>*> gin) {
                for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += factor * g[i];
              });
}

Tensor Tape::scale_by(const Tensor& a, const Tensor& factor) {
  if (factor.size() != 1) shape_error(OpKind::kScaleBy, a.shape(), factor.shape(), "factor must be 1x1");
  const double f = factor[0];
  std::vector<double> out = copy_values(a);
  for (auto& v : out) v *= f;
  return emit(OpKind::kScaleBy, {a, factor}, a.shape(), std::move(out), Retain{{a, factor}},
              [a, f](const std::vector<double>& g, std::span<std::vector<double>*> gin) {
                if (gin[0])
                  for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += f * g[i];
                if (gin[1]) {
                  auto av = a.values();
                  double s = 0.0;
                  for (std::size_t i = 0; i < g.size(); ++i) s += av[i] * g[i];
                  (*gin[1])[0] += s;
                }
              });
}

Tensor Tape::relu(const Tensor& a) {
  std::vector<double> out = copy_values(a);
  std::vector<char> mask(out.size());
  std::uint64_t word = 0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    mask[i] = out[i] > 0.0;
    if (!mask[i]) out[i] = 0.0;
    word = (word << 1) | static_cast<std::uint64_t>(mask[i]);
    if (i % 64 == 63) {
      mix_kink(word);
      word = 0;
    }
  }
  mix_kink(word ^ (out.size() << 1));
  const std::size_t derived = mask.size();
  return emit(OpKind::kRelu, {a}, a.shape(), std::move(out), Retain{{}, derived},
              [mask = std::move(mask)](const std::vector<double>& g,
                                       std::span<std::vector<double>*> gin) {
                for (std::size_t i = 0; i < g.size(); ++i)
                  if (mask[i]) (*gin[0])[i] += g[i];
              });
}

Tensor Tape::sigmoid(const Tensor& a) {
  std::vector<double> out = copy_values(a);
  for (auto& v : out) {
    if (v >= 0) {
      v = 1.0 / (1.0 + std::exp(-v));
    } else {
      const double e = std::exp(v);
      v = e / (1.0 + e);
    }
  }
  auto y = std::make_shared<const std::vector<double>>(out);
  return emit(OpKind::kSigmoid, {a}, a.shape(), std::move(out), Retain{{}, 0, true},
              [y](const std::vector<double>& g, std::span<std::vector<double>*> gin) {
                const auto& yv = *y;
                for (std::size_t i = 0; i < g.size(); ++i)
                  (*gin[0])[i] += g[i] * yv[i] * (1.0 - yv[i]);
              });
}

Tensor Tape::softmax(const Tensor& a, int axis) {
  require_matrix(OpKind::kSoftmax, a);
  require_axis(OpKind::kSoftmax, axis);
  const Lanes L = lanes_for(a, axis);
  std::vector<double> out = copy_values(a);
  for (std::size_t s = 0; s < L.count; ++s) {
    const std::size_t base = s * L.step;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t e = 0; e < L.length; ++e) mx = std::max(mx, out[base + e * L.stride]);
    double z = 0.0;
    for (std::size_t e = 0; e < L.length; ++e) {
      auto& v = out[base + e * L.stride];
      v = std::exp(v - mx);
      z += v;
    }
    // Underflowed probabilities are raised to the smallest normal double so
    // every output stays strictly positive.
    for (std::size_t e = 0; e < L.length; ++e) {
      auto& v = out[base + e * L.stride];
      v = std::max(v / z, std::numeric_limits<double>::min());
    }
  }
  auto y = std::make_shared<const std::vector<double>>(out);
  return emit(OpKind::kSoftmax, {a}, a.shape(), std::move(out), Retain{{}, 0, true},
              [y, L](const std::vector<double>& g, std::span<std::vector<double>*> gin) {
                const auto& yv = *y;
                for (std::size_t s = 0; s < L.count; ++s) {
                  const std::size_t base = s * L.step;
                  double dot = 0.0;
                  for (std::size_t e = 0; e < L.length; ++e) {
                    const auto idx = base + e * L.stride;
                    dot += g[idx] * yv[idx];
                  }
                  for (std::size_t e = 0; e < L.length; ++e) {
                    const auto idx = base + e * L.stride;
                    (*gin[0])[idx] += yv[idx] * (g[idx] - dot);
                  }
                }
              });
}

Tensor Tape::l1_normalize(const Tensor& a, int axis, double epsilon) {
  require_matrix(OpKind::kL1Normalize, a);
  require_axis(OpKind::kL1Normalize, axis);
  if (!(epsilon > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "l1_normalize: epsilon must be positive");
  }
  const Lanes L = lanes_for(a, axis);
  std::vector<double> out = copy_values(a);
  std::vector<double> norms(L.count);
  std::vector<char> floored(L.count);
  for (std::size_t s = 0; s < L.count; ++s) {
    const std::size_t base = s * L.step;
    double n = 0.0;
    for (std::size_t e = 0; e < L.length; ++e) n += std::abs(out[base + e * L.stride]);
    floored[s] = n < epsilon;
    norms[s] = floored[s] ? epsilon : n;
    for (std::size_t e = 0; e < L.length; ++e) out[base + e * L.stride] /= norms[s];
    mix_kink(0x9e3779b97f4a7c15ULL ^ static_cast<std::uint64_t>(floored[s]));
  }
  auto y = std::make_shared<const std::vector<double>>(out);
  return emit(OpKind::kL1Normalize, {a}, a.shape(), std::move(out), Retain{{}, L.count, true},
              [y, L, norms = std::move(norms), floored = std::move(floored)](
                  const std::vector<double>& g, std::span<std::vector<double>*> gin) {
                const auto& yv = *y;
                for (std::size_t s = 0; s < L.count; ++s) {
                  const std::size_t base = s * L.step;
                  double dot = 0.0;
                  if (!floored[s]) {
                    for (std::size_t e = 0; e < L.length; ++e) {
                      const auto idx = base + e * L.stride;
                      dot += g[idx] * yv[idx];
                    }
                  }
                  for (std::size_t e = 0; e < L.length; ++e) {
                    const auto idx = base + e * L.stride;
                    const double sign = yv[idx] > 0 ? 1.0 : (yv[idx] < 0 ? -1.0 : 0.0);
                    (*gin[0])[idx] += (g[idx] - sign * dot) / norms[s];
                  }
                }
              });
}

Tensor Tape::mean(const Tensor& a, int axis) {
  require_matrix(OpKind::kMean, a);
  require_axis(OpKind::kMean, axis);
  const std::size_t r = a.rows(), c = a.cols();
  auto av = a.values();
  if (axis == 0) {
    std::vector<double> out(c, 0.0);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) out[j] += av[i * c + j];
    for (auto& v : out) v /= static_cast<double>(r);
    return emit(OpKind::kMean, {a}, {1, c}, std::move(out), {},
                [r, c](const std::vector<double>& g, std::span<std::vector<double>*> gin) {
                  const double inv = 1.0 / static_cast<double>(r);
                  for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < c; ++j) (*gin[0])[i * c + j] += g[j] * inv;
                });
  }
  std::vector<double> out(r, 0.0);
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out[i] += av[i * c + j];
    out[i] /= static_cast<double>(c);
  }
  return emit(OpKind::kMean, {a}, {r, 1}, std::move(out), {},
              [r, c](const std::vector<double>& g, std::span<std::vector<double>*> gin) {
                const double inv = 1.0 / static_cast<double>(c);
                for (std::size_t i = 0; i < r; ++i)
                  for (std::size_t j = 0; j < c; ++j) (*gin[0])[i * c + j] += g[i] * inv;
              });
}

Tensor Tape::sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  return emit(OpKind::kSum, {a}, {1, 1}, {s}, {},
              [](const std::vector<double>& g, std::span<std::vector<double>*> gin) {
                for (auto& v : *gin[0]) v += g[0];
              });
}

Tensor Tape::reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.size()) shape_error(OpKind::kReshape, a.shape(), shape);
  return emit(OpKind::kReshape, {a}, std::move(shape), copy_values(a), {},
              [](const std::vector<double>& g, std::span<std::vector<double>*> gin) {
                for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i];
              });
}

Tensor Tape::concat(std::span<const Tensor> parts, int axis) {
  require_axis(OpKind::kConcat, axis);
  if (parts.empty()) throw Error(ErrorCode::kInvalidArgument, "concat: no inputs");
  for (const auto& p : parts) require_matrix(OpKind::kConcat, p);
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  if (axis == 0) {
    const std::size_t c = parts[0].cols();
    std::size_t r = 0;
    std::vector<double> out;
    for (const auto& p : parts) {
      if (p.cols() != c) shape_error(OpKind::kConcat, parts[0].shape(), p.shape(), "axis 0");
      r += p.rows();
      out.insert(out.end(), p.values().begin(), p.values().end());
    }
    std::vector<std::size_t> sizes;
    for (const auto& p : parts) sizes.push_back(p.size());
    return emit(OpKind::kConcat, std::move(inputs), {r, c}, std::move(out), {},
                [sizes](const std::vector<double>& g, std::span<std::vector<double>*> gin) {
                  std::size_t off = 0;
                  for (std::size_t k = 0; k < sizes.size(); ++k) {
                    if (gin[k])
                      for (std::size_t i = 0; i < sizes[k]; ++i) (*gin[k])[i] += g[off + i];
                    off += sizes[k];
                  }
                });
  }
  const std::size_t r = parts[0].rows();
  std::size_t c = 0;
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    if (p.rows() != r) shape_error(OpKind::kConcat, parts[0].shape(), p.shape(), "axis 1");
    widths.push_back(p.cols());
    c += p.cols();
  }
  std::vector<double> out(r * c);
  std::size_t col0 = 0;
  for (const auto& p : parts) {
    auto pv = p.values();
    const std::size_t w = p.cols();
    for (std::size_t i = 0; i < r; ++i)
      std::copy_n(&pv[i * w], w, &out[i * c + col0]);
    col0 += w;
  }
  return emit(OpKind::kConcat, std::move(inputs), {r, c}, std::move(out), {},
              [widths, r, c](const std::vector<double>& g, std::span<std::vector<double>*> gin) {
                std::size_t col0 = 0;
                for (std::size_t k = 0; k < widths.size(); ++k) {
                  const std::size_t w = widths[k];
                  if (gin[k])
                    for (std::size_t i = 0; i < r; ++i)
                      for (std::size_t j = 0; j < w; ++j) (*gin[k])[i * w + j] += g[i * c + col0 + j];
                  col0 += w;
                }
              });
}

Tensor Tape::slice(const Tensor& a, int axis, std::size_t begin, std::size_t end) {
  require_matrix(OpKind::kSlice, a);
  require_axis(OpKind::kSlice, axis);
  const std::size_t r = a.rows(), c = a.cols();
  const std::size_t extent = axis == 0 ? r : c;
  if (begin >= end || end > extent) {
    throw Error(ErrorCode::kShapeMismatch, "slice: range [" + std::to_string(begin) + ", " +
                                               std::to_string(end) + ") invalid for " +
                                               shape_string(a.shape()) + " on axis " +
                                               std::to_string(axis));
  }
  auto av = a.values();
  if (axis == 0) {
    std::vector<double> out(av.begin() + begin * c, av.begin() + end * c);
    return emit(OpKind::kSlice, {a}, {end - begin, c}, std::move(out), {},
                [begin, c](const std::vector<double>& g, std::span<std::vector<double>*> gin) {
                  for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[begin * c + i] += g[i];
                });
  }
  const std::size_t w = end - begin;
  std::vector<double> out(r * w);
  for (std::size_t i = 0; i < r; ++i) std::copy_n(&av[i * c + begin], w, &out[i * w]);
  return emit(OpKind::kSlice, {a}, {r, w}, std::move(out), {},
              [r, c, w, begin](const std::vector<double>& g, std::span<std::vector<double>*> gin) {
                for (std::size_t i = 0; i < r; ++i)
                  for (std::size_t j = 0; j < w; ++j) (*gin[0])[i * c + begin + j] += g[i * w + j];
              });
}

Tensor Tape::add_row(const Tensor& a, const Tensor& row) {
  require_matrix(OpKind::kAddRow, a);
  require_matrix(OpKind::kAddRow, row);
  const std::size_t r = a.rows(), c = a.cols();
  if (row.rows() != 1 || row.cols() != c) shape_error(OpKind::kAddRow, a.shape(), row.shape());
  std::vector<double> out = copy_values(a);
  auto rv = row.values();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] += rv[j];
  return emit(OpKind::kAddRow, {a, row}, a.shape(), std::move(out), {},
              [r, c](const std::vector<double>& g, std::span<std::vector<double>*> gin) {
                if (gin[0])
                  for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i];
                if (gin[1])
                  for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < c; ++j) (*gin[1])[j] += g[i * c + j];
              });
}

Tensor Tape::gather_rows(const Tensor& a, std::span<const std::size_t> indices) {
  require_matrix(OpKind::kGatherRows, a);
  if (indices.empty()) throw Error(ErrorCode::kInvalidArgument, "gather_rows: no indices");
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  std::vector<double> out(idx.size() * c);
  auto av = a.values();
  for (std::size_t k = 0; k < idx.size(); ++k) {
    if (idx[k] >= r) {
      throw Error(ErrorCode::kShapeMismatch, "gather_rows: index " + std::to_string(idx[k]) +
                                                 " out of range for " + shape_string(a.shape()));
    }
    std::copy_n(&av[idx[k] * c], c, &out[k * c]);
  }
  const std::size_t n = idx.size();
  return emit(OpKind::kGatherRows, {a}, {n, c}, std::move(out), {},
              [idx = std::move(idx), c](const std::vector<double>& g,
                                        std::span<std::vector<double>*> gin) {
                for (std::size_t k = 0; k < idx.size(); ++k)
                  for (std::size_t j = 0; j < c; ++j) (*gin[0])[idx[k] * c + j] += g[k * c + j];
              });
}

Tensor Tape::layer_norm(const Tensor& a, const Tensor& gain, const Tensor& shift, double epsilon) {
  require_matrix(OpKind::kLayerNorm, a);
  const std::size_t r = a.rows(), c = a.cols();
  if (gain.size() != c) shape_error(OpKind::kLayerNorm, a.shape(), gain.shape(), "gain");
  if (shift.size() != c) shape_error(OpKind::kLayerNorm, a.shape(), shift.shape(), "shift");
  auto av = a.values();
  auto gv = gain.values();
  auto sv = shift.values();
  std::vector<double> xhat(r * c), inv(r), out(r * c);
  for (std::size_t i = 0; i < r; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < c; ++j) mu += av[i * c + j];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double d = av[i * c + j] - mu;
      var += d * d;
    }
    var /= static_cast<double>(c);
    inv[i] = 1.0 / std::sqrt(var + epsilon);
    for (std::size_t j = 0; j < c; ++j) {
      xhat[i * c + j] = (av[i * c + j] - mu) * inv[i];
      out[i * c + j] = xhat[i * c + j] * gv[j] + sv[j];
    }
  }
  return emit(OpKind::kLayerNorm, {a, gain, shift}, a.shape(), std::move(out),
              Retain{{gain, shift}, r * c + r},
              [gain, xhat = std::move(xhat), inv = std::move(inv), r, c](
                  const std::vector<double>& g, std::span<std::vector<double>*> gin) {
                auto gv = gain.values();
                if (gin[2])
                  for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < c; ++j) (*gin[2])[j] += g[i * c + j];
                if (gin[1])
                  for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < c; ++j)
                      (*gin[1])[j] += g[i * c + j] * xhat[i * c + j];
                if (gin[0]) {
                  const double n = static_cast<double>(c);
                  for (std::size_t i = 0; i < r; ++i) {
                    double s1 = 0.0, s2 = 0.0;
                    for (std::size_t j = 0; j < c; ++j) {
                      const double d = g[i * c + j] * gv[j];
                      s1 += d;
                      s2 += d * xhat[i * c + j];
                    }
                    for (std::size_t j = 0; j < c; ++j) {
                      const double d = g[i * c + j] * gv[j];
                      (*gin[0])[i * c + j] += inv[i] / n * (n * d - s1 - xhat[i * c + j] * s2);
                    }
                  }
                }
              });
}

Tensor Tape::cross_entropy(const Tensor& logits, std::span<const std::size_t> labels) {
  require_matrix(OpKind::kCrossEntropy, logits);
  const std::size_t r = logits.rows(), c = logits.cols();
  if (labels.size() != r) {
    throw Error(ErrorCode::kShapeMismatch, "cross_entropy: " + std::to_string(labels.size()) +
                                               " labels for " + shape_string(logits.shape()));
  }
  auto lv = logits.values();
  std::vector<double> probs(r * c);
  double loss = 0.0;
  for (std::size_t i = 0; i < r; ++i) {
    if (labels[i] >= c) {
      throw Error(ErrorCode::kInvalidArgument,
                  "cross_entropy: label " + std::to_string(labels[i]) + " out of range");
    }
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c; ++j) mx = std::max(mx, lv[i * c + j]);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(lv[i * c + j] - mx);
    for (std::size_t j = 0; j < c; ++j) probs[i * c + j] = std::exp(lv[i * c + j] - mx) / z;
    loss -= (lv[i * c + labels[i]] - mx) - std::log(z);
  }
  loss /= static_cast<double>(r);
  std::vector<std::size_t> lab(labels.begin(), labels.end());
  const std::size_t derived = probs.size();
  return emit(OpKind::kCrossEntropy, {logits}, {1, 1}, {loss}, Retain{{}, derived},
              [probs = std::move(probs), lab = std::move(lab), r, c](
                  const std::vector<double>& g, std::span<std::vector<double>*> gin) {
                const double s = g[0] / static_cast<double>(r);
                for (std::size_t i = 0; i < r; ++i)
                  for (std::size_t j = 0; j < c; ++j)
                    (*gin[0])[i * c + j] += s * (probs[i * c + j] - (j == lab[i] ? 1.0 : 0.0));
              });
}

// ---------------------------------------------------------------------------

Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x, double h) {
  if (!(h > 0.0)) throw Error(ErrorCode::kInvalidArgument, "finite_diff_grad: step must be positive");
  std::vector<double> base(x.values().begin(), x.values().end());
  std::vector<double> grad(base.size());
  for (std::size_t i = 0; i < base.size(); ++i) {
    auto plus = base;
    auto minus = base;
    plus[i] += h;
    minus[i] -= h;
    const double fp = f(x.with_values(std::move(plus)));
    const double fm = f(x.with_values(std::move(minus)));
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw Error(ErrorCode::kNonFinite,
                  "finite_diff_grad: nonfinite evaluation at entry " + std::to_string(i));
    }
    grad[i] = (fp - fm) / (2.0 * h);
  }
  return Tensor(x.shape(), std::move(grad));
}

}  // namespace unipt
