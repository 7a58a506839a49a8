// Copyright 2026 The UniPT Authors.
// SPDX-License-Identifier: Apache-2.0

#include "unipt/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <sstream>

#include "unipt/error.hpp"

namespace unipt {
namespace {

std::atomic<std::uint64_t> g_next_id{1};

const Shape kEmptyShape{};
const std::string kEmptyCategory{};

void fnv_mix(std::uint64_t& h, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) {
    h ^= (v >> (8 * i)) & 0xffU;
    h *= 1099511628211ULL;
  }
}

}  // namespace

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::shared_ptr<const Tensor::Impl> Tensor::make(Shape shape,
                                                 std::shared_ptr<const std::vector<double>> data,
                                                 bool requires_grad, bool parameter,
                                                 std::string category) {
  if (shape.empty()) throw Error(ErrorCode::kInvalidArgument, "tensor shape must have rank >= 1");
  for (auto e : shape) {
    if (e == 0) {
      throw Error(ErrorCode::kInvalidArgument,
                  "tensor extents must be positive, got " + shape_string(shape));
    }
  }
  if (numel(shape) != data->size()) {
    throw Error(ErrorCode::kShapeMismatch, "tensor shape " + shape_string(shape) + " holds " +
                                               std::to_string(numel(shape)) + " elements, got " +
                                               std::to_string(data->size()));
  }
  auto impl = std::make_shared<Impl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  impl->requires_grad = requires_grad;
  impl->parameter = parameter;
  impl->category = std::move(category);
  impl->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
  return impl;
}

Tensor::Tensor(Shape shape, std::vector<double> values, TensorOptions options)
    : impl_(make(std::move(shape), std::make_shared<const std::vector<double>>(std::move(values)),
                 options.requires_grad, options.parameter, std::move(options.category))) {}

Tensor Tensor::zeros(Shape shape, TensorOptions options) {
  return filled(std::move(shape), 0.0, std::move(options));
}

Tensor Tensor::filled(Shape shape, double value, TensorOptions options) {
  const auto n = numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), std::move(options));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows,
                      TensorOptions options) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> values;
  values.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw Error(ErrorCode::kShapeMismatch, "ragged matrix literal");
    values.insert(values.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(values), std::move(options));
}

Tensor Tensor::row(std::vector<double> values, TensorOptions options) {
  const auto n = values.size();
  return Tensor({1, n}, std::move(values), std::move(options));
}

Tensor Tensor::parameter(Shape shape, std::vector<double> values, bool trainable,
                         std::string category) {
  return Tensor(std::move(shape), std::move(values),
                TensorOptions{trainable, true, std::move(category)});
}

const Shape& Tensor::shape() const { return impl_ ? impl_->shape : kEmptyShape; }

std::size_t Tensor::size() const { return impl_ ? impl_->data->size() : 0; }

std::size_t Tensor::rows() const {
  const auto& s = shape();
  return s.empty() ? 0 : s[0];
}

std::size_t Tensor::cols() const {
  const auto& s = shape();
  if (s.empty()) return 0;
  return s.size() == 1 ? 1 : numel(s) / s[0];
}

std::span<const double> Tensor::values() const {
  if (!impl_) return {};
  return {impl_->data->data(), impl_->data->size()};
}

double Tensor::at(std::size_t r, std::size_t c) const { return values()[r * cols() + c]; }

double Tensor::item() const {
  if (size() != 1) {
    throw Error(ErrorCode::kShapeMismatch, "item() on non-scalar " + shape_string(shape()));
  }
  return values()[0];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }
bool Tensor::is_parameter() const { return impl_ && impl_->parameter; }
const std::string& Tensor::category() const { return impl_ ? impl_->category : kEmptyCategory; }
std::uint64_t Tensor::id() const { return impl_ ? impl_->id : 0; }

Tensor Tensor::as_leaf(std::string category, bool requires_grad) const {
  Tensor t;
  t.impl_ = make(impl_->shape, impl_->data, requires_grad, false, std::move(category));
  return t;
}

Tensor Tensor::as_parameter(bool trainable) const {
  Tensor t;
  t.impl_ = make(impl_->shape, impl_->data, trainable, true, impl_->category);
  return t;
}

Tensor Tensor::with_values(std::vector<double> values) const {
  Tensor t;
  t.impl_ = make(impl_->shape, std::make_shared<const std::vector<double>>(std::move(values)),
                 impl_->requires_grad, impl_->parameter, impl_->category);
  return t;
}

std::uint64_t content_hash(const Tensor& t) {
  std::uint64_t h = 1469598103934665603ULL;
  for (auto e : t.shape()) fnv_mix(h, e);
  for (double v : t.values()) fnv_mix(h, std::bit_cast<std::uint64_t>(v));
  return h;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) {
    if (std::bit_cast<std::uint64_t>(av[i]) != std::bit_cast<std::uint64_t>(bv[i])) return false;
  }
  return true;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw Error(ErrorCode::kShapeMismatch,
                "max_abs_diff: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
  double m = 0.0;
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) m = std::max(m, std::abs(av[i] - bv[i]));
  return m;
}

}  // namespace unipt
