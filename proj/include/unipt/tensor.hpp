// Copyright 2026 The UniPT Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace unipt {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_string(const Shape& shape);

// Categories used by the memory ledger. Any string is accepted; these are
// the ones the library itself emits.
inline constexpr const char* kCategoryInput = "input";
inline constexpr const char* kCategoryBackbone = "backbone";
inline constexpr const char* kCategoryTap = "tap";
inline constexpr const char* kCategorySide = "side";

struct TensorOptions {
  bool requires_grad = false;
  // Parameters are resident model state: the ledger never charges them.
  bool parameter = false;
  std::string category = kCategoryInput;
};

/// Immutable dense f64 array in row-major order.
///
/// Copies are cheap and share storage. Every construction (including
/// `as_leaf` and `with_values`) mints a fresh identity, which is what the
/// tape and gradient map key on.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values, TensorOptions options = {});

  static Tensor zeros(Shape shape, TensorOptions options = {});
  static Tensor filled(Shape shape, double value, TensorOptions options = {});
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows,
                       TensorOptions options = {});
  static Tensor row(std::vector<double> values, TensorOptions options = {});
  static Tensor parameter(Shape shape, std::vector<double> values, bool trainable,
                          std::string category = kCategorySide);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t size() const;
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> values() const;
  double operator[](std::size_t i) const { return values()[i]; }
  double at(std::size_t r, std::size_t c) const;
  double item() const;

  bool requires_grad() const;
  bool is_parameter() const;
  const std::string& category() const;
  std::uint64_t id() const;

  /// Same values, new identity, re-flagged as a leaf.
  Tensor as_leaf(std::string category, bool requires_grad = false) const;
  /// Same values and category, new identity, parameter with the given flag.
  Tensor as_parameter(bool trainable) const;
  /// Same shape and flags, new values and identity.
  Tensor with_values(std::vector<double> values) const;

 private:
  struct Impl {
    Shape shape;
    std::shared_ptr<const std::vector<double>> data;
    bool requires_grad = false;
    bool parameter = false;
    std::string category;
    std::uint64_t id = 0;
  };
  static std::shared_ptr<const Impl> make(Shape shape, std::shared_ptr<const std::vector<double>> data,
                                          bool requires_grad, bool parameter, std::string category);

  std::shared_ptr<const Impl> impl_;
};

/// Order-sensitive 64-bit FNV-1a hash over shape and raw value bits.
std::uint64_t content_hash(const Tensor& t);

/// True when shapes agree and every value is bit-identical.
bool bitwise_equal(const Tensor& a, const Tensor& b);

double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace unipt
