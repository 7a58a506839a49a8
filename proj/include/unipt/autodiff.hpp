// Copyright 2026 The UniPT Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "unipt/tensor.hpp"

namespace unipt {

// Retention contract, i.e. what each kind keeps alive for backward and the
// ledger charges for. "Operands" are charged to their own category, derived
// buffers to the category active when the op ran. Parameters are never
// charged, and a tensor retained by several ops is charged once.
//
//   kMatMul          both operands
//   kTranspose       nothing
//   kAdd, kSub       nothing
//   kMul             both operands
//   kScale           nothing (constant factor)
//   kScaleBy         both operands (matrix and 1x1 factor)
//   kRelu            sign mask, one element per entry
//   kSigmoid         output
//   kSoftmax         output
//   kL1Normalize     output plus one norm per normalized slice
//   kMean, kSum      nothing
//   kReshape         nothing
//   kConcat          nothing
//   kSlice           nothing
//   kAddRow          nothing
//   kGatherRows      nothing (indices are metadata)
//   kLayerNorm       normalized values plus one inverse deviation per row;
//                    gain and shift as operands
//   kCrossEntropy    class probabilities
enum class OpKind {
  kMatMul,
  kTranspose,
  kAdd,
  kSub,
  kMul,
  kScale,
  kScaleBy,
  kRelu,
  kSigmoid,
  kSoftmax,
  kL1Normalize,
  kMean,
  kSum,
  kReshape,
  kConcat,
  kSlice,
  kAddRow,
  kGatherRows,
  kLayerNorm,
  kCrossEntropy,
};

std::string_view op_name(OpKind kind);

/// Retained-activation bytes per category, 8 bytes per element.
class MemoryLedger {
 public:
  static constexpr std::size_t kBytesPerElement = 8;

  void charge(const std::string& category, std::size_t elements);
  std::size_t bytes(const std::string& category) const;
  std::size_t total_bytes() const;
  const std::map<std::string, std::size_t>& by_category() const { return bytes_; }

  std::size_t trainable_parameters() const { return trainable_parameters_; }
  void set_trainable_parameters(std::size_t n) { trainable_parameters_ = n; }

  void clear();

 private:
  std::map<std::string, std::size_t> bytes_;
  std::size_t trainable_parameters_ = 0;
};

struct OpRecord {
  OpKind kind;
  std::vector<std::uint64_t> inputs;
  std::uint64_t output = 0;
  Shape output_shape;
  // Elements newly charged to the ledger by this record.
  std::size_t retained_elements = 0;
};

class GradMap {
 public:
  bool contains(const Tensor& t) const { return grads_.count(t.id()) != 0; }
  /// Gradient with the same shape as `t`; throws if `t` received none.
  Tensor grad(const Tensor& t) const;
  std::span<const double> values(const Tensor& t) const;

 private:
  friend class Tape;
  std::unordered_map<std::uint64_t, std::vector<double>> grads_;
};

/// Records differentiable operations and the activations they retain.
///
/// An operation is recorded when the tape is not inside an inference scope
/// and at least one input requires a gradient; its output then requires a
/// gradient too. Every op validates shapes and rejects nonfinite results.
/// Single-threaded; create one tape per run.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Tensor matmul(const Tensor& a, const Tensor& b);
  Tensor transpose(const Tensor& a);
  Tensor add(const Tensor& a, const Tensor& b);
  Tensor sub(const Tensor& a, const Tensor& b);
  Tensor mul(const Tensor& a, const Tensor& b);
  Tensor scale(const Tensor& a, double factor);
  /// Multiplies every entry of `a` by the single value held in `factor`.
  Tensor scale_by(const Tensor& a, const Tensor& factor);
  Tensor relu(const Tensor& a);
  Tensor sigmoid(const Tensor& a);
  /// Axis 0 normalizes each column, axis 1 each row.
  Tensor softmax(const Tensor& a, int axis);
  /// Divides each slice by max(sum |x|, epsilon); an all-zero slice stays zero.
  Tensor l1_normalize(const Tensor& a, int axis, double epsilon);
  /// Axis 0 averages rows into 1xC, axis 1 averages columns into Rx1.
  Tensor mean(const Tensor& a, int axis);
  Tensor sum(const Tensor& a);
  Tensor reshape(const Tensor& a, Shape shape);
  Tensor concat(std::span<const Tensor> parts, int axis);
  Tensor slice(const Tensor& a, int axis, std::size_t begin, std::size_t end);
  /// Adds a 1xC row to every row of an RxC matrix.
  Tensor add_row(const Tensor& a, const Tensor& row);
  Tensor gather_rows(const Tensor& a, std::span<const std::size_t> indices);
  Tensor layer_norm(const Tensor& a, const Tensor& gain, const Tensor& shift, double epsilon);
  /// Mean negative log-likelihood of `labels[r]` under softmax of row r.
  Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> labels);

  /// Reverse pass from a scalar loss. Leaves that require a gradient and are
  /// reachable from the loss always get an entry, zero-filled if no signal
  /// arrives. Calling it twice without reset() is an error.
  GradMap backward(const Tensor& loss);

  /// Drops all records and ledger charges.
  void reset();

  bool recording() const { return inference_depth_ == 0; }
  const std::string& category() const { return category_; }
  const MemoryLedger& ledger() const { return ledger_; }
  MemoryLedger& ledger() { return ledger_; }
  std::span<const OpRecord> records() const { return records_; }

  /// Hash over every ReLU sign pattern and every L1 epsilon-floor hit seen
  /// since construction. Two evaluations with equal signatures lie on the
  /// same linear piece of the computation.
  std::uint64_t kink_signature() const { return kink_hash_; }

 private:
  friend class InferenceScope;
  friend class CategoryScope;

  using BackwardFn =
      std::function<void(const std::vector<double>& grad_out, std::span<std::vector<double>*> grad_in)>;

  struct Retain {
    std::vector<Tensor> operands;
    std::size_t derived = 0;
    bool output = false;
  };

  Tensor emit(OpKind kind, std::vector<Tensor> inputs, Shape shape, std::vector<double> values,
              Retain retain, BackwardFn fn);
  void mix_kink(std::uint64_t v);

  std::vector<OpRecord> records_;
  std::vector<BackwardFn> backward_fns_;
  std::vector<std::vector<Tensor>> record_inputs_;
  std::unordered_set<std::uint64_t> charged_;
  MemoryLedger ledger_;
  std::string category_ = kCategorySide;
  int inference_depth_ = 0;
  bool backward_done_ = false;
  std::uint64_t kink_hash_ = 1469598103934665603ULL;
};

/// While alive, no operation on the tape is recorded or charged and every
/// output has requires_grad == false.
class InferenceScope {
 public:
  explicit InferenceScope(Tape& tape) : tape_(tape) { ++tape_.inference_depth_; }
  ~InferenceScope() { --tape_.inference_depth_; }
  InferenceScope(const InferenceScope&) = delete;
  InferenceScope& operator=(const InferenceScope&) = delete;

 private:
  Tape& tape_;
};

/// Sets the category that outputs (and derived buffers) are charged to.
class CategoryScope {
 public:
  CategoryScope(Tape& tape, std::string category) : tape_(tape), saved_(tape.category_) {
    tape_.category_ = std::move(category);
  }
  ~CategoryScope() { tape_.category_ = std::move(saved_); }
  CategoryScope(const CategoryScope&) = delete;
  CategoryScope& operator=(const CategoryScope&) = delete;

 private:
  Tape& tape_;
  std::string saved_;
};

template <typename Body>
auto inference_scope(Tape& tape, Body&& body) {
  InferenceScope scope(tape);
  return body();
}

/// Central-difference gradient of a scalar function. Entry i is
/// (f(x + h e_i) - f(x - h e_i)) / 2h.
Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x,
                        double h = 1e-5);

}  // namespace unipt
