// Copyright 2026 The UniPT Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <limits>

#include "gradcheck.hpp"
#include "unipt/autodiff.hpp"
#include "unipt/error.hpp"
#include "unipt/nn.hpp"

namespace unipt {
namespace {

using UnaryOp = std::function<Tensor(Tape&, const Tensor&)>;

Tensor leaf(Shape shape, Rng& rng, double shift = 0.0) {
  auto v = rng.normal(numel(shape), 1.0);
  for (auto& x : v) x += shift;
  return Tensor(std::move(shape), std::move(v), TensorOptions{true, false, kCategoryInput});
}

// Max relative error between backward and central differences for
// sum(op(x) * w).
double op_grad_error(const UnaryOp& op, const Tensor& x, std::uint64_t seed = 3) {
  Rng rng(seed);
  Tensor probe_out;
  {
    Tape tape;
    InferenceScope frozen(tape);
    probe_out = op(tape, x);
  }
  const Tensor w(probe_out.shape(), rng.normal(probe_out.size(), 1.0));
  Tape tape;
  const Tensor loss = tape.sum(tape.mul(op(tape, x), w));
  const Tensor analytic = tape.backward(loss).grad(x);
  const Tensor numeric = finite_diff_grad(
      [&](const Tensor& at) {
        Tape t;
        InferenceScope frozen(t);
        return t.sum(t.mul(op(t, at), w)).item();
      },
      x);
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    worst = std::max(worst, testing::rel_error(analytic[i], numeric[i]));
  }
  return worst;
}

TEST(Autodiff, UnaryOpGradientsMatchFiniteDifferences) {
  Rng rng(1);
  const Tensor x = leaf({3, 4}, rng);
  const Tensor other(Shape{4, 5}, rng.normal(20, 1.0));
  const Tensor left(Shape{2, 3}, rng.normal(6, 1.0));
  const Tensor same(Shape{3, 4}, rng.normal(12, 1.0));
  const Tensor row(Shape{1, 4}, rng.normal(4, 1.0));
  const Tensor gain(Shape{1, 4}, rng.normal(4, 1.0));
  const Tensor factor(Shape{1, 1}, {1.7});
  const std::vector<std::size_t> idx{2, 0, 2};
  const std::vector<std::size_t> labels{1, 3, 0};
  const std::vector<std::pair<const char*, UnaryOp>> ops{
      {"matmul", [&](Tape& t, const Tensor& a) { return t.matmul(a, other); }},
      {"matmul_right", [&](Tape& t, const Tensor& a) { return t.matmul(left, a); }},
      {"transpose", [](Tape& t, const Tensor& a) { return t.transpose(a); }},
      {"add", [&](Tape& t, const Tensor& a) { return t.add(a, same); }},
      {"sub", [&](Tape& t, const Tensor& a) { return t.sub(same, a); }},
      {"mul", [&](Tape& t, const Tensor& a) { return t.mul(a, a); }},
      {"scale", [](Tape& t, const Tensor& a) { return t.scale(a, -2.5); }},
      {"scale_by", [&](Tape& t, const Tensor& a) { return t.scale_by(a, factor); }},
      {"scale_by_factor", [&](Tape& t, const Tensor& a) { return t.scale_by(same, t.slice(t.slice(a, 0, 1, 2), 1, 2, 3)); }},
      {"sigmoid", [](Tape& t, const Tensor& a) { return t.sigmoid(a); }},
      {"softmax_rows", [](Tape& t, const Tensor& a) { return t.softmax(a, 1); }},
      {"softmax_cols", [](Tape& t, const Tensor& a) { return t.softmax(a, 0); }},
      {"mean_rows", [](Tape& t, const Tensor& a) { return t.mean(a, 0); }},
      {"mean_cols", [](Tape& t, const Tensor& a) { return t.mean(a, 1); }},
      {"sum", [](Tape& t, const Tensor& a) { return t.sum(a); }},
      {"reshape", [](Tape& t, const Tensor& a) { return t.reshape(a, {6, 2}); }},
      {"concat", [&](Tape& t, const Tensor& a) {
         const std::vector<Tensor> parts{a, same, a};
         return t.concat(parts, 0);
       }},
      {"concat_cols", [&](Tape& t, const Tensor& a) {
         const std::vector<Tensor> parts{a, t.scale(a, 2.0)};
         return t.concat(parts, 1);
       }},
      {"slice", [](Tape& t, const Tensor& a) { return t.slice(a, 1, 1, 3); }},
      {"add_row", [&](Tape& t, const Tensor& a) { return t.add_row(a, row); }},
      {"add_row_grad_row", [&](Tape& t, const Tensor& a) { return t.add_row(same, t.slice(a, 0, 0, 1)); }},
      {"gather_rows", [&](Tape& t, const Tensor& a) { return t.gather_rows(a, idx); }},
      {"layer_norm", [&](Tape& t, const Tensor& a) { return t.layer_norm(a, gain, row, 1e-5); }},
      {"cross_entropy", [&](Tape& t, const Tensor& a) { return t.cross_entropy(a, labels); }},
  };
  for (const auto& [name, op] : ops) {
    EXPECT_LT(op_grad_error(op, x), 1e-6) << name;
  }
}

TEST(Autodiff, PiecewiseOpsAwayFromKinks) {
  Rng rng(2);
  // Entries bounded away from zero keep the finite differences on one piece.
  std::vector<double> v = rng.normal(12, 1.0);
  for (auto& e : v) e += e >= 0 ? 0.1 : -0.1;
  const Tensor x(Shape{3, 4}, v, TensorOptions{true, false, kCategoryInput});
  EXPECT_LT(op_grad_error([](Tape& t, const Tensor& a) { return t.relu(a); }, x), 1e-6);
  const Tensor pos = Tensor(Shape{3, 4}, [&] {
                       auto p = v;
                       for (auto& e : p) e = std::abs(e);
                       return p;
                     }(), TensorOptions{true, false, kCategoryInput});
  EXPECT_LT(op_grad_error([](Tape& t, const Tensor& a) { return t.l1_normalize(a, 1, 1e-12); }, pos),
            1e-6);
  EXPECT_LT(op_grad_error([](Tape& t, const Tensor& a) { return t.l1_normalize(a, 0, 1e-12); }, pos),
            1e-6);
}

TEST(Autodiff, L1NormalizeOracleAndZeroRow) {
  Tape tape;
  const Tensor x = Tensor::matrix({{1.0, -3.0, 1.0}, {0.0, 0.0, 0.0}});
  const Tensor y = tape.l1_normalize(tape.relu(x), 1, 1e-12);
  EXPECT_EQ(y.at(0, 0), 0.5);
  EXPECT_EQ(y.at(0, 1), 0.0);
  EXPECT_EQ(y.at(0, 2), 0.5);
  for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(y.at(1, c), 0.0);
}

TEST(Autodiff, SoftmaxStaysPositiveUnderUnderflow) {
  Tape tape;
  const Tensor y = tape.softmax(Tensor::matrix({{0.0, -2000.0, std::log(3.0)}}), 1);
  EXPECT_NEAR(y.at(0, 0), 0.25, 1e-15);
  EXPECT_EQ(y.at(0, 1), std::numeric_limits<double>::min());
  EXPECT_NEAR(y.at(0, 2), 0.75, 1e-15);
}

TEST(Autodiff, MatmulOracle) {
  Tape tape;
  const Tensor a = Tensor::matrix({{1, 2}, {3, 4}});
  const Tensor b = Tensor::matrix({{5, 6}, {7, 8}});
  const Tensor c = tape.matmul(a, b);
  EXPECT_EQ(c.at(0, 0), 19);
  EXPECT_EQ(c.at(0, 1), 22);
  EXPECT_EQ(c.at(1, 0), 43);
  EXPECT_EQ(c.at(1, 1), 50);
}

TEST(Autodiff, FiniteDiffGradOfQuadratic) {
  const Tensor x = Tensor::row({1.0, -2.0, 0.5});
  const Tensor g = finite_diff_grad(
      [](const Tensor& t) {
        double s = 0.0;
        for (double v : t.values()) s += v * v;
        return s;
      },
      x);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(g[i], 2.0 * x[i], 1e-8);
}

TEST(Ledger, MatmulChargesBothOperandsToTheirOwnCategories) {
  Rng rng(4);
  Tape tape;
  const Tensor a(Shape{2, 3}, rng.normal(6, 1.0), TensorOptions{true, false, kCategoryTap});
  const Tensor b(Shape{3, 5}, rng.normal(15, 1.0), TensorOptions{false, false, kCategoryInput});
  tape.matmul(a, b);
  EXPECT_EQ(tape.ledger().bytes(kCategoryTap), 6 * 8u);
  EXPECT_EQ(tape.ledger().bytes(kCategoryInput), 15 * 8u);
  EXPECT_EQ(tape.ledger().total_bytes(), 21 * 8u);
}

TEST(Ledger, ParametersAreNeverChargedAndOperandsOnce) {
  Rng rng(5);
  Tape tape;
  const Tensor w = Tensor::parameter({3, 3}, rng.normal(9, 1.0), true, kCategorySide);
  const Tensor x(Shape{2, 3}, rng.normal(6, 1.0), TensorOptions{false, false, kCategoryInput});
  const Tensor y = tape.matmul(x, w);
  tape.matmul(x, w);
  EXPECT_EQ(tape.ledger().total_bytes(), 6 * 8u);
  const std::size_t before = tape.ledger().total_bytes();
  tape.relu(y);  // sign mask in the current category
  EXPECT_EQ(tape.ledger().total_bytes(), before + 6 * 8u);
  EXPECT_EQ(tape.ledger().bytes(kCategorySide), 6 * 8u);
}

TEST(Ledger, CategoryScopeRoutesDerivedBuffers) {
  Rng rng(6);
  Tape tape;
  const Tensor x(Shape{4, 4}, rng.normal(16, 1.0), TensorOptions{true, false, kCategoryInput});
  {
    CategoryScope scope(tape, kCategoryBackbone);
    tape.softmax(x, 1);
  }
  EXPECT_EQ(tape.ledger().bytes(kCategoryBackbone), 16 * 8u);
  tape.sigmoid(x);
  EXPECT_EQ(tape.ledger().bytes(kCategorySide), 16 * 8u);
}

TEST(Ledger, InferenceScopeRecordsNothing) {
  Rng rng(7);
  Tape tape;
  const Tensor x(Shape{4, 4}, rng.normal(16, 1.0), TensorOptions{true, false, kCategoryInput});
  Tensor y;
  {
    InferenceScope frozen(tape);
    y = tape.relu(tape.matmul(x, x));
  }
  EXPECT_FALSE(y.requires_grad());
  EXPECT_TRUE(tape.records().empty());
  EXPECT_EQ(tape.ledger().total_bytes(), 0u);
}

TEST(Ledger, ResetClearsRecordsAndCharges) {
  Rng rng(8);
  Tape tape;
  const Tensor x(Shape{2, 2}, rng.normal(4, 1.0), TensorOptions{true, false, kCategoryInput});
  tape.matmul(x, x);
  tape.reset();
  EXPECT_EQ(tape.ledger().total_bytes(), 0u);
  EXPECT_TRUE(tape.records().empty());
}

TEST(Errors, ShapeMismatchNonFiniteAndDoubleBackward) {
  Tape tape;
  const Tensor a(Shape{2, 3}, std::vector<double>(6, 1.0), TensorOptions{true, false, kCategoryInput});
  try {
    tape.matmul(a, a);
    FAIL() << "expected a shape error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kShapeMismatch);
  }
  const Tensor big = Tensor::row({1e308, 1e308});
  try {
    tape.scale(big, 10.0);
    FAIL() << "expected a nonfinite error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNonFinite);
  }
  const Tensor loss = tape.sum(a);
  tape.backward(loss);
  try {
    tape.backward(loss);
    FAIL() << "expected a state error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kState);
  }
}

TEST(Autodiff, UnreachedLeavesGetZeroGradients) {
  Tape tape;
  const Tensor a(Shape{1, 2}, {1.0, 2.0}, TensorOptions{true, false, kCategoryInput});
  const Tensor b(Shape{1, 2}, {3.0, -4.0}, TensorOptions{true, false, kCategoryInput});
  const Tensor loss = tape.sum(tape.relu(tape.add(tape.scale(a, 0.0), b)));
  const GradMap g = tape.backward(loss);
  EXPECT_EQ(g.grad(b)[0], 1.0);
  EXPECT_EQ(g.grad(b)[1], 0.0);
  EXPECT_EQ(g.grad(a)[0], 0.0);
}

}  // namespace
}  // namespace unipt
