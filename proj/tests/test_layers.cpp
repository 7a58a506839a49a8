// Copyright 2026 The UniPT Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <algorithm>
#include <numeric>
#include <sstream>

#include "gradcheck.hpp"
#include "unipt/checkpoint.hpp"
#include "unipt/error.hpp"
#include "unipt/layers.hpp"

namespace unipt {
namespace {

std::vector<Tensor> random_taps(const std::vector<std::size_t>& dims, std::size_t rows, Rng& rng,
                                double scale = 1.0) {
  std::vector<Tensor> taps;
  for (auto d : dims) {
    taps.emplace_back(Shape{rows, d}, rng.normal(rows * d, scale),
                      TensorOptions{false, false, kCategoryTap});
  }
  return taps;
}

UniPTConfig small_config() {
  UniPTConfig c;
  c.output_dim = 8;
  c.reduction = 2;
  c.tap_dims = {8, 8, 8, 8};  // N = 3
  c.init_scale = 0.3;
  c.mlp_init_factor = 1.0;
  return c;
}

Tensor permute_rows(const Tensor& x, const std::vector<std::size_t>& perm) {
  std::vector<double> out(x.size());
  const std::size_t cols = x.cols();
  for (std::size_t r = 0; r < perm.size(); ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = x.at(perm[r], c);
  }
  return Tensor(x.shape(), std::move(out), TensorOptions{false, false, x.category()});
}

TEST(Interaction, OracleTwoByTwo) {
  Tape tape;
  const Tensor q = Tensor::matrix({{1, 0}, {0, 1}});
  const Tensor k = Tensor::matrix({{2, 0}, {0, 4}});
  const Tensor out = interact(tape, q, k, 1e-12);
  EXPECT_EQ(out.at(0, 0), 4.0);
  EXPECT_EQ(out.at(0, 1), 0.0);
  EXPECT_EQ(out.at(1, 0), 0.0);
  EXPECT_EQ(out.at(1, 1), 8.0);
}

TEST(Interaction, ConfidenceOracle) {
  Tape tape;
  const Tensor q = Tensor::matrix({{1.0}});
  const std::vector<Tensor> keys{Tensor::matrix({{std::log(3.0)}}), Tensor::matrix({{0.0}})};
  const Tensor c = confidence_weights(tape, keys, q, Tensor::matrix({{1.0}}));
  EXPECT_NEAR(c[0], 0.75, 1e-15);
  EXPECT_NEAR(c[1], 0.25, 1e-15);
}

TEST(Interaction, AggregateOracle) {
  UniPTHead head;
  head.w1 = Tensor::matrix({{1.0}});
  head.w2 = Tensor::matrix({{1.0}});
  Tape tape;
  const std::vector<Tensor> blended{Tensor::matrix({{4.0}}), Tensor::matrix({{8.0}})};
  const Tensor out = aggregate(tape, Tensor::row({0.75, 0.25}), blended,
                               Tensor::matrix({{2.0}}), head);
  EXPECT_EQ(out.item(), 7.0);
}

TEST(Interaction, RowStochasticPlusIdentityProperty) {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t k = 1 + rng.next() % 7, d = 1 + rng.next() % 6;
    const Tensor q(Shape{k, d}, rng.normal(k * d, 1.0));
    const Tensor keys(Shape{k, d}, rng.normal(k * d, 1.0));
    Tape tape;
    const Tensor m = interaction_matrix(tape, q, keys, 1e-12);
    for (std::size_t r = 0; r < k; ++r) {
      double sum = 0.0;
      for (std::size_t c = 0; c < k; ++c) {
        const double e = m.at(r, c) - (r == c ? 1.0 : 0.0);
        EXPECT_GE(e, 0.0);
        sum += e;
      }
      EXPECT_TRUE(sum == 0.0 || std::abs(sum - 1.0) <= 1e-9) << sum;
    }
  }
}

TEST(Interaction, AllNegativeInnerProductsReturnKeysExactly) {
  Rng rng(12);
  std::vector<double> kv = rng.normal(20, 1.0), qv = rng.normal(20, 1.0);
  for (auto& v : kv) v = std::abs(v) + 0.01;
  for (auto& v : qv) v = -std::abs(v) - 0.01;
  const Tensor keys(Shape{4, 5}, kv), q(Shape{4, 5}, qv);
  Tape tape;
  EXPECT_TRUE(bitwise_equal(interact(tape, q, keys, 1e-12), keys));
}

TEST(Interaction, ScaleRobustUnlikeSoftmax) {
  Rng rng(13);
  std::vector<double> kv = rng.normal(32, 1.0);
  for (auto& v : kv) v *= 1e3;
  const Tensor keys(Shape{4, 8}, kv);
  const Tensor q(Shape{4, 8}, rng.normal(32, 1e3));
  Tape tape;
  const Tensor m = interaction_matrix(tape, q, keys, 1e-12);
  for (std::size_t r = 0; r < 4; ++r) {
    double sum = 0.0;
    for (std::size_t c = 0; c < 4; ++c) sum += m.at(r, c) - (r == c ? 1.0 : 0.0);
    EXPECT_TRUE(sum == 0.0 || std::abs(sum - 1.0) <= 1e-9);
  }
  // Unnormalized exponentials of the same scores overflow.
  const Tensor scores = tape.matmul(q, tape.transpose(keys));
  bool overflow = false;
  for (double s : scores.values()) overflow = overflow || !std::isfinite(std::exp(s));
  EXPECT_TRUE(overflow);
}

TEST(Confidence, SumsToOneStrictlyPositiveAndSingleLayer) {
  Rng rng(14);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.next() % 6, d = 1 + rng.next() % 5, k = 1 + rng.next() % 4;
    std::vector<Tensor> keys;
    for (std::size_t i = 0; i < n; ++i) keys.emplace_back(Shape{k, d}, rng.normal(k * d, 2.0));
    const Tensor q(Shape{k, d}, rng.normal(k * d, 2.0));
    const Tensor w3(Shape{d, 1}, rng.normal(d, 2.0));
    Tape tape;
    const Tensor c = confidence_weights(tape, keys, q, w3);
    double sum = 0.0;
    for (double v : c.values()) {
      EXPECT_GT(v, 0.0);
      sum += v;
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
    if (n == 1) {
      EXPECT_EQ(c[0], 1.0);
    }
  }
}

TEST(Head, ZeroMlpReturnsResidual) {
  Rng rng(15);
  UniPTHead head = UniPTHead::init(small_config(), rng);
  head.w1 = Tensor::zeros(head.w1.shape());
  head.w2 = Tensor::zeros(head.w2.shape());
  const auto taps = random_taps(head.config.tap_dims, 4, rng);
  Tape tape;
  const ProjectedTaps f = project_taps(tape, taps, head);
  const Tensor c = confidence_weights(tape, f, head);
  std::vector<Tensor> blended;
  for (std::size_t i = 0; i < f.last_index(); ++i) {
    blended.push_back(interact(tape, f.last(), f.layers[i], 1e-12));
  }
  EXPECT_TRUE(bitwise_equal(aggregate(tape, c, blended, f.last(), head), f.last()));
}

TEST(Head, ParameterCountMatchesFormula) {
  Rng rng(16);
  UniPTConfig c = small_config();
  c.tap_dims = {8, 12, 16, 8};
  const UniPTHead head = UniPTHead::init(c, rng);
  EXPECT_EQ(head.parameter_count(), analytic_parameter_count(c));
  std::size_t visited = 0;
  UniPTHead copy = head;
  copy.visit([&](const std::string&, Tensor& p) { visited += p.size(); });
  EXPECT_EQ(visited, analytic_parameter_count(c));
}

TEST(Head, ConfigValidationNamesValues) {
  UniPTConfig c = small_config();
  c.reduction = 3;
  try {
    c.validate();
    FAIL();
  } catch (const Error& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find('3'), std::string::npos);
    EXPECT_NE(msg.find('8'), std::string::npos);
  }
  c = small_config();
  c.tap_dims = {8};
  EXPECT_THROW(c.validate(), Error);
}

TEST(Head, JointRowPermutationEquivariance) {
  Rng rng(17);
  const UniPTHead head = UniPTHead::init(small_config(), rng);
  for (int trial = 0; trial < 20; ++trial) {
    const auto taps = random_taps(head.config.tap_dims, 6, rng);
    std::vector<std::size_t> perm(6);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng.engine());
    std::vector<Tensor> permuted;
    for (const auto& t : taps) permuted.push_back(permute_rows(t, perm));
    Tape tape;
    const Tensor out = unipt_forward(tape, taps, head);
    const Tensor out_p = unipt_forward(tape, permuted, head);
    EXPECT_LE(max_abs_diff(permute_rows(out, perm), out_p), 1e-9);
  }
}

TEST(Head, EveryParameterGradientMatchesFiniteDifferences) {
  Rng rng(18);
  UniPTHead head = UniPTHead::init(small_config(), rng);
  const auto taps = random_taps(head.config.tap_dims, 4, rng);
  const Tensor w(Shape{4, 8}, rng.normal(32, 1.0));
  auto loss_of = [&](const UniPTHead& h, Tape& tape) {
    return tape.sum(tape.mul(unipt_forward(tape, taps, h), w));
  };
  Tape tape;
  const GradMap grads = tape.backward(loss_of(head, tape));
  const std::uint64_t base_kink = tape.kink_signature();
  std::size_t checked = 0;
  double worst = 0.0;
  head.visit([&](const std::string& name, Tensor& p) {
    const Tensor analytic = grads.grad(p);
    const Tensor original = p;
    bool kinked = false;
    const Tensor numeric = finite_diff_grad(
        [&](const Tensor& at) {
          p = original.with_values({at.values().begin(), at.values().end()});
          Tape t;
          const double f = loss_of(head, t).item();
          kinked = kinked || t.kink_signature() != base_kink;
          p = original;
          return f;
        },
        original);
    ASSERT_FALSE(kinked) << name << " straddles a kink";
    for (std::size_t i = 0; i < p.size(); ++i) {
      worst = std::max(worst, testing::rel_error(analytic[i], numeric[i]));
      ++checked;
    }
  });
  EXPECT_EQ(checked, head.parameter_count());
  EXPECT_LT(worst, 1e-4);
}

TEST(Head, ExcludingEmbeddingsDropsFirstKey) {
  Rng rng(19);
  UniPTConfig c = small_config();
  c.include_embeddings = false;
  const UniPTHead head = UniPTHead::init(c, rng);
  auto taps = random_taps(c.tap_dims, 4, rng);
  Tape tape;
  const Tensor a = unipt_forward(tape, taps, head);
  taps[0] = Tensor(taps[0].shape(), rng.normal(taps[0].size(), 5.0));
  EXPECT_TRUE(bitwise_equal(a, unipt_forward(tape, taps, head)));
}

TEST(Guidance, SelfOverrideEqualsBaselineExactly) {
  Rng rng(20);
  const UniPTHead head = UniPTHead::init(small_config(), rng);
  const auto taps = random_taps(head.config.tap_dims, 5, rng);
  Tape tape;
  const Tensor base = unipt_forward(tape, taps, head);
  EXPECT_TRUE(bitwise_equal(base, guidance_override(tape, taps, head, taps.back(), nullptr)));
}

TEST(Guidance, ExternalQueryWidthIsChecked) {
  Rng rng(21);
  UniPTConfig c = small_config();
  const UniPTHead head = UniPTHead::init(c, rng);
  const auto taps = random_taps(c.tap_dims, 4, rng);
  const Tensor guide(Shape{4, 12}, rng.normal(48, 1.0));
  Tape tape;
  EXPECT_THROW(guidance_override(tape, taps, head, guide, nullptr), Error);
  const GuidanceProjection proj = GuidanceProjection::init(12, c, rng);
  const Tensor out = guidance_override(tape, taps, head, guide, &proj);
  EXPECT_EQ(out.shape(), (Shape{4, 8}));
}

TEST(Checkpoint, RoundTripRestoresEveryParameter) {
  Rng rng(22);
  UniPTHead head = UniPTHead::init(small_config(), rng);
  const NamedTensors saved = collect_parameters([&](const ParamVisitor& fn) { head.visit(fn); });
  std::stringstream buffer;
  write_checkpoint(buffer, saved);
  Rng other(99);
  UniPTHead fresh = UniPTHead::init(small_config(), other);
  restore_parameters([&](const ParamVisitor& fn) { fresh.visit(fn); }, read_checkpoint(buffer));
  const NamedTensors restored = collect_parameters([&](const ParamVisitor& fn) { fresh.visit(fn); });
  ASSERT_EQ(saved.size(), restored.size());
  for (std::size_t i = 0; i < saved.size(); ++i) {
    EXPECT_EQ(saved[i].first, restored[i].first);
    EXPECT_TRUE(bitwise_equal(saved[i].second, restored[i].second));
    EXPECT_TRUE(restored[i].second.requires_grad());
  }
  EXPECT_EQ(saved.front().first, "down_proj.0.weight");
}

TEST(Checkpoint, RejectsMismatchesAndCorruption) {
  Rng rng(23);
  UniPTHead head = UniPTHead::init(small_config(), rng);
  NamedTensors saved = collect_parameters([&](const ParamVisitor& fn) { head.visit(fn); });
  NamedTensors missing(saved.begin() + 1, saved.end());
  EXPECT_THROW(restore_parameters([&](const ParamVisitor& fn) { head.visit(fn); }, missing), Error);
  NamedTensors wrong = saved;
  wrong[0].second = Tensor::zeros({1, 1});
  EXPECT_THROW(restore_parameters([&](const ParamVisitor& fn) { head.visit(fn); }, wrong), Error);
  std::stringstream bad("NOTACKPT");
  EXPECT_THROW(read_checkpoint(bad), Error);
  std::stringstream full;
  write_checkpoint(full, saved);
  std::string bytes = full.str();
  std::stringstream truncated(bytes.substr(0, bytes.size() / 2));
  EXPECT_THROW(read_checkpoint(truncated), Error);
}

}  // namespace
}  // namespace unipt
