// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <numeric>

#include "mgt/attention.hpp"
#include "mgt/error.hpp"
#include "mgt/gradcheck.hpp"
#include "mgt/mask.hpp"
#include "oracles.hpp"

using namespace mgt;

namespace {

GraphMask random_mask(std::size_t n, Rng& rng, double p_open = 0.5) {
  GraphMask m(n);
  for (std::size_t q = 0; q < n; ++q)
    for (std::size_t k = 0; k < n; ++k) m.set_open(q, k, q == k || rng.bernoulli(p_open));
  return m;
}

Tensor run(QuasiAttention& attn, const Tensor& h, const Tensor* mask, AttentionWeights* w = nullptr) {
  Tape tape;
  return attn.forward(tape, tape.constant(h), mask, nullptr, w).value();
}

void randomize_bias(QuasiAttention& attn, Rng& rng) {
  for (auto& v : attn.graph_bias.value.values()) v = rng.uniform(-2.0, 2.0);
}

}  // namespace

TEST(Project, IdentityQueriesEqualInput) {
  Rng rng(1);
  QuasiAttention attn("a.", 3, 1, 8, 1.0, rng);
  attn.w_q.value = Tensor::identity(3);
  const Tensor h = oracle::random_tensor({4, 3}, rng);
  Tape tape;
  const auto p = attn.project(tape, tape.constant(h));
  ASSERT_EQ(p.q.size(), 1u);
  EXPECT_EQ(p.q[0].value(), h);
}

TEST(Project, HeadsTakeContiguousColumns) {
  Rng rng(2);
  QuasiAttention attn("a.", 4, 2, 8, 1.0, rng);
  const Tensor h = oracle::random_tensor({3, 4}, rng);
  const Tensor full = oracle::naive_matmul(h, attn.w_k.value);
  Tape tape;
  const auto p = attn.project(tape, tape.constant(h));
  ASSERT_EQ(p.k.size(), 2u);
  for (std::size_t head = 0; head < 2; ++head)
    for (std::size_t r = 0; r < 3; ++r)
      for (std::size_t c = 0; c < 2; ++c) EXPECT_NEAR(p.k[head].value()(r, c), full(r, head * 2 + c), 1e-15);
}

TEST(Project, ZeroInputGivesZeroProjections) {
  Rng rng(3);
  QuasiAttention attn("a.", 4, 2, 8, 1.0, rng);
  Tape tape;
  const auto p = attn.project(tape, tape.constant(Tensor({3, 4})));
  for (const auto* group : {&p.q, &p.k, &p.v})
    for (const auto& v : *group) EXPECT_EQ(v.value().max_abs(), 0.0);
}

TEST(Project, LongerThanMaxLenIsCapacityError) {
  Rng rng(4);
  QuasiAttention attn("a.", 4, 2, 3, 1.0, rng);
  Tape tape;
  EXPECT_THROW(attn.project(tape, tape.constant(Tensor({4, 4}))), CapacityError);
}

TEST(QuasiAttention, HandComputedExample) {
  Rng rng(5);
  QuasiAttention attn("a.", 1, 1, 4, 0.0, rng);
  for (auto* p : {&attn.w_q, &attn.w_k, &attn.w_v, &attn.w_o}) p->value = Tensor::matrix({{1}});
  const Tensor g = Tensor::matrix({{0, kNegInf}, {0, 0}});
  AttentionWeights w;
  const Tensor out = run(attn, Tensor::matrix({{1}, {0}}), &g, &w);
  EXPECT_EQ(w[0], Tensor::matrix({{1, 0}, {0.5, 0.5}}));
  EXPECT_EQ(out, Tensor::matrix({{1}, {0.5}}));
}

TEST(QuasiAttention, ConfigValidation) {
  Rng rng(6);
  EXPECT_THROW(QuasiAttention("a.", 6, 4, 8, 1.0, rng), ConfigError);
  EXPECT_THROW(QuasiAttention("a.", 4, 2, 0, 1.0, rng), ConfigError);
  EXPECT_THROW(QuasiAttention("a.", 4, 2, 8, -1.0, rng), ConfigError);
}

TEST(QuasiAttention, MaskSizeMismatchIsDimensionError) {
  Rng rng(7);
  QuasiAttention attn("a.", 4, 2, 8, 1.0, rng);
  const Tensor g = GraphMask::all_open(2).additive();
  EXPECT_THROW(run(attn, Tensor({3, 4}), &g), DimensionError);
}

TEST(QuasiAttention, ReducesToVanillaAttention) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed);
    const std::size_t heads = 1 + rng.below(4);
    const std::size_t d = heads * (1 + rng.below(8 / heads + 1));
    const std::size_t len = 1 + rng.below(16);
    QuasiAttention attn("a.", d, heads, 16, 0.0, rng);
    randomize_bias(attn, rng);
    const Tensor h = oracle::random_tensor({len, d}, rng);
    const Tensor open = GraphMask::all_open(len).additive();
    const Tensor quasi = run(attn, h, &open);
    const Tensor ref = oracle::vanilla_attention(h, attn.w_q.value, attn.w_k.value, attn.w_v.value, attn.w_o.value,
                                                 heads);
    EXPECT_LE(max_abs_diff(quasi, ref), 1e-12) << "seed " << seed;
    EXPECT_TRUE(oracle::bitwise_equal(quasi, run(attn, h, nullptr))) << "seed " << seed;
  }
}

TEST(QuasiAttention, MaskedMatchesLoopOracle) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    QuasiAttention attn("a.", 8, 2, 16, 0.0, rng);
    const std::size_t len = 2 + rng.below(10);
    const GraphMask m = random_mask(len, rng);
    const Tensor h = oracle::random_tensor({len, 8}, rng);
    const Tensor g = m.additive();
    const Tensor ref = oracle::attention(h, attn.w_q.value, attn.w_k.value, attn.w_v.value, attn.w_o.value, 2,
                                         [&](std::size_t q, std::size_t k) { return !m.open(q, k); });
    EXPECT_LE(max_abs_diff(run(attn, h, &g), ref), 1e-12);
  }
}

TEST(QuasiAttention, BlockedCellsHaveZeroWeightForAnyBias) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    Rng rng(seed);
    QuasiAttention attn("a.", 8, 4, 12, rng.uniform(0.0, 5.0), rng);
    randomize_bias(attn, rng);
    const std::size_t len = 1 + rng.below(12);
    const GraphMask m = random_mask(len, rng, 0.3);
    const Tensor g = m.additive();
    AttentionWeights w;
    run(attn, oracle::random_tensor({len, 8}, rng, 3.0), &g, &w);
    ASSERT_EQ(w.size(), 4u);
    for (const auto& head : w)
      for (std::size_t q = 0; q < len; ++q) {
        double sum = 0.0;
        for (std::size_t k = 0; k < len; ++k) {
          if (!m.open(q, k)) { EXPECT_EQ(head(q, k), 0.0); }
          sum += head(q, k);
        }
        EXPECT_NEAR(sum, 1.0, 1e-12);
      }
  }
}

TEST(QuasiAttention, BlockedInputsCannotInfluenceQuery) {
  Rng rng(8);
  QuasiAttention attn("a.", 8, 2, 8, 1.0, rng);
  randomize_bias(attn, rng);
  GraphMask m = GraphMask::all_open(5);
  m.set_open(1, 3, false);
  const Tensor g = m.additive();
  Tensor h = oracle::random_tensor({5, 8}, rng);
  const Tensor before = run(attn, h, &g);
  for (std::size_t c = 0; c < 8; ++c) h(3, c) += rng.uniform(-10, 10);
  const Tensor after = run(attn, h, &g);
  for (std::size_t c = 0; c < 8; ++c) EXPECT_EQ(before(1, c), after(1, c));
  EXPECT_NE(before(0, 0), after(0, 0));
}

TEST(QuasiAttention, BiasMovesOpenWeightMonotonically) {
  Rng rng(9);
  QuasiAttention attn("a.", 4, 2, 6, 0.7, rng);
  const Tensor h = oracle::random_tensor({4, 4}, rng);
  const Tensor g = GraphMask::all_open(4).additive();
  double prev = -1.0;
  for (double b = -3.0; b <= 3.0; b += 0.5) {
    attn.graph_bias.value(1, 2, 3) = b;
    AttentionWeights w;
    run(attn, h, &g, &w);
    EXPECT_GT(w[1](2, 3), prev);
    prev = w[1](2, 3);
  }
}

TEST(QuasiAttention, ZeroBiasEqualsMaskOnlyAttention) {
  Rng r1(10), r2(10);
  QuasiAttention with_bias("a.", 8, 4, 10, 1.0, r1);
  QuasiAttention mask_only("a.", 8, 4, 10, 0.0, r2);
  Rng rng(99);
  const Tensor g = random_mask(7, rng).additive();
  const Tensor h = oracle::random_tensor({7, 8}, rng);
  EXPECT_EQ(with_bias.graph_bias.value.max_abs(), 0.0);
  EXPECT_TRUE(oracle::bitwise_equal(run(with_bias, h, &g), run(mask_only, h, &g)));
}

TEST(QuasiAttention, PermutationEquivariance) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    const std::size_t len = 6;
    QuasiAttention attn("a.", 8, 2, len, 1.0, rng);
    randomize_bias(attn, rng);
    const GraphMask m = random_mask(len, rng);
    const Tensor h = oracle::random_tensor({len, 8}, rng);
    std::vector<std::size_t> pi(len);
    std::iota(pi.begin(), pi.end(), std::size_t{0});
    rng.shuffle(pi.begin(), pi.end());

    Tensor hp({len, 8});
    GraphMask mp(len);
    QuasiAttention permuted = attn;
    for (std::size_t i = 0; i < len; ++i) {
      for (std::size_t c = 0; c < 8; ++c) hp(i, c) = h(pi[i], c);
      for (std::size_t j = 0; j < len; ++j) {
        mp.set_open(i, j, m.open(pi[i], pi[j]));
        for (std::size_t head = 0; head < 2; ++head)
          permuted.graph_bias.value(head, i, j) = attn.graph_bias.value(head, pi[i], pi[j]);
      }
    }
    const Tensor g = m.additive(), gp = mp.additive();
    const Tensor out = run(attn, h, &g);
    const Tensor outp = run(permuted, hp, &gp);
    for (std::size_t i = 0; i < len; ++i)
      for (std::size_t c = 0; c < 8; ++c) EXPECT_NEAR(outp(i, c), out(pi[i], c), 1e-12);
  }
}

TEST(QuasiAttention, BiasGetsGradientAndMaskDoesNot) {
  Rng rng(11);
  QuasiAttention attn("a.", 4, 2, 5, 1.0, rng);
  const Tensor g = random_mask(5, rng).additive();
  Tape tape;
  Var gm = tape.constant(g);
  const Tensor mask = tape.value(gm);
  Var out = attn.forward(tape, tape.constant(oracle::random_tensor({5, 4}, rng)), &mask);
  tape.backward(weighted_sum(out, oracle::random_tensor({5, 4}, rng)));
  EXPECT_GT(attn.graph_bias.grad.max_abs(), 0.0);
  EXPECT_FALSE(tape.has_grad(gm));
  // Blocked cells and rows beyond L receive nothing
  for (std::size_t head = 0; head < 2; ++head)
    for (std::size_t q = 0; q < 5; ++q)
      for (std::size_t k = 0; k < 5; ++k)
        if (std::isinf(g(q, k))) { EXPECT_EQ(attn.graph_bias.grad(head, q, k), 0.0); }
}

TEST(QuasiAttention, GradientCheckWithHalfLambda) {
  Rng rng(12);
  QuasiAttention attn("a.", 4, 2, 6, 0.5, rng);
  randomize_bias(attn, rng);
  const Tensor g = random_mask(5, rng).additive();
  const Tensor h = oracle::random_tensor({5, 4}, rng);
  const Tensor w = oracle::random_tensor({5, 4}, rng);
  const auto params = attn.parameters();
  const auto report = gradient_check(
      [&](Tape& t) { return weighted_sum(attn.forward(t, t.constant(h), &g), w); }, params, 1e-5);
  EXPECT_LT(report.max_rel_error, 1e-4) << report.worst_param << "[" << report.worst_index << "]";
}

TEST(TransformerLayer, ZeroBranchesGiveIdentity) {
  Rng rng(13);
  TransformerLayer layer("l.", 8, 2, 16, 6, 1.0, rng);
  layer.attention.w_o.value.fill(0.0);
  layer.ffn_w2.value.fill(0.0);
  layer.ffn_b2.value.fill(0.0);
  const Tensor h = oracle::random_tensor({5, 8}, rng);
  const Tensor g = random_mask(5, rng).additive();
  Tape tape;
  EXPECT_EQ(layer.forward(tape, tape.constant(h), &g).value(), h);
}

TEST(TransformerLayer, GradientCheck) {
  Rng rng(14);
  TransformerLayer layer("l.", 4, 2, 6, 5, 1.0, rng);
  randomize_bias(layer.attention, rng);
  const Tensor g = random_mask(4, rng).additive();
  const Tensor h = oracle::random_tensor({4, 4}, rng);
  const Tensor w = oracle::random_tensor({4, 4}, rng);
  const auto params = layer.parameters();
  const auto report = gradient_check(
      [&](Tape& t) { return weighted_sum(layer.forward(t, t.constant(h), &g), w); }, params, 1e-5);
  EXPECT_LT(report.max_rel_error, 1e-4) << report.worst_param << "[" << report.worst_index << "]";
}

TEST(TransformerLayer, SingleTokenAttendsToItself) {
  Rng rng(15);
  TransformerLayer layer("l.", 4, 2, 8, 4, 1.0, rng);
  randomize_bias(layer.attention, rng);
  const Tensor g = Tensor::matrix({{0}});
  AttentionWeights w;
  Tape tape;
  layer.forward(tape, tape.constant(oracle::random_tensor({1, 4}, rng)), &g, nullptr, &w);
  for (const auto& head : w) EXPECT_EQ(head, Tensor::matrix({{1}}));
}

TEST(TransformerLayer, ParameterNames) {
  Rng rng(16);
  TransformerLayer layer("layers.0.", 4, 2, 8, 4, 1.0, rng);
  std::vector<std::string> names;
  for (auto* p : layer.parameters()) names.push_back(p->name);
  EXPECT_EQ(names, (std::vector<std::string>{"layers.0.ln1.gain", "layers.0.ln1.bias", "layers.0.attn.w_q",
                                             "layers.0.attn.w_k", "layers.0.attn.w_v", "layers.0.attn.w_o",
                                             "layers.0.attn.graph_bias", "layers.0.ln2.gain", "layers.0.ln2.bias",
                                             "layers.0.ffn.w1", "layers.0.ffn.b1", "layers.0.ffn.w2",
                                             "layers.0.ffn.b2"}));
}
