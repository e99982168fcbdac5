// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <numeric>

#include "mgt/error.hpp"
#include "mgt/gradcheck.hpp"
#include "mgt/language.hpp"
#include "mgt/model.hpp"
#include "mgt/trainer.hpp"
#include "oracles.hpp"

using namespace mgt;

namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.d_model = 8;
  c.heads = 2;
  c.num_layers = 2;
  c.d_ff = 12;
  c.max_len = 12;
  c.answer_vocab_size = 3;
  c.text_vocab_size = 10;
  c.patch_input_dim = 4;
  c.seed = 5;
  return c;
}

PatchGrid grid_of(std::size_t n, Rng& rng) {
  return patchify(oracle::random_tensor({2 * n, 2, 1}, rng), 2);
}

Graph path_graph(std::size_t n) {
  Graph g(n);
  for (std::size_t i = 0; i + 1 < n; ++i) g.add_edge(i, i + 1);
  return g;
}

std::size_t closed_form_count(const ModelConfig& c) {
  const std::size_t d = c.d_model;
  const std::size_t embed = c.text_vocab_size * d + c.patch_input_dim * d + c.max_len * d + 3 * d;
  const std::size_t bias = c.heads * c.max_len * c.max_len;
  const std::size_t layer = 4 * d + 4 * d * d + d * c.d_ff + c.d_ff + c.d_ff * d + d;
  const std::size_t head = 2 * d + d * c.answer_vocab_size + c.answer_vocab_size;
  return embed + c.num_layers * layer + (c.share_graph_bias ? bias : c.num_layers * bias) + head;
}

}  // namespace

TEST(ModelConfig, Validation) {
  ModelConfig c;
  EXPECT_NO_THROW(c.validate());
  c.heads = 5;
  EXPECT_THROW(c.validate(), ConfigError);
  c = ModelConfig{};
  c.num_layers = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = ModelConfig{};
  c.lambda = -0.5;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(ModelConfig, JsonRoundTrip) {
  ModelConfig c = small_config();
  c.share_graph_bias = true;
  c.connectivity = Connectivity::grid4(3, 3);
  c.attention = AttentionKind::vanilla;
  EXPECT_EQ(ModelConfig::from_json(nlohmann::json::parse(c.to_json().dump())), c);
}

TEST(Model, ParameterCountIsClosedForm) {
  EXPECT_EQ(MultimodalEncoder(ModelConfig{}).parameter_count(), 54500u);
  for (bool share : {false, true}) {
    ModelConfig c = small_config();
    c.share_graph_bias = share;
    EXPECT_EQ(MultimodalEncoder(c).parameter_count(), closed_form_count(c));
  }
}

TEST(Model, ParameterNamesAreUnique) {
  MultimodalEncoder m(ModelConfig{});
  std::set<std::string> names;
  for (const auto* p : m.parameters()) EXPECT_TRUE(names.insert(p->name).second) << p->name;
  EXPECT_NE(m.find_parameter("layers.1.attn.graph_bias"), nullptr);
  EXPECT_EQ(m.find_parameter("nope"), nullptr);
}

TEST(Model, EmbedSpansTileSequence) {
  MultimodalEncoder m(small_config());
  Rng rng(1);
  Tape tape;
  const std::vector<std::size_t> ids{1, 2, 3};
  const Embedded e = m.embed_inputs(tape, grid_of(4, rng), ids);
  EXPECT_EQ(e.hidden.shape(), (Shape{8, 8}));
  EXPECT_EQ(e.spans, (std::vector<ModalSpan>{{Modality::special, 0, 1}, {Modality::vision, 1, 4},
                                             {Modality::text, 5, 3}}));
  EXPECT_EQ(validate_spans(e.spans), 8u);
}

TEST(Model, EmbedWithoutPatches) {
  MultimodalEncoder m(small_config());
  Tape tape;
  const std::vector<std::size_t> ids{4};
  const Embedded e = m.embed_inputs(tape, PatchGrid{}, ids);
  EXPECT_EQ(e.hidden.shape(), (Shape{2, 8}));
  EXPECT_EQ(e.spans[1].length, 0u);
}

TEST(Model, ZeroContentLeavesPositionAndTypeEmbeddings) {
  MultimodalEncoder m(small_config());
  m.token_embedding.value.fill(0.0);
  m.patch_projection.value.fill(0.0);
  Rng rng(2);
  Tape tape;
  const std::vector<std::size_t> ids{1, 2};
  const Embedded e = m.embed_inputs(tape, grid_of(3, rng), ids);
  const std::vector<std::size_t> types{2, 0, 0, 0, 1, 1};
  for (std::size_t r = 0; r < 6; ++r)
    for (std::size_t c = 0; c < 8; ++c)
      EXPECT_EQ(e.hidden.value()(r, c), m.position_embedding.value(r, c) + m.modality_embedding.value(types[r], c));
}

TEST(Model, CapacityAndIndexErrors) {
  MultimodalEncoder m(small_config());
  Rng rng(3);
  Tape tape;
  const std::vector<std::size_t> many(8, 1);
  EXPECT_THROW(m.embed_inputs(tape, grid_of(4, rng), many), CapacityError);
  const std::vector<std::size_t> bad{10};
  EXPECT_THROW(m.forward(tape, PatchGrid{}, bad, GraphMask::all_open(2)), IndexError);
  const std::vector<std::size_t> ok{1};
  EXPECT_THROW(m.forward(tape, PatchGrid{}, ok, GraphMask::all_open(3)), DimensionError);
}

TEST(Model, MisalignedGraphNamesModality) {
  MultimodalEncoder m(small_config());
  Rng rng(4);
  Tape tape;
  const std::vector<std::size_t> ids{1, 2, 3};
  try {
    m.encode_classify(tape, grid_of(2, rng), ids, Graph::complete(2), path_graph(2));
    FAIL();
  } catch (const AlignmentError& e) {
    EXPECT_NE(std::string(e.what()).find("text"), std::string::npos);
  }
  try {
    m.encode_classify(tape, grid_of(2, rng), ids, Graph::complete(3), path_graph(3));
    FAIL();
  } catch (const AlignmentError& e) {
    EXPECT_NE(std::string(e.what()).find("vision"), std::string::npos);
  }
}

TEST(Model, LogitsShapeAndDeterminism) {
  MultimodalEncoder m(small_config());
  MultimodalEncoder twin(small_config());
  Rng rng(5);
  const PatchGrid g = grid_of(3, rng);
  const std::vector<std::size_t> ids{1, 5, 7, 2};
  Tape t1, t2;
  const Tensor a = m.encode_classify(t1, g, ids, Graph::complete(3), path_graph(4)).value();
  const Tensor b = twin.encode_classify(t2, g, ids, Graph::complete(3), path_graph(4)).value();
  EXPECT_EQ(a.size(), 3u);
  EXPECT_TRUE(oracle::bitwise_equal(a, b));
}

TEST(Model, CompleteGraphsWithZeroLambdaMatchVanilla) {
  ModelConfig qc = small_config();
  qc.lambda = 0.0;
  ModelConfig vc = qc;
  vc.attention = AttentionKind::vanilla;
  MultimodalEncoder quasi(qc), vanilla(vc);
  Rng rng(6);
  for (auto* p : quasi.parameters())
    if (p->name.ends_with("graph_bias"))
      for (auto& v : p->value.values()) v = rng.uniform(-1, 1);
  const PatchGrid g = grid_of(3, rng);
  const std::vector<std::size_t> ids{1, 5, 7};
  const std::vector<ModalSpan> spans{{Modality::special, 0, 1}, {Modality::vision, 1, 3}, {Modality::text, 4, 3}};
  Tape t1, t2;
  const Tensor a = quasi.encode_classify(t1, g, ids, Graph::complete(3), Graph::complete(3)).value();
  const Tensor b = vanilla.forward(t2, g, ids, GraphMask::all_open(7)).value();
  EXPECT_TRUE(oracle::bitwise_equal(a, b));
}

TEST(Model, TextPermutationWithPositionsGivesSameLogits) {
  MultimodalEncoder m(small_config());
  Rng rng(7);
  const PatchGrid g = grid_of(2, rng);
  const std::vector<std::size_t> ids{1, 5, 7, 2, 9};
  Graph tg(5);
  tg.add_edge(0, 2);
  tg.add_edge(1, 4);
  tg.add_edge(3, 4);
  std::vector<std::size_t> pi{3, 0, 4, 1, 2};  // new position i holds old token pi[i]
  std::vector<std::size_t> inv(5);
  for (std::size_t i = 0; i < 5; ++i) inv[pi[i]] = i;

  MultimodalEncoder permuted = m;
  std::vector<std::size_t> ids_p(5);
  Graph tg_p(5);
  const std::size_t text0 = 3;
  for (std::size_t i = 0; i < 5; ++i) {
    ids_p[i] = ids[pi[i]];
    for (std::size_t c = 0; c < 8; ++c)
      permuted.position_embedding.value(text0 + i, c) = m.position_embedding.value(text0 + pi[i], c);
  }
  for (const auto& e : tg.edges()) tg_p.add_edge(inv[e.from], inv[e.to]);

  Tape t1, t2;
  const Tensor a = m.encode_classify(t1, g, ids, Graph::complete(2), tg).value();
  const Tensor b = permuted.encode_classify(t2, g, ids_p, Graph::complete(2), tg_p).value();
  EXPECT_LE(max_abs_diff(a, b), 1e-12);
  // Without moving the position rows the logits do change.
  Tape t3;
  EXPECT_GT(max_abs_diff(a, m.encode_classify(t3, g, ids_p, Graph::complete(2), tg_p).value()), 1e-9);
}

TEST(Model, GradientCheckIncludingGraphBias) {
  ModelConfig c = small_config();
  c.d_model = 4;
  c.d_ff = 6;
  c.max_len = 6;
  c.text_vocab_size = 5;
  MultimodalEncoder m(c);
  Rng rng(8);
  for (auto* p : m.parameters())
    if (p->name.ends_with("graph_bias"))
      for (auto& v : p->value.values()) v = rng.uniform(-1, 1);
  const PatchGrid g = grid_of(2, rng);
  const std::vector<std::size_t> ids{1, 3, 4};
  Graph tg = path_graph(3);
  const auto params = m.parameters();
  const auto report = gradient_check(
      [&](Tape& t) { return cross_entropy(m.encode_classify(t, g, ids, Graph::complete(2), tg), 1); }, params);
  EXPECT_LT(report.max_rel_error, 1e-4) << report.worst_param << "[" << report.worst_index << "]";
  EXPECT_GT(m.find_parameter("layers.0.attn.graph_bias")->grad.max_abs(), 0.0);
}

TEST(Model, SharedBiasAndFirstLayerOnlyVariantsRun) {
  for (bool share : {false, true})
    for (bool all : {false, true}) {
      ModelConfig c = small_config();
      c.share_graph_bias = share;
      c.mask_all_layers = all;
      MultimodalEncoder m(c);
      Rng rng(9);
      const PatchGrid g = grid_of(2, rng);
      const std::vector<std::size_t> ids{1, 2};
      Tape tape;
      Var loss = cross_entropy(m.encode_classify(tape, g, ids, Graph::complete(2), path_graph(2)), 0);
      tape.backward(loss);
      const Parameter* bias = m.find_parameter(share ? "shared.graph_bias" : "layers.0.attn.graph_bias");
      ASSERT_NE(bias, nullptr);
      EXPECT_GT(bias->grad.max_abs(), 0.0);
      if (!share) { EXPECT_EQ(m.find_parameter("layers.1.attn.graph_bias")->grad.max_abs() > 0.0, all); }
    }
}

TEST(Predict, ArgmaxWithLowestIndexTies) {
  EXPECT_EQ(predict(std::vector<double>{0.1, 2.0, -1}), 1u);
  EXPECT_EQ(predict(std::vector<double>{3, 3, 3}), 0u);
  EXPECT_EQ(predict(std::vector<double>{0, 0, 0, 1, 0}), 3u);
}

TEST(Predict, SoftmaxSumsToOne) {
  const auto p = softmax(std::vector<double>{1, 2, 3, -700});
  EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-15);
  EXPECT_GT(p[2], p[1]);
}

TEST(Training, LossDecreasesOnMemorizationTaskForFiveSeeds) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    TrainConfig c;
    c.seed = seed;
    c.steps = 50;
    c.batch_size = 8;
    c.train_size = 8;
    const Dataset d = generate_dataset(8, seed);
    const TrainResult r = train(c, d);
    ASSERT_EQ(r.log.size(), 50u);
    EXPECT_LT(r.log.back().loss, r.log.front().loss) << "seed " << seed;
  }
}

TEST(Training, IdenticalSeedsGiveBitwiseIdenticalParameters) {
  TrainConfig c;
  c.steps = 20;
  c.batch_size = 4;
  c.train_size = 16;
  const Dataset d = generate_dataset(16, 3);
  TrainResult a = train(c, d);
  TrainResult b = train(c, d);
  const auto pa = a.checkpoint.model.parameters();
  const auto pb = b.checkpoint.model.parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_TRUE(oracle::bitwise_equal(pa[i]->value, pb[i]->value)) << pa[i]->name;
}
