// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "mgt/error.hpp"
#include "mgt/mask.hpp"
#include "mgt/vision.hpp"
#include "oracles.hpp"

using namespace mgt;

TEST(Patchify, EightByEightIntoFour) {
  Rng rng(1);
  const PatchGrid g = patchify(oracle::random_tensor({8, 8, 1}, rng), 4);
  EXPECT_EQ(g.count(), 4u);
  EXPECT_EQ(g.patch_dim(), 16u);
  EXPECT_EQ(g.patches.shape(), (Shape{4, 16}));
}

TEST(Patchify, PadsBottomWithZeros) {
  Tensor img({6, 4, 1}, 1.0);
  const PatchGrid g = patchify(img, 4);
  ASSERT_EQ(g.count(), 2u);
  EXPECT_EQ(g.rows, 2u);
  EXPECT_EQ(g.cols, 1u);
  // second patch: image rows 4..5 are real, rows 6..7 padding
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t x = 0; x < 4; ++x) EXPECT_EQ(g.patches(1, y * 4 + x), y < 2 ? 1.0 : 0.0);
}

TEST(Patchify, WholeImagePatch) {
  Rng rng(2);
  const Tensor img = oracle::random_tensor({4, 4, 3}, rng);
  const PatchGrid g = patchify(img, 4);
  ASSERT_EQ(g.count(), 1u);
  for (std::size_t i = 0; i < img.size(); ++i) EXPECT_EQ(g.patches[i], img[i]);
}

TEST(Patchify, UnpatchifyRestoresPaddedImage) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    Rng rng(seed);
    const std::size_t h = 1 + rng.below(13), w = 1 + rng.below(13), c = 1 + rng.below(3), p = 1 + rng.below(5);
    const Tensor img = oracle::random_tensor({h, w, c}, rng);
    const PatchGrid g = patchify(img, p);
    EXPECT_EQ(g.count(), ((h + p - 1) / p) * ((w + p - 1) / p));
    const Tensor back = oracle::unpatchify(g);
    for (std::size_t y = 0; y < back.dim(0); ++y)
      for (std::size_t x = 0; x < back.dim(1); ++x)
        for (std::size_t ch = 0; ch < c; ++ch)
          EXPECT_EQ(back(y, x, ch), y < h && x < w ? img(y, x, ch) : 0.0);
  }
}

TEST(Patchify, CountIgnoresPixelValues) {
  EXPECT_EQ(patchify(Tensor({9, 5, 2}, 3.0), 4).count(), patchify(Tensor({9, 5, 2}, -1.0), 4).count());
}

TEST(Patchify, RejectsBadInput) {
  EXPECT_THROW(patchify(Tensor({4, 4}), 2), DimensionError);
  EXPECT_THROW(patchify(Tensor({4, 4, 1}), 0), ConfigError);
}

TEST(PatchProject, IdentityKeepsPatches) {
  Rng rng(3);
  const PatchGrid g = patchify(oracle::random_tensor({4, 4, 1}, rng), 2);
  EXPECT_EQ(patch_project(g, Tensor::identity(4)), g.patches);
}

TEST(PatchProject, ZeroPatchesGiveZeroEmbeddings) {
  Rng rng(4);
  const PatchGrid g = patchify(Tensor({4, 4, 1}), 2);
  EXPECT_EQ(patch_project(g, oracle::random_tensor({4, 6}, rng)), Tensor({4, 6}));
}

TEST(PatchProject, MatchesMatmulOracle) {
  Rng rng(5);
  const PatchGrid g = patchify(oracle::random_tensor({2, 4, 1}, rng), 2);
  const Tensor w = oracle::random_tensor({4, 3}, rng);
  EXPECT_LE(max_abs_diff(patch_project(g, w), oracle::naive_matmul(g.patches, w)), 1e-12);
}

TEST(PatchProject, ShapeMismatchIsDimensionError) {
  const PatchGrid g = patchify(Tensor({4, 4, 1}), 2);
  EXPECT_THROW(patch_project(g, Tensor({5, 3})), DimensionError);
}

TEST(RegionGraph, FullIsAllOpen) {
  EXPECT_EQ(graph_to_mask(build_dense_region_graph(4)).blocked_count(), 0u);
  EXPECT_EQ(graph_to_mask(build_dense_region_graph(1)), GraphMask::all_open(1));
}

TEST(RegionGraph, Grid4TwoByTwo) {
  const Graph g = build_dense_region_graph(4, Connectivity::grid4(2, 2));
  for (std::size_t i = 0; i < 4; ++i) {
    std::size_t degree = 0;
    for (std::size_t j = 0; j < 4; ++j)
      if (i != j && g.has_edge(i, j)) ++degree;
    EXPECT_EQ(degree, 2u);
  }
  const GraphMask m = graph_to_mask(g);
  EXPECT_FALSE(m.open(0, 3));
  EXPECT_FALSE(m.open(1, 2));
  EXPECT_TRUE(m.open(0, 1));
  EXPECT_TRUE(m.open(0, 2));
}

TEST(RegionGraph, Grid4ShapeMismatchIsConfigError) {
  EXPECT_THROW(build_dense_region_graph(5, Connectivity::grid4(2, 2)), ConfigError);
  EXPECT_THROW(build_dense_region_graph(0), ConfigError);
}
