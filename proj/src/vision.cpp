// SPDX-License-Identifier: Apache-2.0
#include "mgt/vision.hpp"

#include "mgt/error.hpp"

namespace mgt {

PatchGrid patchify(const Tensor& image, std::size_t patch_size) {
  if (image.rank() != 3) {
    throw DimensionError("patchify expects an [H x W x C] image, got " + shape_string(image.shape()));
  }
  if (patch_size == 0) throw ConfigError("patch size must be positive");
  const std::size_t h = image.dim(0), w = image.dim(1), c = image.dim(2);
  const std::size_t p = patch_size;
  PatchGrid grid;
  grid.rows = (h + p - 1) / p;
  grid.cols = (w + p - 1) / p;
  grid.patch_size = p;
  grid.channels = c;
  grid.patches = Tensor({grid.count(), p * p * c});
  for (std::size_t gr = 0; gr < grid.rows; ++gr) {
    for (std::size_t gc = 0; gc < grid.cols; ++gc) {
      auto out = grid.patches.row(gr * grid.cols + gc);
      for (std::size_t y = 0; y < p; ++y) {
        const std::size_t iy = gr * p + y;
        if (iy >= h) break;
        for (std::size_t x = 0; x < p; ++x) {
          const std::size_t ix = gc * p + x;
          if (ix >= w) break;
          for (std::size_t ch = 0; ch < c; ++ch) out[(y * p + x) * c + ch] = image(iy, ix, ch);
        }
      }
    }
  }
  return grid;
}

Var patch_project(Tape& tape, const PatchGrid& grid, Var projection) {
  return matmul(tape.constant(grid.patches), projection);
}

Tensor patch_project(const PatchGrid& grid, const Tensor& projection) {
  return matmul(grid.patches, projection);
}

Graph build_dense_region_graph(std::size_t n, const Connectivity& connectivity) {
  if (n == 0) throw ConfigError("dense region graph needs at least one patch");
  if (connectivity.kind == Connectivity::Kind::full) return Graph::complete(n);

  const std::size_t rows = connectivity.rows, cols = connectivity.cols;
  if (rows * cols != n) {
    throw ConfigError("grid4 shape " + std::to_string(rows) + "x" + std::to_string(cols) +
                      " does not cover " + std::to_string(n) + " patches");
  }
  Graph g(n, false);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const std::size_t i = r * cols + c;
      if (c + 1 < cols) g.add_edge(i, i + 1);
      if (r + 1 < rows) g.add_edge(i, i + cols);
    }
  }
  return g;
}

}  // namespace mgt
