// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>

#include "mgt/autodiff.hpp"
#include "mgt/graph.hpp"
#include "mgt/tensor.hpp"

namespace mgt {

/// Flattened image patches, one row per patch in row-major grid order. Each
/// row holds the patch pixels ordered by (row, col, channel).
struct PatchGrid {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t patch_size = 0;
  std::size_t channels = 0;
  Tensor patches;  // [rows*cols x P*P*C]

  std::size_t count() const { return rows * cols; }
  std::size_t patch_dim() const { return patch_size * patch_size * channels; }
};

/// Cuts an [H x W x C] image into P x P patches, zero-padding the bottom and
/// right edges up to multiples of P.
PatchGrid patchify(const Tensor& image, std::size_t patch_size);

/// Linear projection of every patch: [n x P*P*C] * [P*P*C x d].
Var patch_project(Tape& tape, const PatchGrid& grid, Var projection);
Tensor patch_project(const PatchGrid& grid, const Tensor& projection);

struct Connectivity {
  enum class Kind { full, grid4 };
  Kind kind = Kind::full;
  std::size_t rows = 0;  // grid4 only
  std::size_t cols = 0;

  static Connectivity full() { return {}; }
  static Connectivity grid4(std::size_t rows, std::size_t cols) { return {Kind::grid4, rows, cols}; }

  std::string name() const { return kind == Kind::full ? "full" : "grid4"; }

  friend bool operator==(const Connectivity&, const Connectivity&) = default;
};

/// Graph over n patch nodes. Full connects every ordered pair, self edges
/// included. Grid4 links 4-neighbours on a rows x cols grid and needs
/// rows * cols == n (ConfigError otherwise).
Graph build_dense_region_graph(std::size_t n, const Connectivity& connectivity = Connectivity::full());

}  // namespace mgt
