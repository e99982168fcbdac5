// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mgt/graph.hpp"
#include "mgt/tensor.hpp"

namespace mgt {

/// L x L additive attention mask. Each cell is Open (adds 0) or Blocked
/// (adds -inf). A zero-sized mask is allowed for empty modalities.
class GraphMask {
 public:
  explicit GraphMask(std::size_t size = 0, bool open = false);

  static GraphMask all_open(std::size_t size) { return GraphMask(size, true); }
  static GraphMask diagonal(std::size_t size);

  std::size_t size() const { return size_; }
  bool open(std::size_t q, std::size_t k) const { return cells_[q * size_ + k] != 0; }
  void set_open(std::size_t q, std::size_t k, bool open) { cells_[q * size_ + k] = open ? 1 : 0; }

  std::size_t blocked_count() const;
  bool is_symmetric() const;

  /// [L x L] tensor of 0 (Open) and -inf (Blocked). Requires size() > 0.
  Tensor additive() const;

  /// The [len x len] sub-mask whose top-left corner sits at (offset, offset).
  GraphMask block(std::size_t offset, std::size_t len) const;

  std::span<const std::uint8_t> cells() const { return cells_; }

  friend bool operator==(const GraphMask&, const GraphMask&) = default;

 private:
  std::size_t size_;
  std::vector<std::uint8_t> cells_;
};

enum class SelfLoops { Open, FromGraph };

/// Cell (i, j) is Open iff the graph has edge i -> j (either direction when
/// undirected) or, under SelfLoops::Open, i == j.
GraphMask graph_to_mask(const Graph& g, SelfLoops self_loops = SelfLoops::Open);

enum class Modality : std::uint8_t { vision = 0, text = 1, special = 2 };

std::string to_string(Modality m);
Modality modality_from_string(const std::string& s);

/// Where one modality's tokens sit in the fused sequence.
struct ModalSpan {
  Modality modality = Modality::special;
  std::size_t offset = 0;
  std::size_t length = 0;

  std::size_t end() const { return offset + length; }
  friend bool operator==(const ModalSpan&, const ModalSpan&) = default;
};

/// Checks that spans are ordered, disjoint and tile [0, L); returns L.
std::size_t validate_spans(std::span<const ModalSpan> spans);

enum class CrossPolicy { AllOpen };

/// Places each modality's mask on the diagonal at its span and opens every
/// cross-modal cell. `special` spans need no entry in `per_modality`; their
/// rows and columns are Open everywhere. Throws CompositionError when a mask
/// is missing or its size differs from its span length.
GraphMask compose_block_mask(std::span<const ModalSpan> spans,
                             const std::map<Modality, GraphMask>& per_modality,
                             CrossPolicy cross = CrossPolicy::AllOpen);

// QAMK file: "QAMK", version 0x01, u32 LE size L, then L*L bytes row-major
// with 1 = Open and 0 = Blocked.
inline constexpr std::uint8_t kMaskFormatVersion = 0x01;

std::vector<std::uint8_t> encode_mask(const GraphMask& mask);
GraphMask decode_mask(std::span<const std::uint8_t> bytes);
void write_mask_file(const std::filesystem::path& path, const GraphMask& mask);
GraphMask read_mask_file(const std::filesystem::path& path);

}  // namespace mgt
