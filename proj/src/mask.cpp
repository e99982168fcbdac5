// SPDX-License-Identifier: Apache-2.0
#include "mgt/mask.hpp"

#include <algorithm>

#include "byte_io.hpp"
#include "mgt/error.hpp"
#include "mgt/tensor_io.hpp"

namespace mgt {

GraphMask::GraphMask(std::size_t size, bool open)
    : size_(size), cells_(size * size, open ? 1 : 0) {}

GraphMask GraphMask::diagonal(std::size_t size) {
  GraphMask m(size);
  for (std::size_t i = 0; i < size; ++i) m.set_open(i, i, true);
  return m;
}

std::size_t GraphMask::blocked_count() const {
  return static_cast<std::size_t>(std::count(cells_.begin(), cells_.end(), std::uint8_t{0}));
}

bool GraphMask::is_symmetric() const {
  for (std::size_t i = 0; i < size_; ++i)
    for (std::size_t j = i + 1; j < size_; ++j)
      if (open(i, j) != open(j, i)) return false;
  return true;
}

Tensor GraphMask::additive() const {
  if (size_ == 0) throw DimensionError("cannot build an additive tensor from an empty mask");
  Tensor t({size_, size_});
  for (std::size_t i = 0; i < cells_.size(); ++i) t[i] = cells_[i] ? 0.0 : kNegInf;
  return t;
}

GraphMask GraphMask::block(std::size_t offset, std::size_t len) const {
  if (offset + len > size_) {
    throw IndexError("block [" + std::to_string(offset) + ", " + std::to_string(offset + len) +
                     ") exceeds mask size " + std::to_string(size_));
  }
  GraphMask out(len);
  for (std::size_t i = 0; i < len; ++i)
    for (std::size_t j = 0; j < len; ++j) out.set_open(i, j, open(offset + i, offset + j));
  return out;
}

GraphMask graph_to_mask(const Graph& g, SelfLoops self_loops) {
  const std::size_t n = g.num_nodes();
  GraphMask m(n);
  for (const auto& e : g.edges()) {
    m.set_open(e.from, e.to, true);
    if (!g.directed()) m.set_open(e.to, e.from, true);
  }
  if (self_loops == SelfLoops::Open)
    for (std::size_t i = 0; i < n; ++i) m.set_open(i, i, true);
  return m;
}

std::string to_string(Modality m) {
  switch (m) {
    case Modality::vision: return "vision";
    case Modality::text: return "text";
    case Modality::special: return "special";
  }
  return "unknown";
}

Modality modality_from_string(const std::string& s) {
  if (s == "vision") return Modality::vision;
  if (s == "text") return Modality::text;
  if (s == "special") return Modality::special;
  throw ConfigError("unknown modality '" + s + "'");
}

std::size_t validate_spans(std::span<const ModalSpan> spans) {
  std::size_t next = 0;
  for (const auto& s : spans) {
    if (s.offset != next) {
      throw CompositionError(to_string(s.modality) + " span starts at " + std::to_string(s.offset) +
                             ", expected " + std::to_string(next));
    }
    next = s.end();
  }
  return next;
}

GraphMask compose_block_mask(std::span<const ModalSpan> spans,
                             const std::map<Modality, GraphMask>& per_modality, CrossPolicy) {
  const std::size_t total = validate_spans(spans);
  GraphMask out = GraphMask::all_open(total);
  for (const auto& s : spans) {
    if (s.modality == Modality::special || s.length == 0) continue;
    auto it = per_modality.find(s.modality);
    if (it == per_modality.end()) {
      throw CompositionError("no mask supplied for " + to_string(s.modality) + " span");
    }
    const GraphMask& m = it->second;
    if (m.size() != s.length) {
      throw CompositionError(to_string(s.modality) + " mask has size " + std::to_string(m.size()) +
                             " but its span has length " + std::to_string(s.length));
    }
    for (std::size_t i = 0; i < s.length; ++i)
      for (std::size_t j = 0; j < s.length; ++j)
        out.set_open(s.offset + i, s.offset + j, m.open(i, j));
  }
  return out;
}

std::vector<std::uint8_t> encode_mask(const GraphMask& mask) {
  if (mask.size() > UINT32_MAX) throw DimensionError("mask too large for QAMK");
  std::vector<std::uint8_t> out;
  out.reserve(9 + mask.cells().size());
  detail::put_magic(out, "QAMK");
  detail::put_u8(out, kMaskFormatVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(mask.size()));
  out.insert(out.end(), mask.cells().begin(), mask.cells().end());
  return out;
}

GraphMask decode_mask(std::span<const std::uint8_t> bytes) {
  detail::ByteReader in(bytes);
  in.expect_magic("QAMK");
  const std::size_t version_at = in.offset();
  if (in.u8("version") != kMaskFormatVersion) throw FormatError("unsupported QAMK version", version_at);
  const std::size_t size = in.u32("size");
  const std::size_t payload_at = in.offset();
  auto cells = in.take(size * size, "mask payload");
  if (in.remaining() != 0) throw FormatError("trailing bytes after QAMK payload", in.offset());
  GraphMask m(size);
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (cells[i] > 1) throw FormatError("mask cell must be 0 or 1", payload_at + i);
    m.set_open(i / size, i % size, cells[i] == 1);
  }
  return m;
}

void write_mask_file(const std::filesystem::path& path, const GraphMask& mask) {
  write_file_bytes(path, encode_mask(mask));
}

GraphMask read_mask_file(const std::filesystem::path& path) {
  return decode_mask(read_file_bytes(path));
}

}  // namespace mgt
