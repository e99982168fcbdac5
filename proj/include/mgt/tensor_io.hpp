// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "mgt/tensor.hpp"

namespace mgt {

// MGTN container: "MGTN", version 0x01, u8 ndim, ndim x u32 LE dims,
// u8 dtype (0 = f32, 1 = f64), then the row-major LE payload.

enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

inline constexpr std::uint8_t kTensorFormatVersion = 0x01;

std::vector<std::uint8_t> encode_tensor(const Tensor& t, DType dtype = DType::f64);
void append_tensor(std::vector<std::uint8_t>& out, const Tensor& t, DType dtype = DType::f64);

/// Decodes one record starting at `offset` and advances `offset` past it.
/// Errors carry the absolute byte offset of the problem.
Tensor decode_tensor(std::span<const std::uint8_t> bytes, std::size_t& offset);
Tensor decode_tensor(std::span<const std::uint8_t> bytes);

void write_tensor_file(const std::filesystem::path& path, const Tensor& t, DType dtype = DType::f64);
Tensor read_tensor_file(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace mgt
