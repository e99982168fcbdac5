// SPDX-License-Identifier: Apache-2.0
#include "mgt/tensor_io.hpp"

#include <bit>
#include <fstream>
#include <iterator>

#include "byte_io.hpp"
#include "mgt/error.hpp"

namespace mgt {

using detail::ByteReader;

void append_tensor(std::vector<std::uint8_t>& out, const Tensor& t, DType dtype) {
  if (t.rank() == 0 || t.rank() > 255) throw DimensionError("cannot encode tensor of rank " + std::to_string(t.rank()));
  detail::put_magic(out, "MGTN");
  detail::put_u8(out, kTensorFormatVersion);
  detail::put_u8(out, static_cast<std::uint8_t>(t.rank()));
  for (auto d : t.shape()) {
    if (d > UINT32_MAX) throw DimensionError("dimension too large for MGTN: " + std::to_string(d));
    detail::put_u32(out, static_cast<std::uint32_t>(d));
  }
  detail::put_u8(out, static_cast<std::uint8_t>(dtype));
  for (double v : t.values()) {
    if (dtype == DType::f64) {
      detail::put_u64(out, std::bit_cast<std::uint64_t>(v));
    } else {
      detail::put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    }
  }
}

std::vector<std::uint8_t> encode_tensor(const Tensor& t, DType dtype) {
  std::vector<std::uint8_t> out;
  append_tensor(out, t, dtype);
  return out;
}

Tensor decode_tensor(std::span<const std::uint8_t> bytes, std::size_t& offset) {
  ByteReader in(bytes, offset);
  in.expect_magic("MGTN");
  const std::size_t version_at = in.offset();
  if (in.u8("version") != kTensorFormatVersion) throw FormatError("unsupported MGTN version", version_at);
  const std::size_t ndim_at = in.offset();
  const std::uint8_t ndim = in.u8("ndim");
  if (ndim == 0) throw FormatError("MGTN ndim must be positive", ndim_at);
  Shape shape;
  for (std::uint8_t i = 0; i < ndim; ++i) {
    const std::size_t at = in.offset();
    const std::uint32_t d = in.u32("dimension");
    if (d == 0) throw FormatError("MGTN dimension must be positive", at);
    shape.push_back(d);
  }
  const std::size_t dtype_at = in.offset();
  const std::uint8_t code = in.u8("dtype");
  if (code > 1) throw FormatError("unknown MGTN dtype code " + std::to_string(code), dtype_at);
  const std::size_t n = shape_numel(shape);
  const std::size_t width = code == 1 ? 8 : 4;
  in.need(n * width, "payload");
  std::vector<double> data(n);
  for (std::size_t i = 0; i < n; ++i) {
    data[i] = code == 1 ? std::bit_cast<double>(in.u64("payload"))
                        : static_cast<double>(std::bit_cast<float>(in.u32("payload")));
  }
  offset = in.offset();
  return Tensor(std::move(shape), std::move(data));
}

Tensor decode_tensor(std::span<const std::uint8_t> bytes) {
  std::size_t offset = 0;
  Tensor t = decode_tensor(bytes, offset);
  if (offset != bytes.size()) throw FormatError("trailing bytes after MGTN record", offset);
  return t;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for " + path.string());
}

void write_tensor_file(const std::filesystem::path& path, const Tensor& t, DType dtype) {
  write_file_bytes(path, encode_tensor(t, dtype));
}

Tensor read_tensor_file(const std::filesystem::path& path) {
  return decode_tensor(read_file_bytes(path));
}

}  // namespace mgt
