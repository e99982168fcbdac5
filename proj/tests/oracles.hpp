// SPDX-License-Identifier: Apache-2.0
// Independent reference implementations used only by the tests. They share
// no code paths with the library beyond the Tensor container.
#pragma once

#include <cmath>
#include <cstddef>
#include <cstring>
#include <map>
#include <limits>
#include <vector>

#include "mgt/mask.hpp"
#include "mgt/rng.hpp"
#include "mgt/tensor.hpp"
#include "mgt/vision.hpp"

namespace mgt::oracle {

inline Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = scale * rng.uniform(-1.0, 1.0);
  return t;
}

inline bool bitwise_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

inline Tensor naive_matmul(const Tensor& a, const Tensor& b) {
  Tensor out({a.rows(), b.cols()});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      out(i, j) = s;
    }
  return out;
}

// Multi-head scaled dot-product attention written as plain loops:
// concat_h softmax(Q_h K_h^T / sqrt(d/h)) V_h, then W_o. `blocked(q, k)`
// optionally removes cells from the softmax.
template <typename Blocked>
Tensor attention(const Tensor& h, const Tensor& wq, const Tensor& wk, const Tensor& wv, const Tensor& wo,
                 std::size_t heads, Blocked blocked) {
  const std::size_t len = h.rows();
  const std::size_t d = h.cols();
  const std::size_t hd = d / heads;
  const Tensor q = naive_matmul(h, wq);
  const Tensor k = naive_matmul(h, wk);
  const Tensor v = naive_matmul(h, wv);
  Tensor concat({len, d});
  for (std::size_t head = 0; head < heads; ++head) {
    const std::size_t c0 = head * hd;
    for (std::size_t i = 0; i < len; ++i) {
      std::vector<double> s(len, -std::numeric_limits<double>::infinity());
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < len; ++j) {
        if (blocked(i, j)) continue;
        double dot = 0.0;
        for (std::size_t c = 0; c < hd; ++c) dot += q(i, c0 + c) * k(j, c0 + c);
        s[j] = dot / std::sqrt(static_cast<double>(hd));
        mx = std::max(mx, s[j]);
      }
      double z = 0.0;
      for (std::size_t j = 0; j < len; ++j) {
        s[j] = std::isinf(s[j]) ? 0.0 : std::exp(s[j] - mx);
        z += s[j];
      }
      for (std::size_t c = 0; c < hd; ++c) {
        double acc = 0.0;
        for (std::size_t j = 0; j < len; ++j) acc += (z > 0 ? s[j] / z : 0.0) * v(j, c0 + c);
        concat(i, c0 + c) = acc;
      }
    }
  }
  return naive_matmul(concat, wo);
}

inline Tensor vanilla_attention(const Tensor& h, const Tensor& wq, const Tensor& wk, const Tensor& wv,
                                const Tensor& wo, std::size_t heads) {
  return attention(h, wq, wk, wv, wo, heads, [](std::size_t, std::size_t) { return false; });
}

// Cell-by-cell block assembly: a cell is read from a modality's mask when
// row and column fall in that modality's span, and is Open otherwise.
inline GraphMask assemble_blocks(const std::vector<ModalSpan>& spans,
                                 const std::map<Modality, GraphMask>& masks) {
  std::size_t len = 0;
  for (const auto& s : spans) len += s.length;
  GraphMask out(len, true);
  for (std::size_t q = 0; q < len; ++q)
    for (std::size_t k = 0; k < len; ++k)
      for (const auto& s : spans) {
        if (s.modality == Modality::special) continue;
        const bool in_q = q >= s.offset && q < s.offset + s.length;
        const bool in_k = k >= s.offset && k < s.offset + s.length;
        if (in_q && in_k) out.set_open(q, k, masks.at(s.modality).open(q - s.offset, k - s.offset));
      }
  return out;
}

// Inverse of patchify, returning the padded image.
inline Tensor unpatchify(const PatchGrid& g) {
  const std::size_t p = g.patch_size;
  Tensor img({g.rows * p, g.cols * p, g.channels});
  for (std::size_t r = 0; r < g.rows; ++r)
    for (std::size_t c = 0; c < g.cols; ++c)
      for (std::size_t y = 0; y < p; ++y)
        for (std::size_t x = 0; x < p; ++x)
          for (std::size_t ch = 0; ch < g.channels; ++ch)
            img(r * p + y, c * p + x, ch) = g.patches(r * g.cols + c, (y * p + x) * g.channels + ch);
  return img;
}

}  // namespace mgt::oracle
