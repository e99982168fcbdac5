// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "mgt/autodiff.hpp"
#include "mgt/rng.hpp"

namespace mgt {

/// Per-head query/key/value slices, each [L x head_dim].
struct HeadProjections {
  std::vector<Var> q;
  std::vector<Var> k;
  std::vector<Var> v;
};

/// Post-softmax attention weights of one layer, one [L x L] tensor per head.
using AttentionWeights = std::vector<Tensor>;

/// Multi-head attention whose logits are
///   Q_h K_h^T / sqrt(head_dim) + G + lambda * Ghat[h]
/// with G a fixed additive graph mask (0 / -inf, shared by all heads) and
/// Ghat a trainable per-head bias of shape [heads x max_len x max_len].
///
/// Ghat starts at zero, so a fresh layer computes plain G-masked attention.
/// A Blocked cell stays at -inf whatever Ghat holds. Passing no mask skips
/// both G and Ghat and yields vanilla scaled dot-product attention.
class QuasiAttention {
 public:
  QuasiAttention() = default;
  /// `own_bias = false` leaves Ghat to be supplied by the caller on every
  /// forward call (cross-layer sharing).
  QuasiAttention(const std::string& prefix, std::size_t d_model, std::size_t heads,
                 std::size_t max_len, double lambda, Rng& rng, bool own_bias = true);

  std::size_t d_model() const { return d_model_; }
  std::size_t heads() const { return heads_; }
  std::size_t head_dim() const { return d_model_ / heads_; }
  std::size_t max_len() const { return max_len_; }
  double lambda() const { return lambda_; }
  bool owns_bias() const { return owns_bias_; }

  /// H * W_{q,k,v}, each split into `heads` contiguous column blocks.
  HeadProjections project(Tape& tape, Var hidden);

  /// hidden: [L x d_model]. graph_mask: additive [L x L] or nullptr for the
  /// vanilla path. shared_bias replaces this layer's Ghat when given.
  Var forward(Tape& tape, Var hidden, const Tensor* graph_mask, const Var* shared_bias = nullptr,
              AttentionWeights* weights = nullptr);

  std::vector<Parameter*> parameters();

  Parameter w_q, w_k, w_v, w_o;
  Parameter graph_bias;

 private:
  std::size_t d_model_ = 0;
  std::size_t heads_ = 1;
  std::size_t max_len_ = 0;
  double lambda_ = 1.0;
  bool owns_bias_ = true;
};

/// Pre-norm transformer block:
///   x = H + Attn(LN1(H));  out = x + W2 * relu(W1 * LN2(x) + b1) + b2
class TransformerLayer {
 public:
  TransformerLayer() = default;
  TransformerLayer(const std::string& prefix, std::size_t d_model, std::size_t heads,
                   std::size_t d_ff, std::size_t max_len, double lambda, Rng& rng,
                   bool own_bias = true);

  Var forward(Tape& tape, Var hidden, const Tensor* graph_mask, const Var* shared_bias = nullptr,
              AttentionWeights* weights = nullptr);

  std::vector<Parameter*> parameters();

  Parameter ln1_gain, ln1_bias;
  QuasiAttention attention;
  Parameter ln2_gain, ln2_bias;
  Parameter ffn_w1, ffn_b1, ffn_w2, ffn_b2;
};

}  // namespace mgt
