// SPDX-License-Identifier: Apache-2.0
#include "mgt/attention.hpp"

#include <cmath>

#include "mgt/error.hpp"

namespace mgt {

namespace {

Tensor normal_init(Shape shape, double stddev, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = stddev * rng.normal();
  return t;
}

}  // namespace

QuasiAttention::QuasiAttention(const std::string& prefix, std::size_t d_model, std::size_t heads,
                               std::size_t max_len, double lambda, Rng& rng, bool own_bias)
    : d_model_(d_model), heads_(heads), max_len_(max_len), lambda_(lambda), owns_bias_(own_bias) {
  if (heads == 0 || d_model == 0 || d_model % heads != 0) {
    throw ConfigError("d_model (" + std::to_string(d_model) + ") must be a positive multiple of heads (" +
                      std::to_string(heads) + ")");
  }
  if (max_len == 0) throw ConfigError("max_len must be positive");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda must be finite and >= 0");
  const double s = 1.0 / std::sqrt(static_cast<double>(d_model));
  w_q = Parameter(prefix + "w_q", normal_init({d_model, d_model}, s, rng));
  w_k = Parameter(prefix + "w_k", normal_init({d_model, d_model}, s, rng));
  w_v = Parameter(prefix + "w_v", normal_init({d_model, d_model}, s, rng));
  w_o = Parameter(prefix + "w_o", normal_init({d_model, d_model}, s, rng));
  if (own_bias) graph_bias = Parameter(prefix + "graph_bias", Tensor({heads, max_len, max_len}));
}

HeadProjections QuasiAttention::project(Tape& tape, Var hidden) {
  const Tensor& h = hidden.value();
  if (h.rank() != 2 || h.cols() != d_model_) {
    throw DimensionError("attention input must be [L x " + std::to_string(d_model_) + "], got " +
                         shape_string(h.shape()));
  }
  if (h.rows() > max_len_) {
    throw CapacityError("sequence length " + std::to_string(h.rows()) + " exceeds max_len " +
                        std::to_string(max_len_));
  }
  Var q = matmul(hidden, tape.parameter(w_q));
  Var k = matmul(hidden, tape.parameter(w_k));
  Var v = matmul(hidden, tape.parameter(w_v));
  HeadProjections out;
  const std::size_t hd = head_dim();
  for (std::size_t i = 0; i < heads_; ++i) {
    out.q.push_back(heads_ == 1 ? q : slice_cols(q, i * hd, hd));
    out.k.push_back(heads_ == 1 ? k : slice_cols(k, i * hd, hd));
    out.v.push_back(heads_ == 1 ? v : slice_cols(v, i * hd, hd));
  }
  return out;
}

Var QuasiAttention::forward(Tape& tape, Var hidden, const Tensor* graph_mask, const Var* shared_bias,
                            AttentionWeights* weights) {
  HeadProjections p = project(tape, hidden);
  const std::size_t len = hidden.value().rows();
  if (graph_mask && graph_mask->shape() != Shape{len, len}) {
    throw DimensionError("graph mask " + shape_string(graph_mask->shape()) + " does not match sequence length " +
                         std::to_string(len));
  }
  if (graph_mask && !shared_bias && !owns_bias_) {
    throw ConfigError("attention layer has no graph bias of its own and none was supplied");
  }
  Var bias;
  if (graph_mask) bias = shared_bias ? *shared_bias : tape.parameter(graph_bias);
  if (weights) weights->clear();

  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(head_dim()));
  std::vector<Var> outputs;
  outputs.reserve(heads_);
  for (std::size_t i = 0; i < heads_; ++i) {
    Var scores = scale(matmul(p.q[i], transpose(p.k[i])), inv_scale);
    if (graph_mask) {
      scores = add_constant(scores, *graph_mask);
      scores = add(scores, scale(block_slice(bias, i, len), lambda_));
    }
    Var attn = masked_row_softmax(scores);
    if (weights) weights->push_back(attn.value());
    outputs.push_back(matmul(attn, p.v[i]));
  }
  Var merged = heads_ == 1 ? outputs[0] : concat_cols(outputs);
  return matmul(merged, tape.parameter(w_o));
}

std::vector<Parameter*> QuasiAttention::parameters() {
  std::vector<Parameter*> out{&w_q, &w_k, &w_v, &w_o};
  if (owns_bias_) out.push_back(&graph_bias);
  return out;
}

TransformerLayer::TransformerLayer(const std::string& prefix, std::size_t d_model, std::size_t heads,
                                   std::size_t d_ff, std::size_t max_len, double lambda, Rng& rng,
                                   bool own_bias)
    : ln1_gain(prefix + "ln1.gain", Tensor({d_model}, 1.0)),
      ln1_bias(prefix + "ln1.bias", Tensor({d_model})),
      attention(prefix + "attn.", d_model, heads, max_len, lambda, rng, own_bias),
      ln2_gain(prefix + "ln2.gain", Tensor({d_model}, 1.0)),
      ln2_bias(prefix + "ln2.bias", Tensor({d_model})) {
  if (d_ff == 0) throw ConfigError("d_ff must be positive");
  ffn_w1 = Parameter(prefix + "ffn.w1", normal_init({d_model, d_ff}, std::sqrt(2.0 / d_model), rng));
  ffn_b1 = Parameter(prefix + "ffn.b1", Tensor({d_ff}));
  ffn_w2 = Parameter(prefix + "ffn.w2", normal_init({d_ff, d_model}, 1.0 / std::sqrt(static_cast<double>(d_ff)), rng));
  ffn_b2 = Parameter(prefix + "ffn.b2", Tensor({d_model}));
}

Var TransformerLayer::forward(Tape& tape, Var hidden, const Tensor* graph_mask, const Var* shared_bias,
                              AttentionWeights* weights) {
  Var normed = layer_norm(hidden, tape.parameter(ln1_gain), tape.parameter(ln1_bias));
  Var x = add(hidden, attention.forward(tape, normed, graph_mask, shared_bias, weights));
  Var n2 = layer_norm(x, tape.parameter(ln2_gain), tape.parameter(ln2_bias));
  Var inner = relu(add_row_bias(matmul(n2, tape.parameter(ffn_w1)), tape.parameter(ffn_b1)));
  Var ffn = add_row_bias(matmul(inner, tape.parameter(ffn_w2)), tape.parameter(ffn_b2));
  return add(x, ffn);
}

std::vector<Parameter*> TransformerLayer::parameters() {
  std::vector<Parameter*> out{&ln1_gain, &ln1_bias};
  for (auto* p : attention.parameters()) out.push_back(p);
  for (auto* p : {&ln2_gain, &ln2_bias, &ffn_w1, &ffn_b1, &ffn_w2, &ffn_b2}) out.push_back(p);
  return out;
}

}  // namespace mgt
