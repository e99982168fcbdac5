// SPDX-License-Identifier: Apache-2.0
#include "mgt/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "mgt/error.hpp"

namespace mgt {

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw ConfigError(std::string(name) + " must be positive");
  };
  positive(d_model, "d_model");
  positive(heads, "heads");
  positive(num_layers, "num_layers");
  positive(d_ff, "d_ff");
  positive(max_len, "max_len");
  positive(answer_vocab_size, "answer_vocab_size");
  positive(text_vocab_size, "text_vocab_size");
  positive(patch_input_dim, "patch_input_dim");
  if (d_model % heads != 0) {
    throw ConfigError("d_model " + std::to_string(d_model) + " is not divisible by heads " +
                      std::to_string(heads));
  }
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda must be finite and >= 0");
}

nlohmann::ordered_json ModelConfig::to_json() const {
  nlohmann::ordered_json j;
  j["d_model"] = d_model;
  j["heads"] = heads;
  j["num_layers"] = num_layers;
  j["d_ff"] = d_ff;
  j["max_len"] = max_len;
  j["lambda"] = lambda;
  j["answer_vocab_size"] = answer_vocab_size;
  j["text_vocab_size"] = text_vocab_size;
  j["patch_input_dim"] = patch_input_dim;
  nlohmann::ordered_json c;
  c["kind"] = connectivity.name();
  if (connectivity.kind == Connectivity::Kind::grid4) {
    c["rows"] = connectivity.rows;
    c["cols"] = connectivity.cols;
  }
  j["connectivity"] = c;
  j["seed"] = seed;
  j["share_graph_bias"] = share_graph_bias;
  j["mask_all_layers"] = mask_all_layers;
  j["attention"] = attention == AttentionKind::quasi ? "quasi" : "vanilla";
  return j;
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  try {
    ModelConfig c;
    c.d_model = j.value("d_model", c.d_model);
    c.heads = j.value("heads", c.heads);
    c.num_layers = j.value("num_layers", c.num_layers);
    c.d_ff = j.value("d_ff", c.d_ff);
    c.max_len = j.value("max_len", c.max_len);
    c.lambda = j.value("lambda", c.lambda);
    c.answer_vocab_size = j.value("answer_vocab_size", c.answer_vocab_size);
    c.text_vocab_size = j.value("text_vocab_size", c.text_vocab_size);
    c.patch_input_dim = j.value("patch_input_dim", c.patch_input_dim);
    if (j.contains("connectivity")) {
      const auto& cj = j["connectivity"];
      const auto kind = cj.value("kind", std::string("full"));
      if (kind == "full") {
        c.connectivity = Connectivity::full();
      } else if (kind == "grid4") {
        c.connectivity = Connectivity::grid4(cj.at("rows").get<std::size_t>(), cj.at("cols").get<std::size_t>());
      } else {
        throw ConfigError("unknown connectivity '" + kind + "'");
      }
    }
    c.seed = j.value("seed", c.seed);
    c.share_graph_bias = j.value("share_graph_bias", c.share_graph_bias);
    c.mask_all_layers = j.value("mask_all_layers", c.mask_all_layers);
    const auto att = j.value("attention", std::string("quasi"));
    if (att != "quasi" && att != "vanilla") throw ConfigError("unknown attention kind '" + att + "'");
    c.attention = att == "quasi" ? AttentionKind::quasi : AttentionKind::vanilla;
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed model config: ") + e.what());
  }
}

namespace {

Tensor normal_init(Shape shape, double stddev, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = stddev * rng.normal();
  return t;
}

}  // namespace

MultimodalEncoder::MultimodalEncoder(const ModelConfig& config) : config_(config) {
  config_.validate();
  const std::size_t d = config_.d_model;
  Rng rng(config_.seed);
  Rng embed_rng = rng.split(1);
  token_embedding = Parameter("embed.tokens", normal_init({config_.text_vocab_size, d}, 0.5, embed_rng));
  patch_projection = Parameter(
      "embed.patch_projection",
      normal_init({config_.patch_input_dim, d}, 1.0 / std::sqrt(static_cast<double>(config_.patch_input_dim)),
                  embed_rng));
  position_embedding = Parameter("embed.positions", normal_init({config_.max_len, d}, 0.5, embed_rng));
  modality_embedding = Parameter("embed.modality", normal_init({3, d}, 0.5, embed_rng));

  Rng layer_rng = rng.split(2);
  for (std::size_t l = 0; l < config_.num_layers; ++l) {
    layers.emplace_back("layers." + std::to_string(l) + ".", d, config_.heads, config_.d_ff, config_.max_len,
                        config_.lambda, layer_rng, !config_.share_graph_bias);
  }
  if (config_.share_graph_bias) {
    shared_graph_bias = Parameter("shared.graph_bias", Tensor({config_.heads, config_.max_len, config_.max_len}));
  }

  Rng head_rng = rng.split(3);
  final_ln_gain = Parameter("final_ln.gain", Tensor({d}, 1.0));
  final_ln_bias = Parameter("final_ln.bias", Tensor({d}));
  head_weight = Parameter("head.weight",
                          normal_init({d, config_.answer_vocab_size}, 1.0 / std::sqrt(static_cast<double>(d)), head_rng));
  head_bias = Parameter("head.bias", Tensor({config_.answer_vocab_size}));
}

std::vector<Parameter*> MultimodalEncoder::parameters() {
  std::vector<Parameter*> out{&token_embedding, &patch_projection, &position_embedding, &modality_embedding};
  for (auto& layer : layers)
    for (auto* p : layer.parameters()) out.push_back(p);
  if (config_.share_graph_bias) out.push_back(&shared_graph_bias);
  for (auto* p : {&final_ln_gain, &final_ln_bias, &head_weight, &head_bias}) out.push_back(p);
  return out;
}

std::vector<const Parameter*> MultimodalEncoder::parameters() const {
  auto* self = const_cast<MultimodalEncoder*>(this);
  auto params = self->parameters();
  return {params.begin(), params.end()};
}

std::size_t MultimodalEncoder::parameter_count() const {
  std::size_t n = 0;
  for (const auto* p : parameters()) n += p->value.size();
  return n;
}

Parameter* MultimodalEncoder::find_parameter(const std::string& name) {
  for (auto* p : parameters())
    if (p->name == name) return p;
  return nullptr;
}

Embedded MultimodalEncoder::embed_inputs(Tape& tape, const PatchGrid& patches,
                                         std::span<const std::size_t> token_ids) {
  const std::size_t d = config_.d_model;
  const std::size_t n_patches = patches.count();
  const std::size_t n_tokens = token_ids.size();
  const std::size_t len = 1 + n_patches + n_tokens;
  if (len > config_.max_len) {
    throw CapacityError("fused sequence of " + std::to_string(len) + " positions exceeds max_len " +
                        std::to_string(config_.max_len));
  }

  std::vector<Var> parts{tape.constant(Tensor({1, d}))};
  if (n_patches > 0) {
    if (patches.patch_dim() != config_.patch_input_dim) {
      throw DimensionError("patch dimension " + std::to_string(patches.patch_dim()) +
                           " does not match patch_input_dim " + std::to_string(config_.patch_input_dim));
    }
    parts.push_back(patch_project(tape, patches, tape.parameter(patch_projection)));
  }
  if (n_tokens > 0) parts.push_back(gather_rows(tape.parameter(token_embedding), token_ids));
  Var content = parts.size() == 1 ? parts[0] : concat_rows(parts);

  std::vector<std::size_t> positions(len);
  std::iota(positions.begin(), positions.end(), std::size_t{0});
  std::vector<std::size_t> types(len, static_cast<std::size_t>(Modality::special));
  std::fill_n(types.begin() + 1, n_patches, static_cast<std::size_t>(Modality::vision));
  std::fill_n(types.begin() + 1 + static_cast<std::ptrdiff_t>(n_patches), n_tokens,
              static_cast<std::size_t>(Modality::text));

  Var hidden = add(content, gather_rows(tape.parameter(position_embedding), positions));
  hidden = add(hidden, gather_rows(tape.parameter(modality_embedding), types));

  return Embedded{hidden,
                  {ModalSpan{Modality::special, 0, 1}, ModalSpan{Modality::vision, 1, n_patches},
                   ModalSpan{Modality::text, 1 + n_patches, n_tokens}}};
}

GraphMask MultimodalEncoder::compose_mask(std::span<const ModalSpan> spans, const Graph& vision_graph,
                                          const Graph& text_graph) const {
  std::map<Modality, GraphMask> masks;
  for (const auto& s : spans) {
    if (s.modality == Modality::special) continue;
    const Graph& g = s.modality == Modality::vision ? vision_graph : text_graph;
    if (g.num_nodes() != s.length) {
      throw AlignmentError(to_string(s.modality) + " graph has " + std::to_string(g.num_nodes()) +
                           " nodes but the " + to_string(s.modality) + " span has " + std::to_string(s.length) +
                           " positions");
    }
    masks.emplace(s.modality, graph_to_mask(g));
  }
  return compose_block_mask(spans, masks);
}

Var MultimodalEncoder::forward(Tape& tape, const PatchGrid& patches, std::span<const std::size_t> token_ids,
                               const GraphMask& mask, ForwardTrace* trace) {
  for (auto id : token_ids) {
    if (id >= config_.text_vocab_size) {
      throw IndexError("token id " + std::to_string(id) + " outside text vocabulary of " +
                       std::to_string(config_.text_vocab_size));
    }
  }
  Embedded e = embed_inputs(tape, patches, token_ids);
  const std::size_t len = e.hidden.value().rows();
  if (mask.size() != len) {
    throw DimensionError("mask size " + std::to_string(mask.size()) + " does not match sequence length " +
                         std::to_string(len));
  }
  const bool quasi = config_.attention == AttentionKind::quasi;
  const Tensor additive = mask.additive();
  Var shared;
  if (quasi && config_.share_graph_bias) shared = tape.parameter(shared_graph_bias);
  if (trace) trace->layers.assign(layers.size(), {});

  Var h = e.hidden;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const bool masked = quasi && (config_.mask_all_layers || l == 0);
    h = layers[l].forward(tape, h, masked ? &additive : nullptr,
                          masked && config_.share_graph_bias ? &shared : nullptr,
                          trace ? &trace->layers[l] : nullptr);
  }
  Var cls = slice_rows(h, 0, 1);
  cls = layer_norm(cls, tape.parameter(final_ln_gain), tape.parameter(final_ln_bias));
  return add_row_bias(matmul(cls, tape.parameter(head_weight)), tape.parameter(head_bias));
}

Var MultimodalEncoder::encode_classify(Tape& tape, const PatchGrid& patches, std::span<const std::size_t> token_ids,
                                       const Graph& vision_graph, const Graph& text_graph, ForwardTrace* trace) {
  const std::size_t n_patches = patches.count();
  const std::vector<ModalSpan> spans{ModalSpan{Modality::special, 0, 1}, ModalSpan{Modality::vision, 1, n_patches},
                                     ModalSpan{Modality::text, 1 + n_patches, token_ids.size()}};
  return forward(tape, patches, token_ids, compose_mask(spans, vision_graph, text_graph), trace);
}

std::size_t predict(std::span<const double> logits) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i)
    if (logits[i] > logits[best]) best = i;
  return best;
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  if (logits.empty()) return out;
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) sum += out[i] = std::exp(logits[i] - mx);
  for (auto& v : out) v /= sum;
  return out;
}

}  // namespace mgt
