// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "json.hpp"
#include "mgt/attention.hpp"
#include "mgt/graph.hpp"
#include "mgt/mask.hpp"
#include "mgt/vision.hpp"

namespace mgt {

enum class AttentionKind { quasi, vanilla };

struct ModelConfig {
  std::size_t d_model = 32;
  std::size_t heads = 4;
  std::size_t num_layers = 2;
  std::size_t d_ff = 64;
  std::size_t max_len = 64;
  double lambda = 1.0;
  std::size_t answer_vocab_size = 4;
  std::size_t text_vocab_size = 64;
  std::size_t patch_input_dim = 16;
  Connectivity connectivity = Connectivity::full();
  std::uint64_t seed = 1;

  /// One Ghat shared by every layer instead of one per layer.
  bool share_graph_bias = false;
  /// Apply G (and Ghat) in every layer; when false only the first layer is
  /// masked and the rest run vanilla attention.
  bool mask_all_layers = true;
  /// vanilla skips G and Ghat entirely; used as the reduction reference.
  AttentionKind attention = AttentionKind::quasi;

  void validate() const;
  nlohmann::ordered_json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Attention weights captured during a forward pass, [layer][head].
struct ForwardTrace {
  std::vector<AttentionWeights> layers;
};

struct Embedded {
  Var hidden;  // [L x d_model]
  std::vector<ModalSpan> spans;
};

/// Fused vision/text encoder with a classification head on the CLS position.
///
/// Sequence layout is [CLS] ++ projected patches ++ embedded tokens, with one
/// learned position table indexed across the whole fused sequence and a
/// modality-type embedding per position. The CLS content vector is zero; its
/// position and type embeddings identify it.
class MultimodalEncoder {
 public:
  explicit MultimodalEncoder(const ModelConfig& config);

  MultimodalEncoder(const MultimodalEncoder&) = default;
  MultimodalEncoder& operator=(const MultimodalEncoder&) = default;

  const ModelConfig& config() const { return config_; }

  /// Every parameter in registration order; names are unique.
  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  std::size_t parameter_count() const;
  Parameter* find_parameter(const std::string& name);

  Embedded embed_inputs(Tape& tape, const PatchGrid& patches, std::span<const std::size_t> token_ids);

  /// Composes the fused mask from the two modality graphs. Throws
  /// AlignmentError naming the modality when a graph's node count differs
  /// from its span length.
  GraphMask compose_mask(std::span<const ModalSpan> spans, const Graph& vision_graph,
                         const Graph& text_graph) const;

  /// Logits [1 x answer_vocab] for an explicit fused mask.
  Var forward(Tape& tape, const PatchGrid& patches, std::span<const std::size_t> token_ids,
              const GraphMask& mask, ForwardTrace* trace = nullptr);

  /// Builds the fused mask from the graphs, then runs forward().
  Var encode_classify(Tape& tape, const PatchGrid& patches, std::span<const std::size_t> token_ids,
                      const Graph& vision_graph, const Graph& text_graph, ForwardTrace* trace = nullptr);

  Parameter token_embedding;      // [text_vocab x d]
  Parameter patch_projection;     // [patch_input_dim x d]
  Parameter position_embedding;   // [max_len x d]
  Parameter modality_embedding;   // [3 x d], indexed by Modality
  std::vector<TransformerLayer> layers;
  Parameter shared_graph_bias;    // only when share_graph_bias
  Parameter final_ln_gain, final_ln_bias;
  Parameter head_weight;          // [d x answer_vocab]
  Parameter head_bias;            // [answer_vocab]

 private:
  ModelConfig config_;
};

/// Index of the largest logit; ties go to the lowest index.
std::size_t predict(std::span<const double> logits);

/// Softmax over finite logits.
std::vector<double> softmax(std::span<const double> logits);

}  // namespace mgt
