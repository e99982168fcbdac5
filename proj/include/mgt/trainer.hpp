// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "mgt/mask.hpp"
#include "mgt/model.hpp"
#include "mgt/optim.hpp"
#include "mgt/synthetic.hpp"

namespace mgt {

/// Which fused mask the encoder sees. `open` and `random` are the ablations
/// of the graph-derived mask.
enum class MaskMode { graph, open, random };

std::string to_string(MaskMode m);
MaskMode mask_mode_from_string(const std::string& s);

struct TrainConfig {
  std::size_t steps = 2000;
  std::size_t batch_size = 32;
  AdamConfig adam;
  std::uint64_t seed = 1;
  MaskMode mask_mode = MaskMode::graph;
  std::size_t train_size = 2000;
  std::size_t eval_size = 500;
  std::size_t eval_every = 500;
  TaskConfig task;
  /// Architecture. Vocabulary sizes, patch_input_dim and seed are filled in
  /// from the data and `seed` when training starts. `lambda` lives here.
  ModelConfig model;

  void validate() const;
  nlohmann::ordered_json to_json() const;
  /// Keys absent from `j` keep their defaults.
  static TrainConfig from_json(const nlohmann::json& j);
};

/// A sample with everything the encoder needs precomputed.
struct PreparedSample {
  PatchGrid patches;
  std::vector<std::size_t> token_ids;
  std::vector<std::string> token_surfaces;
  std::vector<ModalSpan> spans;
  GraphMask mask;
  std::size_t answer = 0;
};

/// Builds patches, token ids, graphs and the fused mask for every sample.
/// Random masks are Bernoulli(0.5) per cell with an Open diagonal, seeded
/// from (`mask_seed`, sample index).
std::vector<PreparedSample> prepare_samples(const Dataset& data, MaskMode mode, std::uint64_t mask_seed,
                                            const Connectivity& connectivity = Connectivity::full());

GraphMask random_mask(std::size_t size, Rng& rng);

struct StepMetrics {
  std::size_t step = 0;
  double loss = 0.0;
  std::optional<double> eval_acc;

  nlohmann::ordered_json to_json() const;
};

/// Trained model plus optimizer state, enough to resume or evaluate.
struct Checkpoint {
  TrainConfig train_config;
  MultimodalEncoder model;
  AdamState optimizer;
  std::vector<std::string> text_vocab;
  std::vector<std::string> answer_vocab;
};

struct EvalResult {
  double accuracy = 0.0;
  std::size_t count = 0;
  /// confusion[truth][predicted]
  std::vector<std::vector<std::size_t>> confusion;
  std::vector<double> per_class_accuracy;

  nlohmann::ordered_json to_json() const;
};

using MetricsSink = std::function<void(const StepMetrics&)>;

/// Seeds for the generated train/eval sets of a run.
std::uint64_t train_data_seed(std::uint64_t run_seed);
std::uint64_t eval_data_seed(std::uint64_t run_seed);

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<StepMetrics> log;
};

/// Adam on the mean cross-entropy of each minibatch. Minibatches are drawn
/// from seeded epoch permutations. `eval` may be empty; when given it is
/// scored every `eval_every` steps and at the last step. Throws NumericError
/// naming the step if the loss turns non-finite. `resume` continues from a
/// checkpoint's parameters, optimizer moments and step counter.
TrainResult train(const TrainConfig& config, const Dataset& train_data, const Dataset* eval_data = nullptr,
                  const MetricsSink& sink = {}, const Checkpoint* resume = nullptr);

EvalResult evaluate(MultimodalEncoder& model, const std::vector<PreparedSample>& samples);
/// Checks vocabularies against the checkpoint (ConfigError on mismatch).
EvalResult evaluate(Checkpoint& checkpoint, const Dataset& data);

/// Manifest JSON at `path`; the tensor blob is written next to it with a
/// ".bin" suffix. The blob is a sequence of MGTN records; the manifest maps
/// each name to its byte offset.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Appends metrics as JSON lines, flushing after every record.
MetricsSink jsonl_sink(std::ostream& out);

struct AttentionDump {
  std::size_t layer = 0;
  std::size_t head = 0;
  Tensor weights;  // [L x L]
  std::vector<ModalSpan> spans;
  std::vector<std::string> tokens;
  std::vector<double> answer_confidence;
};

/// Post-softmax weights of one layer and head for one sample.
AttentionDump dump_attention(Checkpoint& checkpoint, const PreparedSample& sample, std::size_t layer,
                             std::size_t head);
/// Weights as MGTN at `tensor_path`; spans, token surfaces and answer
/// confidences as JSON at `tensor_path` + ".json".
void write_attention_dump(const std::filesystem::path& tensor_path, const AttentionDump& dump);

struct AblationRow {
  MaskMode mode = MaskMode::graph;
  double train_accuracy = 0.0;
  double eval_accuracy = 0.0;
  double final_loss = 0.0;
  bool finite = true;
};

/// Trains and evaluates once per mask mode with identical seeds and data.
std::vector<AblationRow> run_ablation(const TrainConfig& config);
std::string ablation_markdown(const std::vector<AblationRow>& rows);
nlohmann::ordered_json ablation_json(const std::vector<AblationRow>& rows);

}  // namespace mgt
