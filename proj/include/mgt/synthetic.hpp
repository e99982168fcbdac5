// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "mgt/language.hpp"
#include "mgt/tensor.hpp"

namespace mgt {

/// Layout of the synthetic scenes.
///
/// Each image is a grid of cells, one patch per cell. An anchor sphere sits
/// on an interior cell with a cube on each of its four neighbours, the four
/// cubes taking four distinct colours. Remaining cells may hold a cylinder
/// distractor. The question names a spatial relation; the answer is the
/// colour of the cube in that relation to the sphere, so neither the image nor
/// the question alone determines it.
struct TaskConfig {
  std::size_t grid_rows = 3;
  std::size_t grid_cols = 3;
  std::size_t patch_size = 4;
  double noise = 0.03;
  double distractor_prob = 0.5;

  void validate() const;
  std::size_t image_height() const { return grid_rows * patch_size; }
  std::size_t image_width() const { return grid_cols * patch_size; }
  std::size_t patch_input_dim() const { return patch_size * patch_size; }

  nlohmann::ordered_json to_json() const;
  static TaskConfig from_json(const nlohmann::json& j);

  friend bool operator==(const TaskConfig&, const TaskConfig&) = default;
};

struct SceneObject {
  std::string shape;
  std::string color;
  std::size_t row = 0;
  std::size_t col = 0;

  friend bool operator==(const SceneObject&, const SceneObject&) = default;
};

struct SyntheticSample {
  Tensor image;  // [H x W x 1]
  std::string question;
  std::size_t answer = 0;
  std::vector<SceneObject> scene_truth;
};

/// The answer classes, in class-index order.
const std::vector<std::string>& answer_vocabulary();
/// Relations the generator asks about, with their (row, col) offsets from
/// the anchor.
const std::vector<std::string>& question_relations();

/// Token vocabulary: "<unk>" at id 0, then every lexicon word in sorted order.
class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> words);
  static Vocabulary from_lexicon(const Lexicon& lexicon);

  std::size_t size() const { return words_.size(); }
  std::size_t id(const std::string& word) const;
  const std::vector<std::string>& words() const { return words_; }
  std::vector<std::size_t> encode(const std::vector<Token>& tokens) const;

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.words_ == b.words_; }

 private:
  std::vector<std::string> words_;
  std::map<std::string, std::size_t> index_;
};

struct Dataset {
  TaskConfig task;
  std::uint64_t seed = 0;
  std::vector<std::string> answer_vocab;
  std::vector<std::string> text_vocab;
  std::vector<SyntheticSample> samples;
};

/// Deterministic in (n, seed, task). Answers are assigned round-robin before
/// shuffling, so class counts differ by at most one.
Dataset generate_dataset(std::size_t n, std::uint64_t seed, const TaskConfig& task = {},
                         const Vocabulary& vocab = Vocabulary::from_lexicon(Lexicon::builtin()));

/// Re-derives the answer from scene_truth and the question alone.
std::size_t answer_from_scene(const std::vector<SceneObject>& scene, const std::string& question);

nlohmann::ordered_json dataset_to_json(const Dataset& d);
Dataset dataset_from_json(const nlohmann::json& j);
void write_dataset_file(const std::filesystem::path& path, const Dataset& d);
Dataset read_dataset_file(const std::filesystem::path& path);

}  // namespace mgt
