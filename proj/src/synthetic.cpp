// SPDX-License-Identifier: Apache-2.0
#include "mgt/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <utility>

#include "mgt/error.hpp"
#include "mgt/rng.hpp"

namespace mgt {

namespace {

struct Offset {
  int drow;
  int dcol;
};

// Offset of the cube from the anchor for "cube <relation> sphere".
Offset relation_offset(const std::string& relation) {
  if (relation == "left-of") return {0, -1};
  if (relation == "right-of") return {0, 1};
  if (relation == "above") return {-1, 0};
  if (relation == "below") return {1, 0};
  throw ConfigError("relation '" + relation + "' has no spatial offset");
}

double color_intensity(const std::string& color) {
  const auto& colors = answer_vocabulary();
  const auto it = std::find(colors.begin(), colors.end(), color);
  return 0.25 * static_cast<double>(it - colors.begin() + 1);
}

// Whether pixel (y, x) of a P x P patch belongs to `shape`.
bool shape_covers(const std::string& shape, std::size_t y, std::size_t x, std::size_t p) {
  const double c = (static_cast<double>(p) - 1.0) / 2.0;
  const double dy = std::abs(static_cast<double>(y) - c);
  const double dx = std::abs(static_cast<double>(x) - c);
  if (shape == "cube") return true;
  if (shape == "sphere") return dy + dx <= c + 1e-9;
  if (shape == "cylinder") return dx <= static_cast<double>(p) / 4.0;
  return false;
}

Tensor render(const std::vector<SceneObject>& scene, const TaskConfig& task, Rng& rng) {
  const std::size_t p = task.patch_size;
  Tensor image({task.image_height(), task.image_width(), 1});
  for (const auto& obj : scene) {
    const double v = color_intensity(obj.color);
    for (std::size_t y = 0; y < p; ++y)
      for (std::size_t x = 0; x < p; ++x)
        if (shape_covers(obj.shape, y, x, p)) image(obj.row * p + y, obj.col * p + x, 0) = v;
  }
  if (task.noise > 0.0)
    for (auto& v : image.values()) v += task.noise * rng.normal();
  return image;
}

}  // namespace

void TaskConfig::validate() const {
  if (grid_rows < 3 || grid_cols < 3) throw ConfigError("scene grid must be at least 3x3");
  if (patch_size < 2) throw ConfigError("patch size must be at least 2");
  if (!(noise >= 0.0)) throw ConfigError("noise must be non-negative");
  if (!(distractor_prob >= 0.0 && distractor_prob <= 1.0)) throw ConfigError("distractor_prob must be in [0, 1]");
}

nlohmann::ordered_json TaskConfig::to_json() const {
  nlohmann::ordered_json j;
  j["grid_rows"] = grid_rows;
  j["grid_cols"] = grid_cols;
  j["patch_size"] = patch_size;
  j["noise"] = noise;
  j["distractor_prob"] = distractor_prob;
  return j;
}

TaskConfig TaskConfig::from_json(const nlohmann::json& j) {
  try {
    TaskConfig t;
    t.grid_rows = j.value("grid_rows", t.grid_rows);
    t.grid_cols = j.value("grid_cols", t.grid_cols);
    t.patch_size = j.value("patch_size", t.patch_size);
    t.noise = j.value("noise", t.noise);
    t.distractor_prob = j.value("distractor_prob", t.distractor_prob);
    t.validate();
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed task config: ") + e.what());
  }
}

const std::vector<std::string>& answer_vocabulary() {
  static const std::vector<std::string> colors{"red", "green", "blue", "yellow"};
  return colors;
}

const std::vector<std::string>& question_relations() {
  static const std::vector<std::string> relations{"left-of", "right-of", "above", "below"};
  return relations;
}

Vocabulary::Vocabulary(std::vector<std::string> words) : words_(std::move(words)) {
  if (words_.empty() || words_[0] != "<unk>") words_.insert(words_.begin(), "<unk>");
  for (std::size_t i = 0; i < words_.size(); ++i) {
    if (!index_.emplace(words_[i], i).second) throw ConfigError("duplicate vocabulary word '" + words_[i] + "'");
  }
}

Vocabulary Vocabulary::from_lexicon(const Lexicon& lexicon) {
  std::set<std::string> all;
  for (const auto* s : {&lexicon.relations, &lexicon.modifiers, &lexicon.determiners, &lexicon.entities})
    all.insert(s->begin(), s->end());
  return Vocabulary(std::vector<std::string>(all.begin(), all.end()));
}

std::size_t Vocabulary::id(const std::string& word) const {
  auto it = index_.find(word);
  return it == index_.end() ? 0 : it->second;
}

std::vector<std::size_t> Vocabulary::encode(const std::vector<Token>& tokens) const {
  std::vector<std::size_t> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id(t.surface));
  return ids;
}

Dataset generate_dataset(std::size_t n, std::uint64_t seed, const TaskConfig& task, const Vocabulary& vocab) {
  if (n == 0) throw ConfigError("dataset size must be at least 1");
  task.validate();
  const auto& colors = answer_vocabulary();
  const auto& relations = question_relations();
  const std::size_t k = colors.size();

  Dataset d;
  d.task = task;
  d.seed = seed;
  d.answer_vocab = colors;
  d.text_vocab = vocab.words();

  Rng rng(seed);
  std::vector<std::size_t> answers(n);
  for (std::size_t i = 0; i < n; ++i) answers[i] = i % k;
  rng.shuffle(answers.begin(), answers.end());

  d.samples.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng srng = rng.split(i);
    const std::size_t arow = 1 + srng.below(task.grid_rows - 2);
    const std::size_t acol = 1 + srng.below(task.grid_cols - 2);
    const std::size_t rel = srng.below(relations.size());

    // Cube colours: a permutation placing the answer colour at the asked side.
    std::vector<std::size_t> perm(k);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    srng.shuffle(perm.begin(), perm.end());
    std::swap(perm[rel], *std::find(perm.begin(), perm.end(), answers[i]));

    std::vector<SceneObject> scene;
    scene.push_back({"sphere", colors[srng.below(k)], arow, acol});
    for (std::size_t r = 0; r < relations.size(); ++r) {
      const Offset off = relation_offset(relations[r]);
      scene.push_back({"cube", colors[perm[r]], static_cast<std::size_t>(static_cast<long>(arow) + off.drow),
                       static_cast<std::size_t>(static_cast<long>(acol) + off.dcol)});
    }
    for (std::size_t r = 0; r < task.grid_rows; ++r) {
      for (std::size_t c = 0; c < task.grid_cols; ++c) {
        const bool taken = std::any_of(scene.begin(), scene.end(),
                                       [&](const SceneObject& o) { return o.row == r && o.col == c; });
        if (taken) continue;
        if (srng.bernoulli(task.distractor_prob)) scene.push_back({"cylinder", colors[srng.below(k)], r, c});
      }
    }

    SyntheticSample s;
    s.image = render(scene, task, srng);
    s.question = "color of cube " + relations[rel] + " sphere";
    s.answer = answers[i];
    s.scene_truth = std::move(scene);
    d.samples.push_back(std::move(s));
  }
  return d;
}

std::size_t answer_from_scene(const std::vector<SceneObject>& scene, const std::string& question) {
  const auto tokens = tokenize(question);
  const auto triples = parse_triples(tokens);
  for (const auto& t : triples) {
    const auto& rels = question_relations();
    if (std::find(rels.begin(), rels.end(), t.relation) == rels.end()) continue;
    const std::string& target = tokens[t.subject].surface;
    const std::string& anchor = tokens[t.object].surface;
    const Offset off = relation_offset(t.relation);
    for (const auto& a : scene) {
      if (a.shape != anchor) continue;
      const long r = static_cast<long>(a.row) + off.drow;
      const long c = static_cast<long>(a.col) + off.dcol;
      for (const auto& o : scene) {
        if (o.shape == target && static_cast<long>(o.row) == r && static_cast<long>(o.col) == c) {
          const auto& colors = answer_vocabulary();
          return static_cast<std::size_t>(std::find(colors.begin(), colors.end(), o.color) - colors.begin());
        }
      }
    }
  }
  throw ConfigError("question '" + question + "' has no answer in its scene");
}

nlohmann::ordered_json dataset_to_json(const Dataset& d) {
  nlohmann::ordered_json j;
  j["task"] = d.task.to_json();
  j["seed"] = d.seed;
  j["answer_vocab"] = d.answer_vocab;
  j["text_vocab"] = d.text_vocab;
  auto samples = nlohmann::ordered_json::array();
  for (const auto& s : d.samples) {
    nlohmann::ordered_json sj;
    sj["question"] = s.question;
    sj["answer"] = s.answer;
    auto scene = nlohmann::ordered_json::array();
    for (const auto& o : s.scene_truth) scene.push_back({o.shape, o.color, o.row, o.col});
    sj["scene"] = std::move(scene);
    sj["image_shape"] = s.image.shape();
    sj["image"] = std::vector<double>(s.image.values().begin(), s.image.values().end());
    samples.push_back(std::move(sj));
  }
  j["samples"] = std::move(samples);
  return j;
}

Dataset dataset_from_json(const nlohmann::json& j) {
  try {
    Dataset d;
    d.task = TaskConfig::from_json(j.at("task"));
    d.seed = j.at("seed").get<std::uint64_t>();
    d.answer_vocab = j.at("answer_vocab").get<std::vector<std::string>>();
    d.text_vocab = j.at("text_vocab").get<std::vector<std::string>>();
    for (const auto& sj : j.at("samples")) {
      SyntheticSample s;
      s.question = sj.at("question").get<std::string>();
      s.answer = sj.at("answer").get<std::size_t>();
      if (s.answer >= d.answer_vocab.size()) throw ConfigError("sample answer outside answer vocabulary");
      for (const auto& o : sj.at("scene")) {
        s.scene_truth.push_back({o.at(0).get<std::string>(), o.at(1).get<std::string>(), o.at(2).get<std::size_t>(),
                                 o.at(3).get<std::size_t>()});
      }
      s.image = Tensor(sj.at("image_shape").get<Shape>(), sj.at("image").get<std::vector<double>>());
      d.samples.push_back(std::move(s));
    }
    return d;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed dataset: ") + e.what());
  }
}

void write_dataset_file(const std::filesystem::path& path, const Dataset& d) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << dataset_to_json(d).dump() << "\n";
}

Dataset read_dataset_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open dataset " + path.string());
  try {
    return dataset_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

}  // namespace mgt
