// SPDX-License-Identifier: Apache-2.0
#include "mgt/trainer.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>

#include "mgt/error.hpp"
#include "mgt/language.hpp"
#include "mgt/tensor_io.hpp"

namespace mgt {

std::string to_string(MaskMode m) {
  switch (m) {
    case MaskMode::graph: return "graph";
    case MaskMode::open: return "open";
    case MaskMode::random: return "random";
  }
  return "unknown";
}

MaskMode mask_mode_from_string(const std::string& s) {
  if (s == "graph") return MaskMode::graph;
  if (s == "open") return MaskMode::open;
  if (s == "random") return MaskMode::random;
  throw ConfigError("unknown mask mode '" + s + "' (expected graph, open or random)");
}

void TrainConfig::validate() const {
  if (steps == 0) throw ConfigError("steps must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (train_size == 0) throw ConfigError("train_size must be positive");
  if (eval_every == 0) throw ConfigError("eval_every must be positive");
  adam.validate();
  task.validate();
  model.validate();
}

nlohmann::ordered_json TrainConfig::to_json() const {
  nlohmann::ordered_json j;
  j["steps"] = steps;
  j["batch_size"] = batch_size;
  j["lr"] = adam.lr;
  j["beta1"] = adam.beta1;
  j["beta2"] = adam.beta2;
  j["eps"] = adam.eps;
  j["seed"] = seed;
  j["mask_mode"] = to_string(mask_mode);
  j["lambda"] = model.lambda;
  j["train_size"] = train_size;
  j["eval_size"] = eval_size;
  j["eval_every"] = eval_every;
  j["task"] = task.to_json();
  j["model"] = model.to_json();
  return j;
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  try {
    TrainConfig c;
    if (j.contains("model")) c.model = ModelConfig::from_json(j["model"]);
    if (j.contains("task")) c.task = TaskConfig::from_json(j["task"]);
    c.steps = j.value("steps", c.steps);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.adam.lr = j.value("lr", c.adam.lr);
    c.adam.beta1 = j.value("beta1", c.adam.beta1);
    c.adam.beta2 = j.value("beta2", c.adam.beta2);
    c.adam.eps = j.value("eps", c.adam.eps);
    c.seed = j.value("seed", c.seed);
    if (j.contains("mask_mode")) c.mask_mode = mask_mode_from_string(j["mask_mode"].get<std::string>());
    c.model.lambda = j.value("lambda", c.model.lambda);
    c.train_size = j.value("train_size", c.train_size);
    c.eval_size = j.value("eval_size", c.eval_size);
    c.eval_every = j.value("eval_every", c.eval_every);
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed train config: ") + e.what());
  }
}

nlohmann::ordered_json StepMetrics::to_json() const {
  nlohmann::ordered_json j;
  j["step"] = step;
  j["loss"] = loss;
  if (eval_acc) j["eval_acc"] = *eval_acc;
  return j;
}

nlohmann::ordered_json EvalResult::to_json() const {
  nlohmann::ordered_json j;
  j["accuracy"] = accuracy;
  j["count"] = count;
  j["per_class_accuracy"] = per_class_accuracy;
  j["confusion"] = confusion;
  return j;
}

GraphMask random_mask(std::size_t size, Rng& rng) {
  GraphMask m(size);
  for (std::size_t q = 0; q < size; ++q)
    for (std::size_t k = 0; k < size; ++k) m.set_open(q, k, q == k || rng.bernoulli(0.5));
  return m;
}

std::vector<PreparedSample> prepare_samples(const Dataset& data, MaskMode mode, std::uint64_t mask_seed,
                                            const Connectivity& connectivity) {
  const Vocabulary vocab(data.text_vocab);
  const Rng mask_rng(mask_seed);
  std::vector<PreparedSample> out;
  out.reserve(data.samples.size());
  for (std::size_t i = 0; i < data.samples.size(); ++i) {
    const auto& s = data.samples[i];
    PreparedSample p;
    p.patches = patchify(s.image, data.task.patch_size);
    const auto tokens = tokenize(s.question);
    p.token_ids = vocab.encode(tokens);
    for (const auto& t : tokens) p.token_surfaces.push_back(t.surface);
    p.answer = s.answer;
    const std::size_t n_patches = p.patches.count();
    p.spans = {ModalSpan{Modality::special, 0, 1}, ModalSpan{Modality::vision, 1, n_patches},
               ModalSpan{Modality::text, 1 + n_patches, tokens.size()}};
    const std::size_t len = 1 + n_patches + tokens.size();
    switch (mode) {
      case MaskMode::graph: {
        Connectivity conn = connectivity;
        if (conn.kind == Connectivity::Kind::grid4 && conn.rows * conn.cols != n_patches) {
          conn = Connectivity::grid4(p.patches.rows, p.patches.cols);
        }
        const Graph vision = build_dense_region_graph(n_patches, conn);
        const Graph text = build_text_graph(tokens, parse_triples(tokens));
        p.mask = compose_block_mask(p.spans, {{Modality::vision, graph_to_mask(vision)},
                                              {Modality::text, graph_to_mask(text)}});
        break;
      }
      case MaskMode::open:
        p.mask = GraphMask::all_open(len);
        break;
      case MaskMode::random: {
        Rng r = mask_rng.split(i);
        p.mask = random_mask(len, r);
        break;
      }
    }
    out.push_back(std::move(p));
  }
  return out;
}

std::uint64_t train_data_seed(std::uint64_t run_seed) { return Rng(run_seed).split(11).next_u64(); }
std::uint64_t eval_data_seed(std::uint64_t run_seed) { return Rng(run_seed).split(12).next_u64(); }

namespace {

std::uint64_t mask_seed_for(std::uint64_t run_seed, std::uint64_t role) {
  return Rng(run_seed).split(20 + role).next_u64();
}

void check_vocab(const std::vector<std::string>& expected_text, const std::vector<std::string>& expected_answers,
                 const Dataset& data, const char* what) {
  if (data.text_vocab != expected_text) {
    throw ConfigError(std::string(what) + " text vocabulary does not match the model's");
  }
  if (data.answer_vocab != expected_answers) {
    throw ConfigError(std::string(what) + " answer vocabulary does not match the model's");
  }
}

// Minibatch membership depends only on (seed, step), which keeps resumed runs
// on the same trajectory as uninterrupted ones.
class BatchSampler {
 public:
  BatchSampler(std::uint64_t seed, std::size_t n, std::size_t batch)
      : rng_(Rng(seed).split(5)), n_(n), batch_(batch) {}

  std::vector<std::size_t> batch(std::size_t step) {
    std::vector<std::size_t> out(batch_);
    for (std::size_t b = 0; b < batch_; ++b) {
      const std::size_t g = (step - 1) * batch_ + b;
      out[b] = permutation(g / n_)[g % n_];
    }
    return out;
  }

 private:
  const std::vector<std::size_t>& permutation(std::size_t epoch) {
    if (epoch != epoch_ || perm_.empty()) {
      perm_.resize(n_);
      std::iota(perm_.begin(), perm_.end(), std::size_t{0});
      Rng r = rng_.split(epoch);
      r.shuffle(perm_.begin(), perm_.end());
      epoch_ = epoch;
    }
    return perm_;
  }

  Rng rng_;
  std::size_t n_;
  std::size_t batch_;
  std::size_t epoch_ = 0;
  std::vector<std::size_t> perm_;
};

}  // namespace

TrainResult train(const TrainConfig& config_in, const Dataset& train_data, const Dataset* eval_data,
                  const MetricsSink& sink, const Checkpoint* resume) {
  TrainConfig config = config_in;
  config.model.seed = config.seed;
  config.model.text_vocab_size = train_data.text_vocab.size();
  config.model.answer_vocab_size = train_data.answer_vocab.size();
  config.model.patch_input_dim = train_data.task.patch_input_dim();
  config.task = train_data.task;
  config.validate();
  if (train_data.samples.empty()) throw ConfigError("training set is empty");
  if (eval_data) check_vocab(train_data.text_vocab, train_data.answer_vocab, *eval_data, "eval set");

  std::optional<MultimodalEncoder> model;
  AdamState optimizer;
  if (resume) {
    check_vocab(resume->text_vocab, resume->answer_vocab, train_data, "training set");
    if (!(resume->model.config() == config.model)) {
      throw ConfigError("checkpoint model configuration differs from the requested one");
    }
    model.emplace(resume->model);
    optimizer = resume->optimizer;
  } else {
    model.emplace(config.model);
  }
  auto params = model->parameters();
  if (!resume) optimizer = AdamState::for_params(params);

  const auto train_set = prepare_samples(train_data, config.mask_mode, mask_seed_for(config.seed, 0),
                                         config.model.connectivity);
  std::vector<PreparedSample> eval_set;
  if (eval_data) {
    eval_set = prepare_samples(*eval_data, config.mask_mode, mask_seed_for(config.seed, 1), config.model.connectivity);
  }

  TrainResult result{Checkpoint{config, *model, optimizer, train_data.text_vocab, train_data.answer_vocab}, {}};
  BatchSampler sampler(config.seed, train_set.size(), config.batch_size);
  const double inv_batch = 1.0 / static_cast<double>(config.batch_size);
  Tape tape;

  for (std::size_t step = optimizer.step + 1; step <= config.steps; ++step) {
    zero_grads(params);
    double loss_sum = 0.0;
    for (auto idx : sampler.batch(step)) {
      const auto& s = train_set[idx];
      tape.clear();
      Var logits = model->forward(tape, s.patches, s.token_ids, s.mask);
      if (!logits.value().all_finite()) {
        throw NumericError("training diverged at step " + std::to_string(step) + ": non-finite logits");
      }
      Var loss = cross_entropy(logits, s.answer);
      tape.backward(loss, inv_batch);
      loss_sum += loss.value()[0];
    }
    const double mean_loss = loss_sum * inv_batch;
    if (!std::isfinite(mean_loss)) {
      throw NumericError("training diverged at step " + std::to_string(step) + ": loss is not finite");
    }
    adam_step(params, optimizer, config.adam);

    StepMetrics m{step, mean_loss, std::nullopt};
    if (eval_data && (step % config.eval_every == 0 || step == config.steps)) {
      m.eval_acc = evaluate(*model, eval_set).accuracy;
    }
    if (sink) sink(m);
    result.log.push_back(m);
  }
  result.checkpoint.model = std::move(*model);
  result.checkpoint.optimizer = std::move(optimizer);
  return result;
}

EvalResult evaluate(MultimodalEncoder& model, const std::vector<PreparedSample>& samples) {
  const std::size_t k = model.config().answer_vocab_size;
  EvalResult r;
  r.count = samples.size();
  r.confusion.assign(k, std::vector<std::size_t>(k, 0));
  std::size_t correct = 0;
  Tape tape;
  for (const auto& s : samples) {
    tape.clear();
    Var logits = model.forward(tape, s.patches, s.token_ids, s.mask);
    const std::size_t pred = predict(logits.value().values());
    if (s.answer >= k) throw IndexError("sample answer outside the model's answer vocabulary");
    ++r.confusion[s.answer][pred];
    if (pred == s.answer) ++correct;
  }
  r.accuracy = samples.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(samples.size());
  r.per_class_accuracy.resize(k, 0.0);
  for (std::size_t c = 0; c < k; ++c) {
    const auto total = std::accumulate(r.confusion[c].begin(), r.confusion[c].end(), std::size_t{0});
    r.per_class_accuracy[c] = total ? static_cast<double>(r.confusion[c][c]) / static_cast<double>(total) : 0.0;
  }
  return r;
}

EvalResult evaluate(Checkpoint& checkpoint, const Dataset& data) {
  check_vocab(checkpoint.text_vocab, checkpoint.answer_vocab, data, "dataset");
  if (data.task.patch_input_dim() != checkpoint.model.config().patch_input_dim) {
    throw ConfigError("dataset patch size does not match the checkpoint");
  }
  const auto samples = prepare_samples(data, checkpoint.train_config.mask_mode,
                                       mask_seed_for(checkpoint.train_config.seed, 2),
                                       checkpoint.model.config().connectivity);
  return evaluate(checkpoint.model, samples);
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  std::vector<std::uint8_t> blob;
  auto tensors = nlohmann::ordered_json::array();
  auto add = [&](const std::string& name, const Tensor& t, bool frozen) {
    nlohmann::ordered_json e;
    e["name"] = name;
    e["shape"] = t.shape();
    e["offset"] = blob.size();
    e["frozen"] = frozen;
    tensors.push_back(std::move(e));
    append_tensor(blob, t);
  };
  const auto params = checkpoint.model.parameters();
  for (const auto* p : params) add(p->name, p->value, p->frozen);
  const bool has_moments = checkpoint.optimizer.m.size() == params.size();
  if (has_moments) {
    for (std::size_t i = 0; i < params.size(); ++i) add("adam.m." + params[i]->name, checkpoint.optimizer.m[i], false);
    for (std::size_t i = 0; i < params.size(); ++i) add("adam.v." + params[i]->name, checkpoint.optimizer.v[i], false);
  }

  std::filesystem::path blob_path = path;
  blob_path += ".bin";
  nlohmann::ordered_json j;
  j["format"] = "mgt-checkpoint";
  j["version"] = 1;
  j["model_config"] = checkpoint.model.config().to_json();
  j["train_config"] = checkpoint.train_config.to_json();
  j["text_vocab"] = checkpoint.text_vocab;
  j["answer_vocab"] = checkpoint.answer_vocab;
  j["optimizer"] = {{"step", checkpoint.optimizer.step}, {"has_moments", has_moments}};
  j["blob"] = blob_path.filename().string();
  j["blob_bytes"] = blob.size();
  j["tensors"] = std::move(tensors);

  write_file_bytes(blob_path, blob);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what(), e.byte);
  }
  try {
    if (j.at("format") != "mgt-checkpoint") throw ConfigError(path.string() + " is not a checkpoint manifest");
    const auto model_config = ModelConfig::from_json(j.at("model_config"));
    const auto blob = read_file_bytes(path.parent_path() / j.at("blob").get<std::string>());

    std::map<std::string, Tensor> tensors;
    for (const auto& e : j.at("tensors")) {
      std::size_t offset = e.at("offset").get<std::size_t>();
      const std::size_t start = offset;
      Tensor t = decode_tensor(blob, offset);
      if (t.shape() != e.at("shape").get<Shape>()) throw FormatError("tensor shape disagrees with manifest", start);
      tensors.emplace(e.at("name").get<std::string>(), std::move(t));
    }

    Checkpoint c{TrainConfig::from_json(j.at("train_config")), MultimodalEncoder(model_config), {},
                 j.at("text_vocab").get<std::vector<std::string>>(),
                 j.at("answer_vocab").get<std::vector<std::string>>()};
    c.train_config.model = model_config;
    auto params = c.model.parameters();
    for (auto* p : params) {
      auto it = tensors.find(p->name);
      if (it == tensors.end()) throw ConfigError("checkpoint is missing tensor '" + p->name + "'");
      if (it->second.shape() != p->value.shape()) {
        throw ConfigError("tensor '" + p->name + "' has shape " + shape_string(it->second.shape()) + ", expected " +
                          shape_string(p->value.shape()));
      }
      p->value = it->second;
    }
    c.optimizer = AdamState::for_params(params);
    c.optimizer.step = j.at("optimizer").at("step").get<std::uint64_t>();
    if (j.at("optimizer").value("has_moments", false)) {
      for (std::size_t i = 0; i < params.size(); ++i) {
        c.optimizer.m[i] = tensors.at("adam.m." + params[i]->name);
        c.optimizer.v[i] = tensors.at("adam.v." + params[i]->name);
      }
    }
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed checkpoint manifest: ") + e.what());
  } catch (const std::out_of_range&) {
    throw ConfigError("checkpoint is missing optimizer moments");
  }
}

MetricsSink jsonl_sink(std::ostream& out) {
  return [&out](const StepMetrics& m) { out << m.to_json().dump() << "\n" << std::flush; };
}

AttentionDump dump_attention(Checkpoint& checkpoint, const PreparedSample& sample, std::size_t layer,
                             std::size_t head) {
  const auto& cfg = checkpoint.model.config();
  if (layer >= cfg.num_layers) {
    throw IndexError("layer " + std::to_string(layer) + " out of range (model has " + std::to_string(cfg.num_layers) +
                     ")");
  }
  if (head >= cfg.heads) {
    throw IndexError("head " + std::to_string(head) + " out of range (model has " + std::to_string(cfg.heads) + ")");
  }
  Tape tape;
  ForwardTrace trace;
  Var logits = checkpoint.model.forward(tape, sample.patches, sample.token_ids, sample.mask, &trace);

  AttentionDump d;
  d.layer = layer;
  d.head = head;
  d.weights = trace.layers[layer][head];
  d.spans = sample.spans;
  d.tokens.push_back("[CLS]");
  for (std::size_t i = 0; i < sample.patches.count(); ++i) d.tokens.push_back("patch_" + std::to_string(i));
  d.tokens.insert(d.tokens.end(), sample.token_surfaces.begin(), sample.token_surfaces.end());
  d.answer_confidence = softmax(logits.value().values());
  return d;
}

void write_attention_dump(const std::filesystem::path& tensor_path, const AttentionDump& dump) {
  write_tensor_file(tensor_path, dump.weights);
  nlohmann::ordered_json j;
  j["layer"] = dump.layer;
  j["head"] = dump.head;
  auto spans = nlohmann::ordered_json::array();
  for (const auto& s : dump.spans) {
    spans.push_back({{"modality", to_string(s.modality)}, {"offset", s.offset}, {"length", s.length}});
  }
  j["spans"] = std::move(spans);
  j["tokens"] = dump.tokens;
  j["answer_confidence"] = dump.answer_confidence;
  std::filesystem::path sidecar = tensor_path;
  sidecar += ".json";
  std::ofstream out(sidecar, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + sidecar.string());
  out << j.dump(2) << "\n";
}

std::vector<AblationRow> run_ablation(const TrainConfig& config) {
  config.validate();
  const Dataset train_data = generate_dataset(config.train_size, train_data_seed(config.seed), config.task);
  const Dataset eval_data = generate_dataset(std::max<std::size_t>(config.eval_size, 1),
                                             eval_data_seed(config.seed), config.task);
  std::vector<AblationRow> rows;
  for (MaskMode mode : {MaskMode::graph, MaskMode::open, MaskMode::random}) {
    TrainConfig c = config;
    c.mask_mode = mode;
    AblationRow row;
    row.mode = mode;
    try {
      TrainResult r = train(c, train_data, nullptr);
      row.final_loss = r.log.empty() ? 0.0 : r.log.back().loss;
      row.train_accuracy = evaluate(r.checkpoint, train_data).accuracy;
      row.eval_accuracy = evaluate(r.checkpoint, eval_data).accuracy;
      row.finite = std::isfinite(row.final_loss);
    } catch (const NumericError&) {
      row.finite = false;
      row.final_loss = std::numeric_limits<double>::quiet_NaN();
    }
    rows.push_back(row);
  }
  return rows;
}

std::string ablation_markdown(const std::vector<AblationRow>& rows) {
  std::ostringstream s;
  s << "| mask | train acc | eval acc | final loss | finite |\n";
  s << "|------|-----------|----------|------------|--------|\n";
  s << std::fixed;
  for (const auto& r : rows) {
    s << "| " << to_string(r.mode) << " | " << std::setprecision(4) << r.train_accuracy << " | " << r.eval_accuracy
      << " | " << std::setprecision(6) << r.final_loss << " | " << (r.finite ? "yes" : "no") << " |\n";
  }
  return s.str();
}

nlohmann::ordered_json ablation_json(const std::vector<AblationRow>& rows) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& r : rows) {
    nlohmann::ordered_json e;
    e["mask_mode"] = to_string(r.mode);
    e["train_accuracy"] = r.train_accuracy;
    e["eval_accuracy"] = r.eval_accuracy;
    e["final_loss"] = r.finite ? nlohmann::ordered_json(r.final_loss) : nlohmann::ordered_json(nullptr);
    e["finite"] = r.finite;
    arr.push_back(std::move(e));
  }
  return {{"rows", std::move(arr)}};
}

}  // namespace mgt
