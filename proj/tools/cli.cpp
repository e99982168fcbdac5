// SPDX-License-Identifier: Apache-2.0
#include "cli.hpp"

#include <CLI11.hpp>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>

#include "mgt/error.hpp"
#include "mgt/graph.hpp"
#include "mgt/language.hpp"
#include "mgt/mask.hpp"
#include "mgt/synthetic.hpp"
#include "mgt/tensor_io.hpp"
#include "mgt/trainer.hpp"
#include "mgt/vision.hpp"

namespace mgt {
namespace {

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

nlohmann::json read_json(const std::string& path) {
  try {
    return nlohmann::json::parse(read_text(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path + ": " + e.what(), e.byte);
  }
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path);
  out << text;
}

Connectivity parse_connectivity(const std::string& kind, std::size_t rows, std::size_t cols) {
  if (kind == "full") return Connectivity::full();
  if (kind == "grid4") return Connectivity::grid4(rows, cols);
  throw ConfigError("unknown connectivity '" + kind + "' (expected full or grid4)");
}

// Flags shared by train and ablate; each one only overrides when given.
struct TrainFlags {
  std::string config;
  std::size_t steps = 0, batch_size = 0, train_size = 0, eval_size = 0, eval_every = 0;
  double lr = 0, lambda = 0;
  std::uint64_t seed = 0;
  std::string mask_mode;
  CLI::Option *o_steps, *o_batch, *o_train, *o_eval, *o_every, *o_lr, *o_lambda, *o_seed, *o_mode;

  void attach(CLI::App* app, bool with_mask_mode) {
    app->add_option("--config", config, "TrainConfig JSON file");
    o_steps = app->add_option("--steps", steps, "Optimizer steps");
    o_batch = app->add_option("--batch-size", batch_size, "Minibatch size");
    o_lr = app->add_option("--lr", lr, "Adam learning rate");
    o_lambda = app->add_option("--lambda", lambda, "Weight of the trainable bias");
    o_seed = app->add_option("--seed", seed, "Run seed");
    o_train = app->add_option("--train-size", train_size, "Generated training samples");
    o_eval = app->add_option("--eval-size", eval_size, "Generated held-out samples");
    o_every = app->add_option("--eval-every", eval_every, "Steps between evaluations");
    o_mode = with_mask_mode ? app->add_option("--mask-mode", mask_mode, "graph, open or random") : nullptr;
  }

  TrainConfig resolve(TrainConfig c) const {
    if (!config.empty()) c = TrainConfig::from_json(read_json(config));
    if (*o_steps) c.steps = steps;
    if (*o_batch) c.batch_size = batch_size;
    if (*o_lr) c.adam.lr = lr;
    if (*o_lambda) c.model.lambda = lambda;
    if (*o_seed) c.seed = seed;
    if (*o_train) c.train_size = train_size;
    if (*o_eval) c.eval_size = eval_size;
    if (*o_every) c.eval_every = eval_every;
    if (o_mode && *o_mode) c.mask_mode = mask_mode_from_string(mask_mode);
    if (const char* env = std::getenv("MGT_SEED")) {
      try {
        std::size_t used = 0;
        c.seed = std::stoull(env, &used);
        if (used != std::string(env).size()) throw std::invalid_argument(env);
      } catch (const std::logic_error&) {
        throw ConfigError(std::string("MGT_SEED is not an unsigned integer: '") + env + "'");
      }
    }
    if (!std::isfinite(c.model.lambda) || c.model.lambda < 0) throw ConfigError("lambda must be non-negative");
    c.validate();
    return c;
  }
};

Dataset load_or_generate(const std::string& path, std::size_t n, std::uint64_t seed, const TaskConfig& task) {
  if (!path.empty()) return read_dataset_file(path);
  return generate_dataset(n, seed, task);
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Graph-masked multimodal transformer toolkit", "mgt"};
  app.require_subcommand(1);

  // build-graph
  auto* bg = app.add_subcommand("build-graph", "Build a text, semantic, table or vision graph as JSON");
  std::string bg_kind, bg_input, bg_lexicon, bg_out, bg_conn = "full";
  std::size_t bg_patches = 0, bg_patch_size = 4, bg_rows = 0, bg_cols = 0;
  bg->add_option("--kind", bg_kind, "text, semantic, table or vision")->required();
  bg->add_option("--input", bg_input, "Text file, table JSON or MGTN image [H,W,C]");
  bg->add_option("--lexicon", bg_lexicon, "Lexicon JSON (default: built-in)");
  bg->add_option("--out", bg_out, "Output graph JSON")->required();
  bg->add_option("--patches", bg_patches, "Number of patch nodes when no image is given");
  bg->add_option("--patch-size", bg_patch_size, "Patch side used to split --input images");
  bg->add_option("--connectivity", bg_conn, "full or grid4");
  bg->add_option("--rows", bg_rows, "Patch rows for grid4 without an image");
  bg->add_option("--cols", bg_cols, "Patch columns for grid4 without an image");

  // compose-mask
  auto* cm = app.add_subcommand("compose-mask", "Compose the fused attention mask from two graphs");
  std::string cm_vision, cm_text, cm_out;
  bool cm_no_cls = false;
  cm->add_option("--vision", cm_vision, "Vision graph JSON")->required();
  cm->add_option("--text", cm_text, "Text graph JSON")->required();
  cm->add_option("--out", cm_out, "Output QAMK mask")->required();
  cm->add_flag("--no-cls", cm_no_cls, "Omit the leading CLS position");

  // gen-data
  auto* gd = app.add_subcommand("gen-data", "Generate a synthetic question answering dataset");
  std::size_t gd_n = 0;
  std::uint64_t gd_seed = 1;
  std::string gd_out, gd_task, gd_lexicon;
  gd->add_option("--n", gd_n, "Number of samples")->required();
  gd->add_option("--seed", gd_seed, "Generator seed");
  gd->add_option("--out", gd_out, "Output dataset JSON")->required();
  gd->add_option("--task", gd_task, "Task layout JSON");
  gd->add_option("--lexicon", gd_lexicon, "Lexicon JSON defining the text vocabulary");

  // train
  auto* tr = app.add_subcommand("train", "Train an encoder and write a checkpoint");
  TrainFlags tr_flags;
  tr_flags.attach(tr, true);
  std::string tr_out, tr_metrics, tr_resume, tr_train_data, tr_eval_data;
  tr->add_option("--out", tr_out, "Checkpoint manifest path")->required();
  tr->add_option("--metrics", tr_metrics, "Metrics JSON-lines path (default: stdout)");
  tr->add_option("--resume", tr_resume, "Checkpoint to continue from");
  tr->add_option("--train-data", tr_train_data, "Dataset JSON instead of generated data");
  tr->add_option("--eval-data", tr_eval_data, "Held-out dataset JSON instead of generated data");

  // eval
  auto* ev = app.add_subcommand("eval", "Score a checkpoint on a dataset");
  std::string ev_ckpt, ev_data, ev_out;
  ev->add_option("--checkpoint", ev_ckpt, "Checkpoint manifest")->required();
  ev->add_option("--data", ev_data, "Dataset JSON (default: the run's held-out set)");
  ev->add_option("--out", ev_out, "Write the full result as JSON");

  // dump-attention
  auto* da = app.add_subcommand("dump-attention", "Write one head's attention weights for one sample");
  std::string da_ckpt, da_data, da_out;
  std::size_t da_index = 0, da_layer = 0, da_head = 0;
  da->add_option("--checkpoint", da_ckpt, "Checkpoint manifest")->required();
  da->add_option("--data", da_data, "Dataset JSON (default: the run's held-out set)");
  da->add_option("--index", da_index, "Sample index");
  da->add_option("--layer", da_layer, "Layer index");
  da->add_option("--head", da_head, "Head index");
  da->add_option("--out", da_out, "Output MGTN path; the sidecar gets a .json suffix")->required();

  // ablate
  auto* ab = app.add_subcommand("ablate", "Train once per mask mode and tabulate the results");
  TrainFlags ab_flags;
  ab_flags.attach(ab, false);
  std::string ab_out = "ablation";
  ab->add_option("--out", ab_out, "Output prefix for the .md and .json tables");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const CLI::App* sub = nullptr;
    for (auto* s : app.get_subcommands()) sub = s;
    err << (sub ? sub->help() : app.help());
    return 1;
  }

  try {
    if (*bg) {
      const Lexicon lexicon = bg_lexicon.empty() ? Lexicon::builtin() : Lexicon::from_file(bg_lexicon);
      Graph g(0);
      if (bg_kind == "text" || bg_kind == "semantic") {
        if (bg_input.empty()) throw ConfigError("--input is required for --kind " + bg_kind);
        const std::string text = read_text(bg_input);
        g = bg_kind == "text" ? text_graph(text, lexicon) : semantic_graph(text, lexicon);
      } else if (bg_kind == "table") {
        if (bg_input.empty()) throw ConfigError("--input is required for --kind table");
        g = semantic_graph(linearize_table(Table::from_json(read_json(bg_input))), lexicon);
      } else if (bg_kind == "vision") {
        std::size_t n = bg_patches, rows = bg_rows, cols = bg_cols;
        if (!bg_input.empty()) {
          const PatchGrid grid = patchify(read_tensor_file(bg_input), bg_patch_size);
          n = grid.count();
          rows = grid.rows;
          cols = grid.cols;
        } else if (bg_conn == "grid4" && rows == 0 && cols == 0) {
          throw ConfigError("grid4 without an image needs --rows and --cols");
        }
        g = build_dense_region_graph(n, parse_connectivity(bg_conn, rows, cols));
      } else {
        throw ConfigError("unknown graph kind '" + bg_kind + "' (expected text, semantic, table or vision)");
      }
      write_graph_file(bg_out, g);
      out << "wrote " << bg_out << ": " << g.num_nodes() << " nodes, " << g.edge_count() << " edges\n";
      return 0;
    }

    if (*cm) {
      const Graph vision = read_graph_file(cm_vision);
      const Graph text = read_graph_file(cm_text);
      std::vector<ModalSpan> spans;
      std::size_t at = 0;
      if (!cm_no_cls) spans.push_back({Modality::special, at++, 1});
      spans.push_back({Modality::vision, at, vision.num_nodes()});
      at += vision.num_nodes();
      spans.push_back({Modality::text, at, text.num_nodes()});
      const GraphMask mask = compose_block_mask(
          spans, {{Modality::vision, graph_to_mask(vision)}, {Modality::text, graph_to_mask(text)}});
      write_mask_file(cm_out, mask);
      out << "wrote " << cm_out << ": L=" << mask.size() << ", " << mask.blocked_count() << " blocked cells\n";
      return 0;
    }

    if (*gd) {
      const TaskConfig task = gd_task.empty() ? TaskConfig{} : TaskConfig::from_json(read_json(gd_task));
      const Vocabulary vocab = gd_lexicon.empty() ? Vocabulary::from_lexicon(Lexicon::builtin())
                                                  : Vocabulary::from_lexicon(Lexicon::from_file(gd_lexicon));
      const Dataset d = generate_dataset(gd_n, gd_seed, task, vocab);
      write_dataset_file(gd_out, d);
      out << "wrote " << gd_out << ": " << d.samples.size() << " samples\n";
      return 0;
    }

    if (*tr) {
      std::optional<Checkpoint> resume;
      TrainConfig base;
      if (!tr_resume.empty()) {
        resume.emplace(load_checkpoint(tr_resume));
        base = resume->train_config;
      }
      const TrainConfig config = tr_flags.resolve(base);
      const Dataset train_data =
          load_or_generate(tr_train_data, config.train_size, train_data_seed(config.seed), config.task);
      std::optional<Dataset> eval_data;
      if (!tr_eval_data.empty() || config.eval_size > 0) {
        eval_data = load_or_generate(tr_eval_data, config.eval_size, eval_data_seed(config.seed), config.task);
      }

      std::ofstream metrics_file;
      if (!tr_metrics.empty()) {
        metrics_file.open(tr_metrics, resume ? std::ios::app : std::ios::trunc);
        if (!metrics_file) throw Error("cannot write " + tr_metrics);
      }
      std::ostream& metrics = tr_metrics.empty() ? out : metrics_file;
      TrainResult result = train(config, train_data, eval_data ? &*eval_data : nullptr, jsonl_sink(metrics),
                                 resume ? &*resume : nullptr);
      save_checkpoint(tr_out, result.checkpoint);
      if (!tr_metrics.empty()) {
        out << "wrote " << tr_out << " after " << result.checkpoint.optimizer.step << " steps";
        if (!result.log.empty()) out << ", final loss " << result.log.back().loss;
        out << "\n";
      }
      return 0;
    }

    if (*ev) {
      Checkpoint ckpt = load_checkpoint(ev_ckpt);
      const auto& tc = ckpt.train_config;
      const Dataset data = load_or_generate(ev_data, std::max<std::size_t>(tc.eval_size, 1),
                                            eval_data_seed(tc.seed), tc.task);
      const EvalResult r = evaluate(ckpt, data);
      if (!ev_out.empty()) write_text(ev_out, r.to_json().dump(2) + "\n");
      out << "accuracy " << r.accuracy << " (" << r.count << " samples)\n";
      for (std::size_t c = 0; c < r.per_class_accuracy.size(); ++c) {
        out << "  " << ckpt.answer_vocab[c] << ": " << r.per_class_accuracy[c] << "\n";
      }
      return 0;
    }

    if (*da) {
      Checkpoint ckpt = load_checkpoint(da_ckpt);
      const auto& tc = ckpt.train_config;
      Dataset data = load_or_generate(da_data, std::max<std::size_t>(tc.eval_size, 1), eval_data_seed(tc.seed),
                                      tc.task);
      if (da_index >= data.samples.size()) {
        throw IndexError("sample index " + std::to_string(da_index) + " out of range (dataset has " +
                         std::to_string(data.samples.size()) + ")");
      }
      Dataset one = data;
      one.samples = {data.samples[da_index]};
      const auto prepared = prepare_samples(one, tc.mask_mode, Rng(tc.seed).split(da_index).next_u64(),
                                            ckpt.model.config().connectivity);
      const AttentionDump dump = dump_attention(ckpt, prepared.front(), da_layer, da_head);
      write_attention_dump(da_out, dump);
      out << "wrote " << da_out << " [" << dump.weights.rows() << " x " << dump.weights.cols() << "]\n";
      return 0;
    }

    if (*ab) {
      const TrainConfig config = ab_flags.resolve(TrainConfig{});
      const auto rows = run_ablation(config);
      const std::string md = ablation_markdown(rows);
      write_text(ab_out + ".md", md);
      write_text(ab_out + ".json", ablation_json(rows).dump(2) + "\n");
      out << md;
      return 0;
    }
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const nlohmann::json::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace mgt
