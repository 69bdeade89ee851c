#include "mrinet/cli.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <array>
#include <filesystem>

#include "mrinet/architectures.hpp"
#include "mrinet/atomic_file.hpp"
#include "mrinet/batches.hpp"
#include "mrinet/checkpoint.hpp"
#include "mrinet/dataset.hpp"
#include "mrinet/errors.hpp"
#include "mrinet/image.hpp"
#include "mrinet/parallel.hpp"
#include "mrinet/training.hpp"

namespace mrinet {

namespace fs = std::filesystem;

namespace {

struct SplitArgs {
  std::string data, out;
  double train_frac = 0.8;
  std::uint64_t seed = 0;
};

struct TrainArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
};

struct EvalArgs {
  std::string ckpt, manifest, data, out;
};

struct PredictArgs {
  std::string ckpt, image;
};

struct PreviewArgs {
  std::string data, out;
  std::size_t n = 8;
  std::uint64_t seed = 0;
  AugmentParams params;
};

std::string join_command_line(const std::vector<std::string> &args) {
  std::string s;
  for (const auto &a : args) {
    if (!s.empty())
      s += ' ';
    const bool plain = !a.empty() && a.find_first_of(" \t\n'\"\\$`") == std::string::npos;
    if (plain) {
      s += a;
      continue;
    }
    s += '\'';
    for (char c : a)
      s += c == '\'' ? std::string("'\\''") : std::string(1, c);
    s += '\'';
  }
  return s + "\n";
}

// A model restored from a checkpoint together with the settings it was
// trained with.
struct LoadedModel {
  NetworkGraph graph;
  ParameterSet<float> params;
  PreprocessMode preprocessing;
  std::string data_root;
};

LoadedModel load_model(const fs::path &ckpt_path) {
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  std::size_t h = default_input_shape[0], w = default_input_shape[1];
  PreprocessMode prep = parse_preprocess_mode(default_preprocessing(ckpt.model));
  std::string data_root;
  if (ckpt.config.is_object() && ckpt.config.contains("train_config")) {
    const TrainConfig tc = config_from_json(ckpt.config["train_config"]);
    if (tc.model != ckpt.model)
      throw CheckpointError("checkpoint config names model '" + tc.model + "' but holds '" +
                            ckpt.model + "'");
    h = tc.input_height;
    w = tc.input_width;
    prep = tc.effective_preprocessing();
    data_root = tc.data_root;
  }
  NetworkGraph graph = build_model(ckpt.model, {h, w, 3});
  ParameterSet<float> params = init_parameters<float>(graph, 0);
  restore_checkpoint(ckpt, graph, params);
  return {std::move(graph), std::move(params), prep, data_root};
}

int cmd_split(const SplitArgs &a, std::ostream &out, std::ostream &err) {
  const ScanResult scan = scan_dataset(a.data);
  const auto [train, val] = stratified_split(scan.index, a.train_frac, a.seed);
  const fs::path dir = a.out;
  write_file_atomic(dir / "train.tsv", format_manifest(train));
  write_file_atomic(dir / "val.tsv", format_manifest(val));

  const auto tc = train.class_counts();
  const auto vc = val.class_counts();
  out << fmt::format("{:<10} {:>8} {:>8} {:>8}\n", "class", "train", "val", "total");
  for (std::size_t k = 0; k < num_classes; ++k)
    out << fmt::format("{:<10} {:>8} {:>8} {:>8}\n", class_names[k], tc[k], vc[k], tc[k] + vc[k]);
  out << fmt::format("{:<10} {:>8} {:>8} {:>8}\n", "all", train.size(), val.size(),
                     train.size() + val.size());
  if (!scan.skipped.empty())
    err << fmt::format("skipped {} unreadable file(s)\n", scan.skipped.size());
  return exit_ok;
}

int cmd_train(const TrainArgs &a, const std::vector<std::string> &argv, std::ostream &out) {
  TrainConfig cfg = load_config(a.config);
  if (a.seed)
    cfg.seed = *a.seed;
  cfg.validate();
  if (cfg.output_dir.empty())
    throw ConfigError("output_dir: required by the train command");
  if (cfg.data_root.empty())
    throw ConfigError("data_root: required by the train command");
  if (cfg.train_manifest.empty() || cfg.val_manifest.empty())
    throw ConfigError("train_manifest and val_manifest: required by the train command");

  const DatasetIndex train_idx = read_manifest(cfg.train_manifest, cfg.data_root);
  const DatasetIndex val_idx = read_manifest(cfg.val_manifest, cfg.data_root);

  const fs::path dir = cfg.output_dir;
  write_file_atomic(dir / "config.json", config_to_json(cfg).dump(2) + "\n");
  write_file_atomic(dir / "command_line.txt", join_command_line(argv));

  Trainer trainer(cfg);
  const ModelSummary summary = model_summary(trainer.graph());
  write_file_atomic(dir / "summary.txt", format_summary(summary));
  out << fmt::format("model {}: {} convolution layers, {} parameters\n", summary.model,
                     summary.conv_layers, summary.total_params);
  out << fmt::format("train {} images, val {} images, {} epochs\n", train_idx.size(),
                     val_idx.size(), cfg.epochs);

  ImageSource train_src(train_idx, cfg.input_height, cfg.input_width);
  ImageSource val_src(val_idx, cfg.input_height, cfg.input_width);
  trainer.fit(train_src, val_src, [&](const EpochStats &r) {
    out << fmt::format("epoch {}/{} train_loss {:.4f} train_acc {:.4f} val_loss {:.4f} "
                       "val_acc {:.4f} ({:.1f} s)\n",
                       r.epoch, cfg.epochs, r.train_loss, r.train_acc, r.val_loss, r.val_acc,
                       r.seconds);
    out.flush();
  });
  out << fmt::format("wrote {}\n", (dir / "final.ckpt").string());
  return exit_ok;
}

int cmd_eval(const EvalArgs &a, std::ostream &out) {
  LoadedModel m = load_model(a.ckpt);
  fs::path root = a.data;
  if (root.empty())
    root = m.data_root;
  if (root.empty())
    root = fs::path(a.manifest).parent_path();
  const DatasetIndex idx = read_manifest(a.manifest, root);
  const auto &in = m.graph.input_shape();
  ImageSource src(idx, in[0], in[1], false);
  const EvalResult r = evaluate(m.graph, m.params, src, m.preprocessing);

  out << fmt::format("loss {:.6f}\n", r.loss);
  out << fmt::format("accuracy {:.6f} ({} images)\n", r.accuracy, r.total);
  out << fmt::format("{:<10}", "true\\pred");
  for (auto n : class_names)
    out << fmt::format(" {:>10}", n);
  out << "\n";
  for (std::size_t i = 0; i < num_classes; ++i) {
    out << fmt::format("{:<10}", class_names[i]);
    for (std::size_t j = 0; j < num_classes; ++j)
      out << fmt::format(" {:>10}", r.confusion[i][j]);
    out << "\n";
  }

  fs::path report = a.out;
  if (report.empty()) {
    const fs::path ck = a.ckpt;
    report = ck.parent_path() / (ck.stem().string() + "_eval.json");
  }
  write_file_atomic(report, r.to_json().dump(2) + "\n");
  out << fmt::format("report {}\n", report.string());
  return exit_ok;
}

int cmd_inspect(const std::string &model, std::ostream &out) {
  out << format_summary(model_summary(build_model(model)));
  return exit_ok;
}

int cmd_predict(const PredictArgs &a, std::ostream &out) {
  LoadedModel m = load_model(a.ckpt);
  for (const auto &[name, p] : predict(m.graph, m.params, a.image, m.preprocessing))
    out << fmt::format("{} {:.9g}\n", name, p);
  return exit_ok;
}

int cmd_augment_preview(const PreviewArgs &a, std::ostream &out) {
  a.params.validate();
  if (a.n == 0)
    throw ConfigError("--n: must be >= 1");
  const DatasetIndex idx = scan_dataset(a.data).index;
  if (idx.empty())
    throw IterationError("dataset has no images");
  const std::size_t n = std::min(a.n, idx.size());
  const auto order = epoch_order(idx.size(), a.seed, 0, true);
  const fs::path dir = a.out;

  std::string log = "index\tsource\tflipped\tangle_deg\tzoom\tshift_x\tshift_y\n";
  for (std::size_t i = 0; i < n; ++i) {
    const Record &rec = idx.records[order[i]];
    const Tensor<float> img = decode_image(idx.absolute(rec));
    Rng rng = Rng::keyed({a.seed, 0, i});
    const AugmentRecord draw = draw_augment(a.params, img.dim(0), img.dim(1), rng);
    write_file_atomic(dir / fmt::format("preview_{:03}.png", i),
                      encode_png(apply_augment(img, draw)));
    log += fmt::format("{}\t{}\t{}\t{:.17g}\t{:.17g}\t{:.17g}\t{:.17g}\n", i, rec.path,
                       draw.flipped ? 1 : 0, draw.angle_deg, draw.zoom, draw.shift_x,
                       draw.shift_y);
  }
  write_file_atomic(dir / "augment_log.tsv", log);
  out << fmt::format("wrote {} preview(s) to {}\n", n, dir.string());
  return exit_ok;
}

} // namespace

int run_cli(const std::vector<std::string> &args, std::ostream &out, std::ostream &err) {
  CLI::App app{"Brain-MRI classifier toolkit", args.empty() ? "mrinet" : args[0]};
  app.require_subcommand(1);
  bool strict = false;
  app.add_flag("--strict-deterministic", strict, "Single-threaded kernels");

  SplitArgs split;
  auto *c_split = app.add_subcommand("split", "Stratified train/validation manifests");
  c_split->add_option("--data", split.data, "Dataset root")->required();
  c_split->add_option("--train-frac", split.train_frac, "Training fraction")
      ->capture_default_str();
  c_split->add_option("--seed", split.seed, "Split seed")->capture_default_str();
  c_split->add_option("--out", split.out, "Output directory")->required();

  TrainArgs train;
  auto *c_train = app.add_subcommand("train", "Train a model from a JSON config");
  c_train->add_option("--config", train.config, "Config file")->required();
  c_train->add_option("--seed", train.seed, "Overrides the config seed");

  EvalArgs eval;
  auto *c_eval = app.add_subcommand("eval", "Evaluate a checkpoint on a manifest");
  c_eval->add_option("--ckpt", eval.ckpt, "Checkpoint")->required();
  c_eval->add_option("--manifest", eval.manifest, "Manifest")->required();
  c_eval->add_option("--data", eval.data, "Dataset root for manifest paths");
  c_eval->add_option("--out", eval.out, "JSON report path");

  std::string inspect_model;
  auto *c_inspect = app.add_subcommand("inspect", "Print a model summary");
  c_inspect->add_option("--model", inspect_model, "Model id")
      ->required()
      ->check(CLI::IsMember(model_ids()));

  PredictArgs pred;
  auto *c_predict = app.add_subcommand("predict", "Rank class probabilities for one image");
  c_predict->add_option("--ckpt", pred.ckpt, "Checkpoint")->required();
  c_predict->add_option("--image", pred.image, "Image file")->required();

  PreviewArgs prev;
  auto *c_prev = app.add_subcommand("augment-preview", "Write augmented samples and their draws");
  c_prev->add_option("--data", prev.data, "Dataset root")->required();
  c_prev->add_option("--n", prev.n, "Number of previews")->capture_default_str();
  c_prev->add_option("--seed", prev.seed, "Draw seed")->capture_default_str();
  c_prev->add_option("--out", prev.out, "Output directory")->required();
  c_prev->add_option("--rotation", prev.params.rotation_max_deg, "Max rotation (degrees)")
      ->capture_default_str();
  c_prev->add_option("--shift", prev.params.shift_max_frac, "Max shift (fraction)")
      ->capture_default_str();
  c_prev->add_option("--zoom", prev.params.zoom_max_frac, "Max zoom (fraction)")
      ->capture_default_str();
  c_prev->add_option("--hflip", prev.params.hflip_prob, "Flip probability")
      ->capture_default_str();

  std::vector<const char *> argv;
  if (args.empty())
    argv.push_back("mrinet");
  for (const auto &a : args)
    argv.push_back(a.c_str());
  try {
    app.parse(int(argv.size()), argv.data());
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? exit_ok : exit_validation;
  }

  if (strict)
    set_num_threads(1);
  try {
    if (c_split->parsed())
      return cmd_split(split, out, err);
    if (c_train->parsed())
      return cmd_train(train, args, out);
    if (c_eval->parsed())
      return cmd_eval(eval, out);
    if (c_inspect->parsed())
      return cmd_inspect(inspect_model, out);
    if (c_predict->parsed())
      return cmd_predict(pred, out);
    if (c_prev->parsed())
      return cmd_augment_preview(prev, out);
  } catch (const ConfigError &e) {
    err << "error: " << e.what() << "\n";
    return exit_validation;
  } catch (const std::exception &e) {
    err << "error: " << e.what() << "\n";
    return exit_runtime;
  }
  return exit_validation;
}

} // namespace mrinet
