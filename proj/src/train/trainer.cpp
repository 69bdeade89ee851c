#include <chrono>
#include <cmath>
#include <cstdio>

#include "mrinet/architectures.hpp"
#include "mrinet/atomic_file.hpp"
#include "mrinet/errors.hpp"
#include "mrinet/training.hpp"
#include "mrinet/weights.hpp"

namespace mrinet {

namespace fs = std::filesystem;

std::string History::to_csv() const {
  std::string out = "epoch,train_loss,train_acc,val_loss,val_acc\n";
  char line[160];
  for (const auto &r : rows) {
    std::snprintf(line, sizeof line, "%zu,%.6g,%.6g,%.6g,%.6g\n", r.epoch, r.train_loss,
                  r.train_acc, r.val_loss, r.val_acc);
    out += line;
  }
  return out;
}

Trainer::Trainer(TrainConfig config)
    : config_(std::move(config)),
      graph_((config_.validate(),
              build_model(config_.model, {config_.input_height, config_.input_width, 3}))),
      params_(init_parameters<float>(graph_, config_.seed)) {
  if (!config_.init_weights.empty()) {
    const NameMap map = config_.init_weights_scope == "all" ? identity_name_map(graph_)
                                                            : backbone_name_map(graph_);
    import_weights(graph_, params_, config_.init_weights, map);
  }
  if (!config_.resume.empty()) {
    restore(load_checkpoint(config_.resume));
    last_checkpoint_ = config_.resume;
  }
}

bool Trainer::trains(const std::string &slot) const {
  if (params_.kind(slot) != SlotKind::trainable)
    return false;
  if (config_.backbone_mode == BackboneMode::finetune)
    return true;
  return slot.rfind("head.", 0) == 0;
}

void Trainer::restore(const Checkpoint &ckpt) {
  if (ckpt.model != graph_.model())
    throw CheckpointError("checkpoint holds model '" + ckpt.model + "', expected '" +
                          graph_.model() + "'");
  AdamState<float> adam;
  restore_checkpoint(ckpt, graph_, params_, &adam);
  adam_ = std::move(adam);
  epochs_done_ = ckpt.epoch;
  history_.rows.clear();
  if (ckpt.config.contains("history"))
    for (const auto &r : ckpt.config["history"])
      history_.rows.push_back({r.at("epoch").get<std::size_t>(), r.at("train_loss").get<double>(),
                               r.at("train_acc").get<double>(), r.at("val_loss").get<double>(),
                               r.at("val_acc").get<double>(), 0.0});
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint c;
  c.model = graph_.model();
  nlohmann::json rows = nlohmann::json::array();
  for (const auto &r : history_.rows)
    rows.push_back({{"epoch", r.epoch},
                    {"train_loss", r.train_loss},
                    {"train_acc", r.train_acc},
                    {"val_loss", r.val_loss},
                    {"val_acc", r.val_acc}});
  c.config = {{"train_config", config_to_json(config_)}, {"history", rows}};
  c.epoch = epochs_done_;
  c.params = params_;
  c.adam = adam_;
  return c;
}

EpochStats Trainer::train_epoch(ImageSource &train, ImageSource &val) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::uint64_t epoch = epochs_done_ + 1;
  const PreprocessMode prep = config_.effective_preprocessing();
  if (train.height() != config_.input_height || train.width() != config_.input_width)
    throw DimensionError("image", "training images do not match the configured input size");

  BatchOptions opt;
  opt.batch_size = config_.batch_size;
  opt.seed = config_.seed;
  opt.augment = config_.augment;
  opt.augment_params = config_.augment_params;
  opt.preprocessing = prep;
  BatchIterator batches(train, opt, epoch);

  RunOptions run_opt;
  run_opt.mode = Mode::train;
  run_opt.batchnorm_mode = config_.batchnorm_mode;
  if (config_.backbone_mode == BackboneMode::frozen)
    run_opt.frozen = is_backbone_layer;

  double loss_sum = 0;
  std::size_t correct = 0, seen = 0;
  for (std::size_t b = 0; b < batches.batch_count(); ++b) {
    Batch batch = *batches.next();
    run_opt.dropout_seed = Rng::keyed({config_.seed, epoch, b}).next();

    // Running statistics change during the forward pass; keep a copy so a
    // failed step leaves the model untouched.
    std::map<std::string, Tensor<float>> state;
    for (const auto &[name, e] : params_.entries())
      if (e.kind == SlotKind::state)
        state.emplace(name, e.value);
    auto roll_back = [&] {
      for (auto &[name, t] : state)
        params_.at(name) = std::move(t);
    };

    Tape<float> tape;
    const Var x = tape.constant(std::move(batch.images));
    const auto run = run_graph(tape, graph_, params_, x, run_opt);
    const Var loss = tape.softmax_cross_entropy(run.logits, batch.labels);
    const double value = tape.value(loss)[0];
    const std::string where = "epoch " + std::to_string(epoch) + ", batch " + std::to_string(b + 1);
    if (!std::isfinite(value)) {
      roll_back();
      throw TrainingHalted("non-finite loss at " + where, last_checkpoint_);
    }
    const auto grads = tape.backward(loss);
    std::map<std::string, Tensor<float>> g;
    for (const auto &[name, var] : run.params)
      if (trains(name))
        g.emplace(name, grads.of(var));
    try {
      adam_step(params_, g, adam_, config_.adam);
    } catch (const NumericError &e) {
      roll_back();
      throw TrainingHalted(std::string(e.what()) + " at " + where, last_checkpoint_);
    }

    const auto pred = argmax_rows(tape.value(run.output));
    for (std::size_t i = 0; i < pred.size(); ++i)
      correct += pred[i] == batch.labels[i];
    loss_sum += value * double(pred.size());
    seen += pred.size();
  }

  const EvalResult v = evaluate(graph_, params_, val, prep, config_.eval_batch_size);
  EpochStats row;
  row.epoch = epoch;
  row.train_loss = loss_sum / double(seen);
  row.train_acc = double(correct) / double(seen);
  row.val_loss = v.loss;
  row.val_acc = v.accuracy;
  row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  epochs_done_ = epoch;
  history_.rows.push_back(row);
  return row;
}

History Trainer::fit(ImageSource &train, ImageSource &val,
                     const std::function<void(const EpochStats &)> &on_epoch) {
  const fs::path out = config_.output_dir;
  while (epochs_done_ < config_.epochs) {
    const EpochStats row = train_epoch(train, val);
    if (!out.empty()) {
      char name[32];
      std::snprintf(name, sizeof name, "epoch_%03zu.ckpt", row.epoch);
      save_checkpoint(out / name, checkpoint());
      last_checkpoint_ = (out / name).string();
      write_file_atomic(out / "history.csv", history_.to_csv());
    }
    if (on_epoch)
      on_epoch(row);
  }
  if (!out.empty()) {
    save_checkpoint(out / "final.ckpt", checkpoint());
    write_file_atomic(out / "history.csv", history_.to_csv());
  }
  return history_;
}

} // namespace mrinet
