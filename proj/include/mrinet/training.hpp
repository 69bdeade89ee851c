#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mrinet/adam.hpp"
#include "mrinet/batches.hpp"
#include "mrinet/checkpoint.hpp"
#include "mrinet/executor.hpp"
#include "mrinet/graph.hpp"

namespace mrinet {

// -(1/N) sum ln(max(probs[i, labels[i]], floor)) over rows of probs [N, K].
// LabelError names the first out-of-range label and its row.
template <typename T>
double sparse_categorical_crossentropy(const Tensor<T> &probs, std::span<const int> labels,
                                       double floor = 1e-12);

// Row-wise argmax; ties go to the lowest class id.
template <typename T> std::vector<int> argmax_rows(const Tensor<T> &scores);

enum class BackboneMode { finetune, frozen };

struct TrainConfig {
  std::string model = "resnet50";
  AdamConfig adam;
  std::size_t batch_size = 128;
  std::size_t epochs = 50;
  std::uint64_t seed = 0;
  BackboneMode backbone_mode = BackboneMode::finetune;
  // Batch-norm behaviour in trainable layers during training steps.
  Mode batchnorm_mode = Mode::train;
  bool augment = true;
  AugmentParams augment_params;
  std::optional<PreprocessMode> preprocessing; // model default when unset
  std::size_t input_height = 50;
  std::size_t input_width = 50;
  // Batch size for evaluation passes; does not affect results.
  std::size_t eval_batch_size = 32;

  // File locations; relative paths resolve against the config file.
  std::string data_root;
  std::string train_manifest;
  std::string val_manifest;
  std::string output_dir;
  std::string init_weights;                  // optional checkpoint to import
  std::string init_weights_scope = "backbone"; // backbone | all
  std::string resume;                        // optional checkpoint to continue from

  PreprocessMode effective_preprocessing() const;
  // ConfigError naming the first invalid field.
  void validate() const;
};

std::string_view to_string(BackboneMode mode);

// Parses a config object. Unknown keys and wrong types raise ConfigError;
// the result is validated.
TrainConfig config_from_json(const nlohmann::json &j);
// Effective config with every default filled in.
nlohmann::json config_to_json(const TrainConfig &config);
// Reads a JSON file; relative paths inside resolve against its directory.
TrainConfig load_config(const std::filesystem::path &file);

struct EpochStats {
  std::size_t epoch = 0;
  double train_loss = 0, train_acc = 0, val_loss = 0, val_acc = 0;
  double seconds = 0;
};

struct History {
  std::vector<EpochStats> rows;
  // Header epoch,train_loss,train_acc,val_loss,val_acc; values in %.6g.
  std::string to_csv() const;
};

struct EvalResult {
  double loss = 0;
  double accuracy = 0;
  std::size_t total = 0;
  std::array<std::array<std::size_t, 5>, 5> confusion{}; // [true][predicted]
  nlohmann::json to_json() const;
};

// Inference-mode pass over every record in the source, in index order and
// in chunks of batch_size. EvaluationError for an empty source.
EvalResult evaluate(const NetworkGraph &graph, ParameterSet<float> &params, ImageSource &source,
                    PreprocessMode preprocessing, std::size_t batch_size = 32);

// Class probabilities for one image, sorted by descending probability
// (ties: lower class id).
std::vector<std::pair<std::string, double>> predict(const NetworkGraph &graph,
                                                    ParameterSet<float> &params,
                                                    const std::filesystem::path &image,
                                                    PreprocessMode preprocessing);

class Trainer {
public:
  // Builds the model and initialises parameters from config.seed.
  explicit Trainer(TrainConfig config);

  const TrainConfig &config() const noexcept { return config_; }
  const NetworkGraph &graph() const noexcept { return graph_; }
  ParameterSet<float> &params() noexcept { return params_; }
  const AdamState<float> &adam() const noexcept { return adam_; }
  std::size_t epochs_done() const noexcept { return epochs_done_; }
  const History &history() const noexcept { return history_; }

  // Loads parameters, optimizer state and epoch counter from a checkpoint
  // of the same model.
  void restore(const Checkpoint &ckpt);
  Checkpoint checkpoint() const;

  // Runs epoch epochs_done() + 1: one pass over `train` with augmentation
  // and dropout, then evaluation of `val`. TrainingHalted on a non-finite
  // loss or gradient; parameters are left as they were before that step.
  EpochStats train_epoch(ImageSource &train, ImageSource &val);

  // Trains until config.epochs. When output_dir is set, writes
  // epoch_NNN.ckpt after every epoch, history.csv after every epoch and
  // final.ckpt at the end, all atomically.
  History fit(ImageSource &train, ImageSource &val,
              const std::function<void(const EpochStats &)> &on_epoch = {});

private:
  bool trains(const std::string &slot) const;

  TrainConfig config_;
  NetworkGraph graph_;
  ParameterSet<float> params_;
  AdamState<float> adam_;
  std::size_t epochs_done_ = 0;
  History history_;
  std::string last_checkpoint_;
};

} // namespace mrinet
