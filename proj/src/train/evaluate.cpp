#include <algorithm>
#include <numeric>

#include "mrinet/dataset.hpp"
#include "mrinet/errors.hpp"
#include "mrinet/training.hpp"

namespace mrinet {

nlohmann::json EvalResult::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto &row : confusion)
    rows.push_back(row);
  nlohmann::json names = nlohmann::json::array();
  for (auto n : class_names)
    names.push_back(std::string(n));
  return {{"accuracy", accuracy}, {"loss", loss},   {"total", total},
          {"confusion", rows},    {"classes", names}};
}

EvalResult evaluate(const NetworkGraph &graph, ParameterSet<float> &params, ImageSource &source,
                    PreprocessMode preprocessing, std::size_t batch_size) {
  if (source.size() == 0)
    throw EvaluationError("cannot evaluate on an empty index");
  if (batch_size == 0)
    throw ConfigError("evaluation batch size must be >= 1");
  BatchOptions opt;
  opt.batch_size = batch_size;
  opt.shuffle = false;
  opt.augment = false;
  opt.preprocessing = preprocessing;

  EvalResult r;
  double loss_sum = 0;
  std::size_t correct = 0;
  for (std::size_t begin = 0; begin < source.size(); begin += batch_size) {
    std::vector<std::size_t> pos(std::min(batch_size, source.size() - begin));
    std::iota(pos.begin(), pos.end(), begin);
    Batch batch = load_batch(source, pos, opt, 0);
    Tensor<float> probs = forward(graph, params, batch.images);
    if (probs.rank() != 2 || probs.dim(1) != num_classes)
      throw DimensionError("classes", "model does not produce 5 class probabilities");
    loss_sum += sparse_categorical_crossentropy(probs, batch.labels) * double(pos.size());
    const auto pred = argmax_rows(probs);
    for (std::size_t i = 0; i < pred.size(); ++i) {
      ++r.confusion[std::size_t(batch.labels[i])][std::size_t(pred[i])];
      correct += pred[i] == batch.labels[i];
    }
  }
  r.total = source.size();
  r.loss = loss_sum / double(r.total);
  r.accuracy = double(correct) / double(r.total);
  return r;
}

std::vector<std::pair<std::string, double>> predict(const NetworkGraph &graph,
                                                    ParameterSet<float> &params,
                                                    const std::filesystem::path &image,
                                                    PreprocessMode preprocessing) {
  const auto &in = graph.input_shape();
  Tensor<float> img = decode_and_resize(image, in[0], in[1]);
  preprocess(img, preprocessing);
  Tensor<float> probs = forward(graph, params, img.reshaped({1, in[0], in[1], in[2]}));
  if (probs.rank() != 2 || probs.dim(1) != num_classes)
    throw DimensionError("classes", "model does not produce 5 class probabilities");
  std::vector<std::pair<std::string, double>> out;
  for (std::size_t k = 0; k < num_classes; ++k)
    out.emplace_back(std::string(class_names[k]), static_cast<double>(probs.at(0, k)));
  std::stable_sort(out.begin(), out.end(),
                   [](const auto &a, const auto &b) { return a.second > b.second; });
  return out;
}

} // namespace mrinet
