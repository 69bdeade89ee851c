#include "mrinet/executor.hpp"

#include "mrinet/errors.hpp"
#include "mrinet/rng.hpp"

namespace mrinet {

bool is_head_layer(const LayerNode &node) { return node.name.rfind("head.", 0) == 0; }
bool is_backbone_layer(const LayerNode &node) {
  return !is_head_layer(node) && !std::holds_alternative<InputOp>(node.op);
}

template <typename T>
GraphRun<T> run_graph(Tape<T> &tape, const NetworkGraph &graph, ParameterSet<T> &params,
                      Var input, const RunOptions &options,
                      const std::map<std::string, Var> &bound) {
  const Tensor<T> &x = tape.value(input);
  Shape expect = graph.input_shape();
  expect.insert(expect.begin(), x.rank() ? x.dim(0) : 0);
  if (x.shape() != expect)
    throw DimensionError("input", graph.model() + " expects " + to_string(expect) + ", got " +
                                      to_string(x.shape()));

  GraphRun<T> run;
  run.values.reserve(graph.nodes().size());
  for (std::size_t i = 0; i < graph.nodes().size(); ++i) {
    const LayerNode &node = graph.node(i);
    const bool frozen = options.frozen && options.frozen(node);
    auto param = [&](const std::string &role) -> Var {
      const std::string name = node.name + "." + role;
      auto b = bound.find(name);
      Var v = b != bound.end() ? b->second : tape.watch(params.at(name), !frozen);
      run.params[name] = v;
      return v;
    };
    auto in = [&](std::size_t k) { return run.values.at(node.inputs.at(k)); };

    Var out = std::visit(
        [&](const auto &op) -> Var {
          using Op = std::decay_t<decltype(op)>;
          if constexpr (std::is_same_v<Op, InputOp>) {
            return input;
          } else if constexpr (std::is_same_v<Op, ConvOp>) {
            Var w = param("kernel");
            std::optional<Var> b;
            if (op.spec.use_bias)
              b = param("bias");
            return op.depthwise ? tape.depthwise_conv2d(in(0), w, b, op.spec)
                                : tape.conv2d(in(0), w, b, op.spec);
          } else if constexpr (std::is_same_v<Op, BatchNormOp>) {
            Var beta = param("beta");
            Var gamma = param("gamma");
            Mode mode = options.mode == Mode::train && !frozen ? options.batchnorm_mode
                                                                : Mode::infer;
            return tape.batch_norm(in(0), gamma, beta, params.at(node.name + ".moving_mean"),
                                   params.at(node.name + ".moving_variance"), mode,
                                   op.options);
          } else if constexpr (std::is_same_v<Op, ActivationOp>) {
            return tape.activation(in(0), op.kind);
          } else if constexpr (std::is_same_v<Op, MaxPoolOp>) {
            return tape.max_pool2d(in(0), op.spec);
          } else if constexpr (std::is_same_v<Op, GlobalPoolOp>) {
            return tape.global_average_pool(in(0));
          } else if constexpr (std::is_same_v<Op, DenseOp>) {
            Var w = param("kernel");
            Var b = param("bias");
            return tape.dense(in(0), w, b);
          } else if constexpr (std::is_same_v<Op, DropoutOp>) {
            Rng rng = Rng::keyed({options.dropout_seed, hash_name(node.name)});
            return tape.dropout(in(0), op.rate, options.mode, rng);
          } else if constexpr (std::is_same_v<Op, AddOp>) {
            return tape.add(in(0), in(1));
          } else {
            return tape.softmax(in(0));
          }
        },
        node.op);
    run.values.push_back(out);
  }
  run.output = run.values.back();
  const LayerNode &last = graph.nodes().back();
  run.logits = std::holds_alternative<SoftmaxOp>(last.op) ? run.values.at(last.inputs[0])
                                                          : run.output;
  return run;
}

template <typename T>
Tensor<T> forward(const NetworkGraph &graph, ParameterSet<T> &params, const Tensor<T> &input,
                  const RunOptions &options) {
  Tape<T> tape;
  auto run = run_graph(tape, graph, params, tape.constant(input), options);
  return tape.value(run.output);
}

#define MRINET_INSTANTIATE(T)                                                              \
  template GraphRun<T> run_graph(Tape<T> &, const NetworkGraph &, ParameterSet<T> &, Var,  \
                                 const RunOptions &, const std::map<std::string, Var> &);  \
  template Tensor<T> forward(const NetworkGraph &, ParameterSet<T> &, const Tensor<T> &,   \
                             const RunOptions &);

MRINET_INSTANTIATE(float)
MRINET_INSTANTIATE(double)

} // namespace mrinet
