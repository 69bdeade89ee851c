#pragma once

// Forward kernels and their reverse-mode rules. Every function here is a pure
// function of its arguments except batch_norm in train mode, which also
// updates the running statistics it is handed.

#include <cstddef>
#include <cstdint>
#include <string>
#include <type_traits>
#include <vector>

#include "mrinet/rng.hpp"
#include "mrinet/tensor.hpp"

namespace mrinet {

enum class Padding { same, valid };
enum class Mode { train, infer };
enum class ActivationKind { relu, relu6 };

std::string to_string(Padding p);
std::string to_string(ActivationKind a);

struct ConvSpec {
  std::size_t kernel_h = 1;
  std::size_t kernel_w = 1;
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t stride = 1;
  Padding padding = Padding::same;
  bool use_bias = true;

  bool operator==(const ConvSpec &) const = default;
};

struct PoolSpec {
  std::size_t window_h = 3;
  std::size_t window_w = 3;
  std::size_t stride = 2;
  Padding padding = Padding::same;
};

struct BatchNormOptions {
  double epsilon = 1e-5;
  double momentum = 0.99;
};

// Output extent along one spatial axis plus the leading pad. Same padding
// follows the usual convention: total pad = max((out-1)*stride + k - in, 0),
// with the smaller half in front.
struct AxisGeometry {
  std::size_t out = 0;
  std::size_t pad_before = 0;
};
AxisGeometry axis_geometry(std::size_t in, std::size_t kernel,
                           std::size_t stride, Padding padding,
                           const std::string &axis);

// Which gradients a backward call should produce.
struct GradRequest {
  bool input = true;
  bool weights = true;
  bool bias = true;
};

template <typename T> struct ConvGrads {
  Tensor<T> input;
  Tensor<T> weights;
  Tensor<T> bias;
};

// --- convolution -----------------------------------------------------------

// Cross-correlation (no kernel flip). `bias` may be null.
template <typename T>
Tensor<T> conv2d(const Tensor<T> &input, const Tensor<T> &weights,
                 const std::type_identity_t<Tensor<T>> *bias, const ConvSpec &spec);
template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T> &input, const Tensor<T> &weights,
                             const Tensor<T> &grad_out, const ConvSpec &spec,
                             GradRequest request = {});

// Depthwise variant with channel multiplier 1: weights are [kh, kw, C, 1] and
// spec.out_channels must equal spec.in_channels.
template <typename T>
Tensor<T> depthwise_conv2d(const Tensor<T> &input, const Tensor<T> &weights,
                           const std::type_identity_t<Tensor<T>> *bias, const ConvSpec &spec);
template <typename T>
ConvGrads<T> depthwise_conv2d_backward(const Tensor<T> &input,
                                       const Tensor<T> &weights,
                                       const Tensor<T> &grad_out,
                                       const ConvSpec &spec,
                                       GradRequest request = {});

// --- pooling -----------------------------------------------------------------

// Max pooling. Padded cells never win. `argmax` (optional) receives the flat
// input index chosen for every output element; ties go to the first cell in
// row-major window order.
template <typename T>
Tensor<T> max_pool2d(const Tensor<T> &input, const PoolSpec &spec,
                     std::vector<std::size_t> *argmax = nullptr);
template <typename T>
Tensor<T> max_pool2d_backward(const Shape &input_shape,
                              const std::vector<std::size_t> &argmax,
                              const Tensor<T> &grad_out);

template <typename T> Tensor<T> global_average_pool(const Tensor<T> &input);
template <typename T>
Tensor<T> global_average_pool_backward(const Shape &input_shape,
                                       const Tensor<T> &grad_out);

// --- dense -------------------------------------------------------------------

// out = input [N,D] * weights [D,U] + bias [U]
template <typename T>
Tensor<T> dense_affine(const Tensor<T> &input, const Tensor<T> &weights,
                       const Tensor<T> &bias);
template <typename T>
ConvGrads<T> dense_affine_backward(const Tensor<T> &input,
                                   const Tensor<T> &weights,
                                   const Tensor<T> &grad_out,
                                   GradRequest request = {});

// --- batch normalisation ------------------------------------------------------

// Intermediate values kept for the backward pass.
template <typename T> struct BatchNormSaved {
  Tensor<T> normalized;     // x_hat, same shape as the input
  std::vector<T> inv_std;   // per channel
  Mode mode = Mode::infer;
};

// Normalises over (N,H,W) per channel. In train mode the batch statistics are
// used and the running statistics move by an exponential average:
//   running = momentum * running + (1 - momentum) * batch
// (the running variance takes the unbiased batch variance). Infer mode reads
// the running statistics and leaves them untouched.
template <typename T>
Tensor<T> batch_norm(const Tensor<T> &input, const Tensor<T> &gamma,
                     const Tensor<T> &beta, Tensor<T> &running_mean,
                     Tensor<T> &running_var, Mode mode,
                     const BatchNormOptions &options = {},
                     BatchNormSaved<T> *saved = nullptr);

template <typename T> struct BatchNormGrads {
  Tensor<T> input;
  Tensor<T> gamma;
  Tensor<T> beta;
};
template <typename T>
BatchNormGrads<T> batch_norm_backward(const Tensor<T> &grad_out,
                                      const Tensor<T> &gamma,
                                      const BatchNormSaved<T> &saved,
                                      GradRequest request = {});

// --- elementwise -----------------------------------------------------------

template <typename T>
Tensor<T> activation(const Tensor<T> &input, ActivationKind kind);
// Subgradient 0 at the kinks (x = 0, and x = 6 for relu6).
template <typename T>
Tensor<T> activation_backward(const Tensor<T> &input, const Tensor<T> &grad_out,
                              ActivationKind kind);

template <typename T> Tensor<T> add(const Tensor<T> &a, const Tensor<T> &b);

// Row-wise softmax over [N,K] with max subtraction.
template <typename T> Tensor<T> softmax(const Tensor<T> &logits);
template <typename T>
Tensor<T> softmax_backward(const Tensor<T> &probs, const Tensor<T> &grad_out);

// Inverted dropout. Infer mode and rate 0 return the input unchanged. `mask`
// (optional) receives the per-element multiplier (0 or 1/(1-rate)).
template <typename T>
Tensor<T> dropout(const Tensor<T> &input, double rate, Mode mode, Rng &rng,
                  std::vector<T> *mask = nullptr);

} // namespace mrinet
