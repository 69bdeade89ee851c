#include "mrinet/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mrinet/errors.hpp"
#include "mrinet/parallel.hpp"

namespace mrinet {

std::string to_string(Padding p) { return p == Padding::same ? "same" : "valid"; }
std::string to_string(ActivationKind a) {
  return a == ActivationKind::relu ? "relu" : "relu6";
}

AxisGeometry axis_geometry(std::size_t in, std::size_t kernel,
                           std::size_t stride, Padding padding,
                           const std::string &axis) {
  if (stride == 0 || kernel == 0)
    throw DimensionError(axis, "kernel and stride must be positive");
  if (padding == Padding::valid) {
    if (kernel > in)
      throw DimensionError(axis, "window of " + std::to_string(kernel) +
                                     " exceeds input extent " +
                                     std::to_string(in));
    return {(in - kernel) / stride + 1, 0};
  }
  std::size_t out = (in + stride - 1) / stride;
  std::size_t needed = (out - 1) * stride + kernel;
  std::size_t total = needed > in ? needed - in : 0;
  return {out, total / 2};
}

namespace {

constexpr std::size_t kRowChunk = 256;

// C[i0:i1, :] += A[i0:i1, :] * B, all row-major. The k loop is blocked but
// always ascends, so every C element sums in the same order regardless of
// how rows are split between workers.
template <typename T>
void gemm_rows(std::size_t i0, std::size_t i1, std::size_t n, std::size_t k,
               const T *__restrict a, std::size_t lda, const T *__restrict b,
               std::size_t ldb, T *__restrict c, std::size_t ldc) {
  constexpr std::size_t kb = 256, nb = 1024;
  for (std::size_t j0 = 0; j0 < n; j0 += nb) {
    const std::size_t j1 = std::min(n, j0 + nb);
    for (std::size_t k0 = 0; k0 < k; k0 += kb) {
      const std::size_t k1 = std::min(k, k0 + kb);
      std::size_t i = i0;
      for (; i + 4 <= i1; i += 4) {
        T *__restrict c0 = c + i * ldc;
        T *__restrict c1 = c0 + ldc;
        T *__restrict c2 = c1 + ldc;
        T *__restrict c3 = c2 + ldc;
        const T *a0 = a + i * lda;
        for (std::size_t kk = k0; kk < k1; ++kk) {
          const T x0 = a0[kk], x1 = a0[lda + kk], x2 = a0[2 * lda + kk],
                  x3 = a0[3 * lda + kk];
          const T *__restrict brow = b + kk * ldb;
          for (std::size_t j = j0; j < j1; ++j) {
            const T bv = brow[j];
            c0[j] += x0 * bv;
            c1[j] += x1 * bv;
            c2[j] += x2 * bv;
            c3[j] += x3 * bv;
          }
        }
      }
      for (; i < i1; ++i) {
        T *__restrict c0 = c + i * ldc;
        const T *a0 = a + i * lda;
        for (std::size_t kk = k0; kk < k1; ++kk) {
          const T x0 = a0[kk];
          const T *__restrict brow = b + kk * ldb;
          for (std::size_t j = j0; j < j1; ++j)
            c0[j] += x0 * brow[j];
        }
      }
    }
  }
}

template <typename T>
void gemm(std::size_t m, std::size_t n, std::size_t k, const T *a,
          std::size_t lda, const T *b, std::size_t ldb, T *c,
          std::size_t ldc) {
  // Row tiles are a fixed 16 so the split never depends on thread count.
  const std::size_t tiles = (m + 15) / 16;
  const std::size_t per_tile = 16 * n * k;
  parallel_for(tiles, std::max<std::size_t>(1, (1u << 18) / std::max<std::size_t>(1, per_tile)),
               [&](std::size_t t0, std::size_t t1) {
                 gemm_rows(t0 * 16, std::min(m, t1 * 16), n, k, a, lda, b, ldb,
                           c, ldc);
               });
}

// dst[cols, rows] = src[rows, cols]^T
template <typename T>
void transpose(const T *src, std::size_t rows, std::size_t cols, T *dst) {
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c)
      dst[c * rows + r] = src[r * cols + c];
}

struct ConvGeometry {
  std::size_t n, h, w, cin, oh, ow, cout, kh, kw, stride;
  std::size_t pad_top, pad_left;
  std::size_t rows() const { return n * oh * ow; }
  std::size_t patch() const { return kh * kw * cin; }
  bool pointwise() const { return kh == 1 && kw == 1 && stride == 1; }
};

template <typename T>
ConvGeometry conv_geometry(const Tensor<T> &input, const Tensor<T> &weights,
                           const ConvSpec &spec, bool depthwise) {
  require_rank(input, 4, "conv input");
  require_rank(weights, 4, "conv weights");
  if (input.dim(3) != spec.in_channels)
    throw DimensionError("channels", "input has " + std::to_string(input.dim(3)) +
                                         " channels, spec expects " +
                                         std::to_string(spec.in_channels));
  Shape expect = depthwise ? Shape{spec.kernel_h, spec.kernel_w, spec.in_channels, 1}
                           : Shape{spec.kernel_h, spec.kernel_w, spec.in_channels,
                                   spec.out_channels};
  if (depthwise && spec.out_channels != spec.in_channels)
    throw DimensionError("channels", "depthwise conv requires out_channels == in_channels");
  if (weights.shape() != expect)
    throw DimensionError("weights", "expected " + to_string(expect) + ", got " +
                                        to_string(weights.shape()));
  auto gh = axis_geometry(input.dim(1), spec.kernel_h, spec.stride, spec.padding, "height");
  auto gw = axis_geometry(input.dim(2), spec.kernel_w, spec.stride, spec.padding, "width");
  return {input.dim(0), input.dim(1), input.dim(2), spec.in_channels, gh.out, gw.out,
          spec.out_channels, spec.kernel_h, spec.kernel_w, spec.stride,
          gh.pad_before, gw.pad_before};
}

template <typename T>
void check_bias(const Tensor<T> *bias, std::size_t channels) {
  if (bias && bias->shape() != Shape{channels})
    throw DimensionError("bias", "expected (" + std::to_string(channels) +
                                     "), got " + to_string(bias->shape()));
}

// Patch matrix rows [r0, r1) of the im2col expansion; columns ordered
// (kh, kw, cin) to match the weight layout. Padded cells are zero.
template <typename T>
void im2col(const T *x, const ConvGeometry &g, std::size_t r0, std::size_t r1,
            T *col) {
  const std::size_t patch = g.patch();
  for (std::size_t r = r0; r < r1; ++r) {
    const std::size_t ow = r % g.ow, oh = (r / g.ow) % g.oh, n = r / (g.ow * g.oh);
    T *dst = col + (r - r0) * patch;
    for (std::size_t i = 0; i < g.kh; ++i) {
      const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * g.stride + i) -
                                static_cast<std::ptrdiff_t>(g.pad_top);
      for (std::size_t j = 0; j < g.kw; ++j) {
        const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * g.stride + j) -
                                  static_cast<std::ptrdiff_t>(g.pad_left);
        T *cell = dst + (i * g.kw + j) * g.cin;
        if (ih < 0 || iw < 0 || ih >= static_cast<std::ptrdiff_t>(g.h) ||
            iw >= static_cast<std::ptrdiff_t>(g.w)) {
          std::fill(cell, cell + g.cin, T{0});
        } else {
          const T *src = x + ((n * g.h + ih) * g.w + iw) * g.cin;
          std::copy(src, src + g.cin, cell);
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T *col, const ConvGeometry &g, std::size_t r0,
                std::size_t r1, T *dx) {
  const std::size_t patch = g.patch();
  for (std::size_t r = r0; r < r1; ++r) {
    const std::size_t ow = r % g.ow, oh = (r / g.ow) % g.oh, n = r / (g.ow * g.oh);
    const T *src = col + (r - r0) * patch;
    for (std::size_t i = 0; i < g.kh; ++i) {
      const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * g.stride + i) -
                                static_cast<std::ptrdiff_t>(g.pad_top);
      if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.h))
        continue;
      for (std::size_t j = 0; j < g.kw; ++j) {
        const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * g.stride + j) -
                                  static_cast<std::ptrdiff_t>(g.pad_left);
        if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(g.w))
          continue;
        const T *cell = src + (i * g.kw + j) * g.cin;
        T *dst = dx + ((n * g.h + ih) * g.w + iw) * g.cin;
        for (std::size_t c = 0; c < g.cin; ++c)
          dst[c] += cell[c];
      }
    }
  }
}

} // namespace

// --- convolution -------------------------------------------------------------

template <typename T>
Tensor<T> conv2d(const Tensor<T> &input, const Tensor<T> &weights,
                 const std::type_identity_t<Tensor<T>> *bias, const ConvSpec &spec) {
  const auto g = conv_geometry(input, weights, spec, false);
  check_bias(bias, g.cout);
  Tensor<T> out({g.n, g.oh, g.ow, g.cout});
  T *y = out.raw();
  const std::size_t rows = g.rows(), patch = g.patch();
  if (bias)
    for (std::size_t r = 0; r < rows; ++r)
      std::copy(bias->raw(), bias->raw() + g.cout, y + r * g.cout);

  if (g.pointwise()) {
    gemm(rows, g.cout, patch, input.raw(), patch, weights.raw(), g.cout, y, g.cout);
    return out;
  }
  std::vector<T> col(kRowChunk * patch);
  for (std::size_t r0 = 0; r0 < rows; r0 += kRowChunk) {
    const std::size_t r1 = std::min(rows, r0 + kRowChunk);
    im2col(input.raw(), g, r0, r1, col.data());
    gemm(r1 - r0, g.cout, patch, col.data(), patch, weights.raw(), g.cout,
         y + r0 * g.cout, g.cout);
  }
  return out;
}

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T> &input, const Tensor<T> &weights,
                             const Tensor<T> &grad_out, const ConvSpec &spec,
                             GradRequest request) {
  const auto g = conv_geometry(input, weights, spec, false);
  const Shape out_shape{g.n, g.oh, g.ow, g.cout};
  if (grad_out.shape() != out_shape)
    throw DimensionError("grad_out", "expected " + to_string(out_shape) + ", got " +
                                         to_string(grad_out.shape()));
  ConvGrads<T> grads;
  const std::size_t rows = g.rows(), patch = g.patch();
  const T *dy = grad_out.raw();

  if (request.bias) {
    grads.bias = Tensor<T>({g.cout});
    T *db = grads.bias.raw();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < g.cout; ++c)
        db[c] += dy[r * g.cout + c];
  }
  if (!request.weights && !request.input)
    return grads;

  std::vector<T> wt;
  if (request.input) {
    grads.input = Tensor<T>(input.shape());
    wt.resize(patch * g.cout);
    transpose(weights.raw(), patch, g.cout, wt.data());
  }
  if (request.weights)
    grads.weights = Tensor<T>(weights.shape());

  std::vector<T> col(kRowChunk * patch), colt(kRowChunk * patch), dcol;
  if (request.input && !g.pointwise())
    dcol.resize(kRowChunk * patch);
  for (std::size_t r0 = 0; r0 < rows; r0 += kRowChunk) {
    const std::size_t r1 = std::min(rows, r0 + kRowChunk), nr = r1 - r0;
    if (request.weights) {
      const T *a;
      if (g.pointwise()) {
        a = input.raw() + r0 * patch;
      } else {
        im2col(input.raw(), g, r0, r1, col.data());
        a = col.data();
      }
      transpose(a, nr, patch, colt.data());
      gemm(patch, g.cout, nr, colt.data(), nr, dy + r0 * g.cout, g.cout,
           grads.weights.raw(), g.cout);
    }
    if (request.input) {
      if (g.pointwise()) {
        gemm(nr, patch, g.cout, dy + r0 * g.cout, g.cout, wt.data(), patch,
             grads.input.raw() + r0 * patch, patch);
      } else {
        std::fill(dcol.begin(), dcol.begin() + nr * patch, T{0});
        gemm(nr, patch, g.cout, dy + r0 * g.cout, g.cout, wt.data(), patch,
             dcol.data(), patch);
        col2im_add(dcol.data(), g, r0, r1, grads.input.raw());
      }
    }
  }
  return grads;
}

template <typename T>
Tensor<T> depthwise_conv2d(const Tensor<T> &input, const Tensor<T> &weights,
                           const std::type_identity_t<Tensor<T>> *bias, const ConvSpec &spec) {
  const auto g = conv_geometry(input, weights, spec, true);
  check_bias(bias, g.cin);
  Tensor<T> out({g.n, g.oh, g.ow, g.cin});
  const T *x = input.raw();
  const T *w = weights.raw();
  T *y = out.raw();
  parallel_for(g.n * g.oh, 4, [&](std::size_t b, std::size_t e) {
    for (std::size_t row = b; row < e; ++row) {
      const std::size_t n = row / g.oh, oh = row % g.oh;
      for (std::size_t ow = 0; ow < g.ow; ++ow) {
        T *dst = y + ((n * g.oh + oh) * g.ow + ow) * g.cin;
        for (std::size_t i = 0; i < g.kh; ++i) {
          const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * g.stride + i) -
                                    static_cast<std::ptrdiff_t>(g.pad_top);
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.h))
            continue;
          for (std::size_t j = 0; j < g.kw; ++j) {
            const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * g.stride + j) -
                                      static_cast<std::ptrdiff_t>(g.pad_left);
            if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(g.w))
              continue;
            const T *src = x + ((n * g.h + ih) * g.w + iw) * g.cin;
            const T *wk = w + (i * g.kw + j) * g.cin;
            for (std::size_t c = 0; c < g.cin; ++c)
              dst[c] += src[c] * wk[c];
          }
        }
        if (bias)
          for (std::size_t c = 0; c < g.cin; ++c)
            dst[c] += (*bias)[c];
      }
    }
  });
  return out;
}

template <typename T>
ConvGrads<T> depthwise_conv2d_backward(const Tensor<T> &input,
                                       const Tensor<T> &weights,
                                       const Tensor<T> &grad_out,
                                       const ConvSpec &spec,
                                       GradRequest request) {
  const auto g = conv_geometry(input, weights, spec, true);
  const Shape out_shape{g.n, g.oh, g.ow, g.cin};
  if (grad_out.shape() != out_shape)
    throw DimensionError("grad_out", "expected " + to_string(out_shape) + ", got " +
                                         to_string(grad_out.shape()));
  ConvGrads<T> grads;
  if (request.input)
    grads.input = Tensor<T>(input.shape());
  if (request.weights)
    grads.weights = Tensor<T>(weights.shape());
  if (request.bias)
    grads.bias = Tensor<T>({g.cin});
  const T *x = input.raw(), *w = weights.raw(), *dy = grad_out.raw();
  for (std::size_t n = 0; n < g.n; ++n)
    for (std::size_t oh = 0; oh < g.oh; ++oh)
      for (std::size_t ow = 0; ow < g.ow; ++ow) {
        const T *gy = dy + ((n * g.oh + oh) * g.ow + ow) * g.cin;
        if (request.bias)
          for (std::size_t c = 0; c < g.cin; ++c)
            grads.bias[c] += gy[c];
        for (std::size_t i = 0; i < g.kh; ++i) {
          const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * g.stride + i) -
                                    static_cast<std::ptrdiff_t>(g.pad_top);
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.h))
            continue;
          for (std::size_t j = 0; j < g.kw; ++j) {
            const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * g.stride + j) -
                                      static_cast<std::ptrdiff_t>(g.pad_left);
            if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(g.w))
              continue;
            const std::size_t off = ((n * g.h + ih) * g.w + iw) * g.cin;
            const std::size_t woff = (i * g.kw + j) * g.cin;
            if (request.weights) {
              T *gw = grads.weights.raw() + woff;
              for (std::size_t c = 0; c < g.cin; ++c)
                gw[c] += x[off + c] * gy[c];
            }
            if (request.input) {
              T *gx = grads.input.raw() + off;
              for (std::size_t c = 0; c < g.cin; ++c)
                gx[c] += w[woff + c] * gy[c];
            }
          }
        }
      }
  return grads;
}

// --- pooling ------------------------------------------------------------------

template <typename T>
Tensor<T> max_pool2d(const Tensor<T> &input, const PoolSpec &spec,
                     std::vector<std::size_t> *argmax) {
  require_rank(input, 4, "max_pool2d input");
  const std::size_t n = input.dim(0), h = input.dim(1), w = input.dim(2), c = input.dim(3);
  auto gh = axis_geometry(h, spec.window_h, spec.stride, spec.padding, "height");
  auto gw = axis_geometry(w, spec.window_w, spec.stride, spec.padding, "width");
  Tensor<T> out({n, gh.out, gw.out, c});
  if (argmax)
    argmax->assign(out.size(), 0);
  const T *x = input.raw();
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t oh = 0; oh < gh.out; ++oh)
      for (std::size_t ow = 0; ow < gw.out; ++ow)
        for (std::size_t ch = 0; ch < c; ++ch) {
          T best = -std::numeric_limits<T>::infinity();
          std::size_t best_idx = std::numeric_limits<std::size_t>::max();
          for (std::size_t i = 0; i < spec.window_h; ++i) {
            const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * spec.stride + i) -
                                      static_cast<std::ptrdiff_t>(gh.pad_before);
            if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(h))
              continue;
            for (std::size_t j = 0; j < spec.window_w; ++j) {
              const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * spec.stride + j) -
                                        static_cast<std::ptrdiff_t>(gw.pad_before);
              if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(w))
                continue;
              const std::size_t idx = ((b * h + ih) * w + iw) * c + ch;
              if (best_idx == std::numeric_limits<std::size_t>::max() || x[idx] > best) {
                best = x[idx];
                best_idx = idx;
              }
            }
          }
          const std::size_t o = ((b * gh.out + oh) * gw.out + ow) * c + ch;
          out[o] = best;
          if (argmax)
            (*argmax)[o] = best_idx;
        }
  return out;
}

template <typename T>
Tensor<T> max_pool2d_backward(const Shape &input_shape,
                              const std::vector<std::size_t> &argmax,
                              const Tensor<T> &grad_out) {
  if (argmax.size() != grad_out.size())
    throw DimensionError("grad_out", "argmax table does not match gradient size");
  Tensor<T> dx(input_shape);
  for (std::size_t o = 0; o < argmax.size(); ++o)
    dx[argmax[o]] += grad_out[o];
  return dx;
}

template <typename T> Tensor<T> global_average_pool(const Tensor<T> &input) {
  require_rank(input, 4, "global_average_pool input");
  const std::size_t n = input.dim(0), hw = input.dim(1) * input.dim(2), c = input.dim(3);
  Tensor<T> out({n, c});
  for (std::size_t b = 0; b < n; ++b) {
    const T *x = input.raw() + b * hw * c;
    T *y = out.raw() + b * c;
    for (std::size_t p = 0; p < hw; ++p)
      for (std::size_t ch = 0; ch < c; ++ch)
        y[ch] += x[p * c + ch];
    for (std::size_t ch = 0; ch < c; ++ch)
      y[ch] /= static_cast<T>(hw);
  }
  return out;
}

template <typename T>
Tensor<T> global_average_pool_backward(const Shape &input_shape,
                                       const Tensor<T> &grad_out) {
  if (input_shape.size() != 4 || grad_out.shape() != Shape{input_shape[0], input_shape[3]})
    throw DimensionError("grad_out", "does not match pooled shape of " +
                                         to_string(input_shape));
  const std::size_t n = input_shape[0], hw = input_shape[1] * input_shape[2],
                    c = input_shape[3];
  Tensor<T> dx(input_shape);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t p = 0; p < hw; ++p)
      for (std::size_t ch = 0; ch < c; ++ch)
        dx[(b * hw + p) * c + ch] = grad_out[b * c + ch] / static_cast<T>(hw);
  return dx;
}

// --- dense -----------------------------------------------------------------------

template <typename T>
Tensor<T> dense_affine(const Tensor<T> &input, const Tensor<T> &weights,
                       const Tensor<T> &bias) {
  require_rank(input, 2, "dense input");
  require_rank(weights, 2, "dense weights");
  const std::size_t n = input.dim(0), d = input.dim(1), u = weights.dim(1);
  if (weights.dim(0) != d)
    throw DimensionError("inner", "input width " + std::to_string(d) +
                                      " does not match weights " +
                                      to_string(weights.shape()));
  check_bias(&bias, u);
  Tensor<T> out({n, u});
  for (std::size_t i = 0; i < n; ++i)
    std::copy(bias.raw(), bias.raw() + u, out.raw() + i * u);
  gemm(n, u, d, input.raw(), d, weights.raw(), u, out.raw(), u);
  return out;
}

template <typename T>
ConvGrads<T> dense_affine_backward(const Tensor<T> &input,
                                   const Tensor<T> &weights,
                                   const Tensor<T> &grad_out,
                                   GradRequest request) {
  const std::size_t n = input.dim(0), d = input.dim(1), u = weights.dim(1);
  if (grad_out.shape() != Shape{n, u})
    throw DimensionError("grad_out", "dense gradient shape mismatch");
  ConvGrads<T> grads;
  if (request.bias) {
    grads.bias = Tensor<T>({u});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < u; ++j)
        grads.bias[j] += grad_out[i * u + j];
  }
  if (request.weights) {
    grads.weights = Tensor<T>({d, u});
    std::vector<T> xt(d * n);
    transpose(input.raw(), n, d, xt.data());
    gemm(d, u, n, xt.data(), n, grad_out.raw(), u, grads.weights.raw(), u);
  }
  if (request.input) {
    grads.input = Tensor<T>({n, d});
    std::vector<T> wt(u * d);
    transpose(weights.raw(), d, u, wt.data());
    gemm(n, d, u, grad_out.raw(), u, wt.data(), d, grads.input.raw(), d);
  }
  return grads;
}

// --- batch normalisation -----------------------------------------------------------

template <typename T>
Tensor<T> batch_norm(const Tensor<T> &input, const Tensor<T> &gamma,
                     const Tensor<T> &beta, Tensor<T> &running_mean,
                     Tensor<T> &running_var, Mode mode,
                     const BatchNormOptions &options, BatchNormSaved<T> *saved) {
  require_rank(input, 4, "batch_norm input");
  const std::size_t c = input.dim(3);
  const std::size_t m = input.dim(0) * input.dim(1) * input.dim(2);
  for (const Tensor<T> *p : {&gamma, &beta, static_cast<const Tensor<T> *>(&running_mean),
                             static_cast<const Tensor<T> *>(&running_var)})
    if (p->shape() != Shape{c})
      throw DimensionError("channels", "batch_norm parameter shape " +
                                           to_string(p->shape()) + " vs " +
                                           std::to_string(c) + " channels");
  if (mode == Mode::train && m < 2)
    throw DimensionError("batch", "train-mode batch norm needs N*H*W >= 2");

  const T *x = input.raw();
  std::vector<T> mean(c), inv_std(c);
  if (mode == Mode::train) {
    std::vector<double> sum(c, 0.0), sq(c, 0.0);
    for (std::size_t p = 0; p < m; ++p)
      for (std::size_t ch = 0; ch < c; ++ch)
        sum[ch] += x[p * c + ch];
    for (std::size_t ch = 0; ch < c; ++ch)
      mean[ch] = static_cast<T>(sum[ch] / static_cast<double>(m));
    for (std::size_t p = 0; p < m; ++p)
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double d = static_cast<double>(x[p * c + ch]) - mean[ch];
        sq[ch] += d * d;
      }
    const T mom = static_cast<T>(options.momentum);
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double var = sq[ch] / static_cast<double>(m);
      inv_std[ch] = static_cast<T>(1.0 / std::sqrt(var + options.epsilon));
      const T unbiased = static_cast<T>(sq[ch] / static_cast<double>(m - 1));
      running_mean[ch] = mom * running_mean[ch] + (T{1} - mom) * mean[ch];
      running_var[ch] = mom * running_var[ch] + (T{1} - mom) * unbiased;
    }
  } else {
    for (std::size_t ch = 0; ch < c; ++ch) {
      mean[ch] = running_mean[ch];
      inv_std[ch] = static_cast<T>(
          1.0 / std::sqrt(static_cast<double>(running_var[ch]) + options.epsilon));
    }
  }

  Tensor<T> out(input.shape());
  Tensor<T> xhat;
  if (saved)
    xhat = Tensor<T>(input.shape());
  for (std::size_t p = 0; p < m; ++p)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const T nrm = (x[p * c + ch] - mean[ch]) * inv_std[ch];
      out[p * c + ch] = gamma[ch] * nrm + beta[ch];
      if (saved)
        xhat[p * c + ch] = nrm;
    }
  if (saved) {
    saved->normalized = std::move(xhat);
    saved->inv_std = std::move(inv_std);
    saved->mode = mode;
  }
  return out;
}

template <typename T>
BatchNormGrads<T> batch_norm_backward(const Tensor<T> &grad_out,
                                      const Tensor<T> &gamma,
                                      const BatchNormSaved<T> &saved,
                                      GradRequest request) {
  const Tensor<T> &xhat = saved.normalized;
  if (grad_out.shape() != xhat.shape())
    throw DimensionError("grad_out", "batch_norm gradient shape mismatch");
  const std::size_t c = xhat.dim(3);
  const std::size_t m = xhat.size() / c;
  std::vector<T> sum_dy(c, T{0}), sum_dy_xhat(c, T{0});
  for (std::size_t p = 0; p < m; ++p)
    for (std::size_t ch = 0; ch < c; ++ch) {
      sum_dy[ch] += grad_out[p * c + ch];
      sum_dy_xhat[ch] += grad_out[p * c + ch] * xhat[p * c + ch];
    }
  BatchNormGrads<T> grads;
  if (request.weights)
    grads.gamma = Tensor<T>({c}, sum_dy_xhat);
  if (request.bias)
    grads.beta = Tensor<T>({c}, sum_dy);
  if (request.input) {
    grads.input = Tensor<T>(xhat.shape());
    const T mt = static_cast<T>(m);
    for (std::size_t p = 0; p < m; ++p)
      for (std::size_t ch = 0; ch < c; ++ch) {
        const std::size_t i = p * c + ch;
        if (saved.mode == Mode::train) {
          grads.input[i] = gamma[ch] * saved.inv_std[ch] / mt *
                           (mt * grad_out[i] - sum_dy[ch] - xhat[i] * sum_dy_xhat[ch]);
        } else {
          grads.input[i] = grad_out[i] * gamma[ch] * saved.inv_std[ch];
        }
      }
  }
  return grads;
}

// --- elementwise ----------------------------------------------------------------------

template <typename T>
Tensor<T> activation(const Tensor<T> &input, ActivationKind kind) {
  Tensor<T> out = input;
  for (auto &v : out.data()) {
    v = v > T{0} ? v : T{0};
    if (kind == ActivationKind::relu6 && v > T{6})
      v = T{6};
  }
  return out;
}

template <typename T>
Tensor<T> activation_backward(const Tensor<T> &input, const Tensor<T> &grad_out,
                              ActivationKind kind) {
  if (input.shape() != grad_out.shape())
    throw DimensionError("grad_out", "activation gradient shape mismatch");
  Tensor<T> dx(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) {
    const T x = input[i];
    const bool pass = x > T{0} && (kind == ActivationKind::relu || x < T{6});
    dx[i] = pass ? grad_out[i] : T{0};
  }
  return dx;
}

template <typename T> Tensor<T> add(const Tensor<T> &a, const Tensor<T> &b) {
  if (a.shape() != b.shape())
    throw DimensionError("shape", "cannot add " + to_string(a.shape()) + " and " +
                                      to_string(b.shape()));
  Tensor<T> out = a;
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] += b[i];
  return out;
}

template <typename T> Tensor<T> softmax(const Tensor<T> &logits) {
  require_rank(logits, 2, "softmax input");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  Tensor<T> out(logits.shape());
  for (std::size_t i = 0; i < n; ++i) {
    const T *z = logits.raw() + i * k;
    T *p = out.raw() + i * k;
    const T mx = *std::max_element(z, z + k);
    T sum{0};
    for (std::size_t j = 0; j < k; ++j) {
      p[j] = std::exp(z[j] - mx);
      sum += p[j];
    }
    for (std::size_t j = 0; j < k; ++j)
      p[j] /= sum;
  }
  return out;
}

template <typename T>
Tensor<T> softmax_backward(const Tensor<T> &probs, const Tensor<T> &grad_out) {
  if (probs.shape() != grad_out.shape())
    throw DimensionError("grad_out", "softmax gradient shape mismatch");
  const std::size_t n = probs.dim(0), k = probs.dim(1);
  Tensor<T> dx(probs.shape());
  for (std::size_t i = 0; i < n; ++i) {
    T dot{0};
    for (std::size_t j = 0; j < k; ++j)
      dot += grad_out[i * k + j] * probs[i * k + j];
    for (std::size_t j = 0; j < k; ++j)
      dx[i * k + j] = probs[i * k + j] * (grad_out[i * k + j] - dot);
  }
  return dx;
}

template <typename T>
Tensor<T> dropout(const Tensor<T> &input, double rate, Mode mode, Rng &rng,
                  std::vector<T> *mask) {
  if (!(rate >= 0.0 && rate < 1.0))
    throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
  if (mode == Mode::infer || rate == 0.0) {
    if (mask)
      mask->assign(input.size(), T{1});
    return input;
  }
  const T scale = static_cast<T>(1.0 / (1.0 - rate));
  std::vector<T> m(input.size());
  Tensor<T> out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) {
    m[i] = rng.uniform() < rate ? T{0} : scale;
    out[i] = input[i] * m[i];
  }
  if (mask)
    *mask = std::move(m);
  return out;
}

#define MRINET_INSTANTIATE(T)                                                      \
  template Tensor<T> conv2d(const Tensor<T> &, const Tensor<T> &,                 \
                            const Tensor<T> *, const ConvSpec &);                  \
  template ConvGrads<T> conv2d_backward(const Tensor<T> &, const Tensor<T> &,     \
                                        const Tensor<T> &, const ConvSpec &,      \
                                        GradRequest);                             \
  template Tensor<T> depthwise_conv2d(const Tensor<T> &, const Tensor<T> &,       \
                                      const Tensor<T> *, const ConvSpec &);        \
  template ConvGrads<T> depthwise_conv2d_backward(                                \
      const Tensor<T> &, const Tensor<T> &, const Tensor<T> &, const ConvSpec &,  \
      GradRequest);                                                               \
  template Tensor<T> max_pool2d(const Tensor<T> &, const PoolSpec &,              \
                                std::vector<std::size_t> *);                      \
  template Tensor<T> max_pool2d_backward(                                         \
      const Shape &, const std::vector<std::size_t> &, const Tensor<T> &);        \
  template Tensor<T> global_average_pool(const Tensor<T> &);                      \
  template Tensor<T> global_average_pool_backward(const Shape &,                  \
                                                  const Tensor<T> &);             \
  template Tensor<T> dense_affine(const Tensor<T> &, const Tensor<T> &,           \
                                  const Tensor<T> &);                             \
  template ConvGrads<T> dense_affine_backward(                                    \
      const Tensor<T> &, const Tensor<T> &, const Tensor<T> &, GradRequest);      \
  template Tensor<T> batch_norm(const Tensor<T> &, const Tensor<T> &,             \
                                const Tensor<T> &, Tensor<T> &, Tensor<T> &,      \
                                Mode, const BatchNormOptions &,                   \
                                BatchNormSaved<T> *);                             \
  template BatchNormGrads<T> batch_norm_backward(                                 \
      const Tensor<T> &, const Tensor<T> &, const BatchNormSaved<T> &,            \
      GradRequest);                                                               \
  template Tensor<T> activation(const Tensor<T> &, ActivationKind);               \
  template Tensor<T> activation_backward(const Tensor<T> &, const Tensor<T> &,    \
                                         ActivationKind);                         \
  template Tensor<T> add(const Tensor<T> &, const Tensor<T> &);                   \
  template Tensor<T> softmax(const Tensor<T> &);                                  \
  template Tensor<T> softmax_backward(const Tensor<T> &, const Tensor<T> &);      \
  template Tensor<T> dropout(const Tensor<T> &, double, Mode, Rng &,              \
                             std::vector<T> *);

MRINET_INSTANTIATE(float)
MRINET_INSTANTIATE(double)

} // namespace mrinet
