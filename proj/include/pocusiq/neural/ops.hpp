#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "pocusiq/core/parallel.hpp"
#include "pocusiq/neural/tensor.hpp"

// Forward/backward kernels for the fixed operator set used by the generator
// and discriminator. Backward functions accumulate into parameter gradients
// and overwrite input gradients. Work is split across the compute pool over
// output planes, so results do not depend on the thread count.
namespace pocusiq::nn {

struct ConvGeometry {
  int stride = 1;
  int pad = 0;
  int output_pad = 0;  ///< transposed convolution only
};

namespace ops_detail {

// Output columns o in [lo, hi) for which o*stride - pad + k lies in [0, in).
inline void strided_range(int in, int out, int stride, int pad, int k, int& lo, int& hi) {
  // o*stride >= pad - k
  lo = pad - k > 0 ? (pad - k + stride - 1) / stride : 0;
  // o*stride <= in - 1 + pad - k
  const int top = in - 1 + pad - k;
  hi = top < 0 ? 0 : std::min(out, top / stride + 1);
  if (lo > hi) lo = hi;
}

}  // namespace ops_detail

inline int conv_out_size(int in, int k, const ConvGeometry& g) {
  return (in + 2 * g.pad - k) / g.stride + 1;
}

inline int conv_transpose_out_size(int in, int k, const ConvGeometry& g) {
  return (in - 1) * g.stride - 2 * g.pad + k + g.output_pad;
}

/// Cross-correlation. x:[N,Ci,H,W], w:[Co,Ci,K,K], b:[Co] -> y:[N,Co,Ho,Wo].
template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, const ConvGeometry& g) {
  require_rank4(x, "conv2d");
  require_rank4(w, "conv2d weights");
  if (w.dim(1) != x.c() || w.dim(2) != w.dim(3) || b.numel() != static_cast<std::size_t>(w.dim(0))) {
    throw UsageError("conv2d: weights " + shape_string(w.shape()) + " incompatible with input " +
                     shape_string(x.shape()));
  }
  const int N = x.n(), Ci = x.c(), H = x.h(), W = x.w();
  const int Co = w.dim(0), K = w.dim(2);
  const int Ho = conv_out_size(H, K, g), Wo = conv_out_size(W, K, g);
  if (Ho <= 0 || Wo <= 0) throw UsageError("conv2d: input too small for kernel");
  Tensor<T> y({N, Co, Ho, Wo});
  const int s = g.stride, p = g.pad;
  parallel_for(static_cast<std::size_t>(N) * Co, [&](std::size_t begin, std::size_t end) {
    for (std::size_t job = begin; job < end; ++job) {
      const int n = static_cast<int>(job / Co), co = static_cast<int>(job % Co);
      T* yp = &y.at(n, co, 0, 0);
      std::fill(yp, yp + static_cast<std::size_t>(Ho) * Wo, b[co]);
      for (int ci = 0; ci < Ci; ++ci) {
        const T* xp = &x.at(n, ci, 0, 0);
        for (int ky = 0; ky < K; ++ky) {
          int oy0, oy1;
          ops_detail::strided_range(H, Ho, s, p, ky, oy0, oy1);
          for (int kx = 0; kx < K; ++kx) {
            const T wv = w.at(co, ci, ky, kx);
            int ox0, ox1;
            ops_detail::strided_range(W, Wo, s, p, kx, ox0, ox1);
              if (ox0 >= ox1) continue;
            for (int oy = oy0; oy < oy1; ++oy) {
              const T* xr = xp + static_cast<std::ptrdiff_t>(oy * s - p + ky) * W + (ox0 * s - p + kx);
              T* yr = yp + static_cast<std::size_t>(oy) * Wo;
              const int cnt = ox1 - ox0;
              if (s == 1) {
                for (int i = 0; i < cnt; ++i) yr[ox0 + i] += wv * xr[i];
              } else {
                for (int i = 0; i < cnt; ++i) yr[ox0 + i] += wv * xr[i * s];
              }
            }
          }
        }
      }
    }
  });
  return y;
}

/// Gradients of conv2d. `dx` (optional) is overwritten; `dw`, `db` accumulate.
template <typename T>
void conv2d_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& dy, const ConvGeometry& g,
                     Tensor<T>* dx, std::span<T> dw, std::span<T> db) {
  const int N = x.n(), Ci = x.c(), H = x.h(), W = x.w();
  const int Co = w.dim(0), K = w.dim(2);
  const int Ho = dy.h(), Wo = dy.w();
  const int s = g.stride, p = g.pad;
  if (dy.n() != N || dy.c() != Co) throw UsageError("conv2d_backward: gradient shape mismatch");

  if (!db.empty()) {
    for (int co = 0; co < Co; ++co) {
      T acc = 0;
      for (int n = 0; n < N; ++n) {
        const T* d = &dy.at(n, co, 0, 0);
        for (int i = 0; i < Ho * Wo; ++i) acc += d[i];
      }
      db[co] += acc;
    }
  }
  if (!dw.empty()) {
    parallel_for(static_cast<std::size_t>(Co), [&](std::size_t begin, std::size_t end) {
      for (int co = static_cast<int>(begin); co < static_cast<int>(end); ++co) {
        for (int ci = 0; ci < Ci; ++ci) {
          for (int ky = 0; ky < K; ++ky) {
            int oy0, oy1;
            ops_detail::strided_range(H, Ho, s, p, ky, oy0, oy1);
            for (int kx = 0; kx < K; ++kx) {
              int ox0, ox1;
              ops_detail::strided_range(W, Wo, s, p, kx, ox0, ox1);
              if (ox0 >= ox1) continue;
              T acc = 0;
              for (int n = 0; n < N; ++n) {
                const T* xp = &x.at(n, ci, 0, 0);
                const T* dp = &dy.at(n, co, 0, 0);
                for (int oy = oy0; oy < oy1; ++oy) {
                  const T* xr = xp + static_cast<std::ptrdiff_t>(oy * s - p + ky) * W + (ox0 * s - p + kx);
                  const T* dr = dp + static_cast<std::size_t>(oy) * Wo + ox0;
                  for (int i = 0; i < ox1 - ox0; ++i) acc += dr[i] * xr[i * s];
                }
              }
              dw[((static_cast<std::size_t>(co) * Ci + ci) * K + ky) * K + kx] += acc;
            }
          }
        }
      }
    });
  }
  if (dx) {
    *dx = Tensor<T>(x.shape());
    parallel_for(static_cast<std::size_t>(N) * Ci, [&](std::size_t begin, std::size_t end) {
      for (std::size_t job = begin; job < end; ++job) {
        const int n = static_cast<int>(job / Ci), ci = static_cast<int>(job % Ci);
        T* xp = &dx->at(n, ci, 0, 0);
        for (int co = 0; co < Co; ++co) {
          const T* dp = &dy.at(n, co, 0, 0);
          for (int ky = 0; ky < K; ++ky) {
            int oy0, oy1;
            ops_detail::strided_range(H, Ho, s, p, ky, oy0, oy1);
            for (int kx = 0; kx < K; ++kx) {
              const T wv = w.at(co, ci, ky, kx);
              int ox0, ox1;
              ops_detail::strided_range(W, Wo, s, p, kx, ox0, ox1);
              if (ox0 >= ox1) continue;
              for (int oy = oy0; oy < oy1; ++oy) {
                T* xr = xp + static_cast<std::ptrdiff_t>(oy * s - p + ky) * W + (ox0 * s - p + kx);
                const T* dr = dp + static_cast<std::size_t>(oy) * Wo + ox0;
                for (int i = 0; i < ox1 - ox0; ++i) xr[i * s] += wv * dr[i];
              }
            }
          }
        }
      }
    });
  }
}

/// Transposed convolution (gradient of conv2d w.r.t. its input).
/// x:[N,Ci,H,W], w:[Ci,Co,K,K], b:[Co] -> y:[N,Co,(H-1)s-2p+K+op, ...].
template <typename T>
Tensor<T> conv_transpose2d_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                                   const ConvGeometry& g) {
  require_rank4(x, "conv_transpose2d");
  require_rank4(w, "conv_transpose2d weights");
  if (w.dim(0) != x.c() || w.dim(2) != w.dim(3) || b.numel() != static_cast<std::size_t>(w.dim(1))) {
    throw UsageError("conv_transpose2d: weights " + shape_string(w.shape()) + " incompatible with input " +
                     shape_string(x.shape()));
  }
  const int N = x.n(), Ci = x.c(), H = x.h(), W = x.w();
  const int Co = w.dim(1), K = w.dim(2);
  const int Ho = conv_transpose_out_size(H, K, g), Wo = conv_transpose_out_size(W, K, g);
  if (Ho <= 0 || Wo <= 0) throw UsageError("conv_transpose2d: empty output");
  Tensor<T> y({N, Co, Ho, Wo});
  const int s = g.stride, p = g.pad;
  parallel_for(static_cast<std::size_t>(N) * Co, [&](std::size_t begin, std::size_t end) {
    for (std::size_t job = begin; job < end; ++job) {
      const int n = static_cast<int>(job / Co), co = static_cast<int>(job % Co);
      T* yp = &y.at(n, co, 0, 0);
      std::fill(yp, yp + static_cast<std::size_t>(Ho) * Wo, b[co]);
      for (int ci = 0; ci < Ci; ++ci) {
        const T* xp = &x.at(n, ci, 0, 0);
        for (int ky = 0; ky < K; ++ky) {
          // input rows i with i*s - p + ky in [0, Ho)
          int iy0, iy1;
          ops_detail::strided_range(Ho, H, s, p, ky, iy0, iy1);
          for (int kx = 0; kx < K; ++kx) {
            const T wv = w.at(ci, co, ky, kx);
            int ix0, ix1;
            ops_detail::strided_range(Wo, W, s, p, kx, ix0, ix1);
              if (ix0 >= ix1) continue;
            for (int iy = iy0; iy < iy1; ++iy) {
              const T* xr = xp + static_cast<std::size_t>(iy) * W + ix0;
              T* yr = yp + static_cast<std::ptrdiff_t>(iy * s - p + ky) * Wo + (ix0 * s - p + kx);
              for (int i = 0; i < ix1 - ix0; ++i) yr[i * s] += wv * xr[i];
            }
          }
        }
      }
    }
  });
  return y;
}

template <typename T>
void conv_transpose2d_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& dy,
                               const ConvGeometry& g, Tensor<T>* dx, std::span<T> dw, std::span<T> db) {
  const int N = x.n(), Ci = x.c(), H = x.h(), W = x.w();
  const int Co = w.dim(1), K = w.dim(2);
  const int Ho = dy.h(), Wo = dy.w();
  const int s = g.stride, p = g.pad;
  if (dy.n() != N || dy.c() != Co) throw UsageError("conv_transpose2d_backward: gradient shape mismatch");

  if (!db.empty()) {
    for (int co = 0; co < Co; ++co) {
      T acc = 0;
      for (int n = 0; n < N; ++n) {
        const T* d = &dy.at(n, co, 0, 0);
        for (int i = 0; i < Ho * Wo; ++i) acc += d[i];
      }
      db[co] += acc;
    }
  }
  if (!dw.empty()) {
    parallel_for(static_cast<std::size_t>(Ci), [&](std::size_t begin, std::size_t end) {
      for (int ci = static_cast<int>(begin); ci < static_cast<int>(end); ++ci) {
        for (int co = 0; co < Co; ++co) {
          for (int ky = 0; ky < K; ++ky) {
            int iy0, iy1;
            ops_detail::strided_range(Ho, H, s, p, ky, iy0, iy1);
            for (int kx = 0; kx < K; ++kx) {
              int ix0, ix1;
              ops_detail::strided_range(Wo, W, s, p, kx, ix0, ix1);
              if (ix0 >= ix1) continue;
              T acc = 0;
              for (int n = 0; n < N; ++n) {
                const T* xp = &x.at(n, ci, 0, 0);
                const T* dp = &dy.at(n, co, 0, 0);
                for (int iy = iy0; iy < iy1; ++iy) {
                  const T* xr = xp + static_cast<std::size_t>(iy) * W + ix0;
                  const T* dr = dp + static_cast<std::ptrdiff_t>(iy * s - p + ky) * Wo + (ix0 * s - p + kx);
                  for (int i = 0; i < ix1 - ix0; ++i) acc += xr[i] * dr[i * s];
                }
              }
              dw[((static_cast<std::size_t>(ci) * Co + co) * K + ky) * K + kx] += acc;
            }
          }
        }
      }
    });
  }
  if (dx) {
    *dx = Tensor<T>(x.shape());
    parallel_for(static_cast<std::size_t>(N) * Ci, [&](std::size_t begin, std::size_t end) {
      for (std::size_t job = begin; job < end; ++job) {
        const int n = static_cast<int>(job / Ci), ci = static_cast<int>(job % Ci);
        T* xp = &dx->at(n, ci, 0, 0);
        for (int co = 0; co < Co; ++co) {
          const T* dp = &dy.at(n, co, 0, 0);
          for (int ky = 0; ky < K; ++ky) {
            int iy0, iy1;
            ops_detail::strided_range(Ho, H, s, p, ky, iy0, iy1);
            for (int kx = 0; kx < K; ++kx) {
              const T wv = w.at(ci, co, ky, kx);
              int ix0, ix1;
              ops_detail::strided_range(Wo, W, s, p, kx, ix0, ix1);
              if (ix0 >= ix1) continue;
              for (int iy = iy0; iy < iy1; ++iy) {
                T* xr = xp + static_cast<std::size_t>(iy) * W + ix0;
                const T* dr = dp + static_cast<std::ptrdiff_t>(iy * s - p + ky) * Wo + (ix0 * s - p + kx);
                for (int i = 0; i < ix1 - ix0; ++i) xr[i] += wv * dr[i * s];
              }
            }
          }
        }
      }
    });
  }
}

/// Per-sample, per-channel normalization without affine parameters.
template <typename T>
struct InstanceNormCache {
  std::vector<T> inv_std;  ///< per (n, c)
  Tensor<T> normalized;
};

template <typename T>
Tensor<T> instance_norm_forward(const Tensor<T>& x, InstanceNormCache<T>* cache, T eps = T(1e-5)) {
  require_rank4(x, "instance_norm");
  const int NC = x.n() * x.c();
  const std::size_t HW = static_cast<std::size_t>(x.h()) * x.w();
  Tensor<T> y(x.shape());
  std::vector<T> inv(NC);
  for (int i = 0; i < NC; ++i) {
    const T* xp = x.ptr() + i * HW;
    T* yp = y.ptr() + i * HW;
    T mean = 0;
    for (std::size_t k = 0; k < HW; ++k) mean += xp[k];
    mean /= static_cast<T>(HW);
    T var = 0;
    for (std::size_t k = 0; k < HW; ++k) var += (xp[k] - mean) * (xp[k] - mean);
    var /= static_cast<T>(HW);
    inv[i] = T(1) / std::sqrt(var + eps);
    for (std::size_t k = 0; k < HW; ++k) yp[k] = (xp[k] - mean) * inv[i];
  }
  if (cache) {
    cache->inv_std = std::move(inv);
    cache->normalized = y;
  }
  return y;
}

template <typename T>
Tensor<T> instance_norm_backward(const Tensor<T>& dy, const InstanceNormCache<T>& cache) {
  const int NC = dy.n() * dy.c();
  const std::size_t HW = static_cast<std::size_t>(dy.h()) * dy.w();
  const T inv_n = T(1) / static_cast<T>(HW);
  Tensor<T> dx(dy.shape());
  for (int i = 0; i < NC; ++i) {
    const T* d = dy.ptr() + i * HW;
    const T* xh = cache.normalized.ptr() + i * HW;
    T* o = dx.ptr() + i * HW;
    T sum_d = 0, sum_dx = 0;
    for (std::size_t k = 0; k < HW; ++k) {
      sum_d += d[k];
      sum_dx += d[k] * xh[k];
    }
    for (std::size_t k = 0; k < HW; ++k) {
      o[k] = cache.inv_std[i] * (d[k] - inv_n * sum_d - xh[k] * inv_n * sum_dx);
    }
  }
  return dx;
}

template <typename T>
Tensor<T> leaky_relu_forward(const Tensor<T>& x, T slope) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) y[i] = x[i] > T(0) ? x[i] : slope * x[i];
  return y;
}

template <typename T>
Tensor<T> leaky_relu_backward(const Tensor<T>& x, const Tensor<T>& dy, T slope) {
  Tensor<T> dx(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) dx[i] = x[i] > T(0) ? dy[i] : slope * dy[i];
  return dx;
}

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& x) {
  return leaky_relu_forward(x, T(0));
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& dy) {
  return leaky_relu_backward(x, dy, T(0));
}

template <typename T>
Tensor<T> tanh_forward(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) y[i] = std::tanh(x[i]);
  return y;
}

/// Uses the forward output y = tanh(x).
template <typename T>
Tensor<T> tanh_backward(const Tensor<T>& y, const Tensor<T>& dy) {
  Tensor<T> dx(y.shape());
  for (std::size_t i = 0; i < y.numel(); ++i) dx[i] = dy[i] * (T(1) - y[i] * y[i]);
  return dx;
}

/// Channel-axis concatenation of two NCHW tensors.
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank4(a, "concat");
  require_rank4(b, "concat");
  if (a.n() != b.n() || a.h() != b.h() || a.w() != b.w()) {
    throw UsageError("concat: shapes " + shape_string(a.shape()) + " and " + shape_string(b.shape()) +
                     " differ outside the channel axis");
  }
  Tensor<T> y({a.n(), a.c() + b.c(), a.h(), a.w()});
  const std::size_t hw = static_cast<std::size_t>(a.h()) * a.w();
  for (int n = 0; n < a.n(); ++n) {
    std::copy_n(&a.at(n, 0, 0, 0), a.c() * hw, &y.at(n, 0, 0, 0));
    std::copy_n(&b.at(n, 0, 0, 0), b.c() * hw, &y.at(n, a.c(), 0, 0));
  }
  return y;
}

/// Splits a concatenation gradient back into its two parts.
template <typename T>
void concat_channels_backward(const Tensor<T>& dy, int channels_a, Tensor<T>& da, Tensor<T>& db) {
  const int N = dy.n(), C = dy.c(), H = dy.h(), W = dy.w();
  const std::size_t hw = static_cast<std::size_t>(H) * W;
  da = Tensor<T>({N, channels_a, H, W});
  db = Tensor<T>({N, C - channels_a, H, W});
  for (int n = 0; n < N; ++n) {
    std::copy_n(&dy.at(n, 0, 0, 0), channels_a * hw, &da.at(n, 0, 0, 0));
    std::copy_n(&dy.at(n, channels_a, 0, 0), (C - channels_a) * hw, &db.at(n, 0, 0, 0));
  }
}

}  // namespace pocusiq::nn
