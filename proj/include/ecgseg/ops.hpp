#pragma once

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <random>

#include "ecgseg/tensor.hpp"

namespace ecgseg::nn {

// The op set covers exactly what the segmentation/classification model needs:
// conv1d (stride 1), pooling, linear x2 upsampling, leaky relu, batch norm,
// per-timestamp softmax, channel concat/slice, edge padding/cropping, dropout,
// and the focal/bce losses. Inputs are [C, L] unless noted.

namespace detail {

inline bool blas_single_thread_init() {
  openblas_set_num_threads(1);
  return true;
}

inline void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha, const float* a,
                 int lda, const float* b, int ldb, float beta, float* c, int ldc) {
  static const bool init = blas_single_thread_init();
  (void)init;
  cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

inline void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha, const double* a,
                 int lda, const double* b, int ldb, double beta, double* c, int ldc) {
  static const bool init = blas_single_thread_init();
  (void)init;
  cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

template <typename T>
std::vector<T>& scratch(int which) {
  thread_local std::vector<T> bufs[2];
  return bufs[which];
}

// col[(ci*K + k), l] = x[ci, l + k - padding], zero outside [0, L)
template <typename T>
void im2col(const T* x, int c_in, int length, int kernel, int padding, int l_out, T* col) {
  for (int ci = 0; ci < c_in; ++ci) {
    const T* xrow = x + static_cast<size_t>(ci) * length;
    for (int k = 0; k < kernel; ++k) {
      T* crow = col + (static_cast<size_t>(ci) * kernel + k) * l_out;
      const int shift = k - padding;
      const int lo = std::max(0, -shift);
      const int hi = std::min(l_out, length - shift);
      if (lo > 0) std::fill(crow, crow + std::min(lo, l_out), T(0));
      if (hi > lo) std::copy(xrow + lo + shift, xrow + hi + shift, crow + lo);
      if (hi < l_out) std::fill(crow + std::max(hi, 0), crow + l_out, T(0));
    }
  }
}

template <typename T>
void col2im_add(const T* col, int c_in, int length, int kernel, int padding, int l_out, T* dx) {
  for (int ci = 0; ci < c_in; ++ci) {
    T* xrow = dx + static_cast<size_t>(ci) * length;
    for (int k = 0; k < kernel; ++k) {
      const T* crow = col + (static_cast<size_t>(ci) * kernel + k) * l_out;
      const int shift = k - padding;
      const int lo = std::max(0, -shift);
      const int hi = std::min(l_out, length - shift);
      for (int l = lo; l < hi; ++l) xrow[l + shift] += crow[l];
    }
  }
}

}  // namespace detail

// x: [C_in, L], w: [C_out, C_in, K], b: [C_out]. Stride fixed at 1,
// zero padding on both ends. L_out = L + 2*padding - K + 1.
template <typename T>
Tensor<T> conv1d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, int padding) {
  if (x.rank() != 2 || w.rank() != 3 || b.rank() != 1) throw ShapeError("conv1d: bad ranks");
  const int c_in = x.dim(0), length = x.dim(1);
  const int c_out = w.dim(0), kernel = w.dim(2);
  if (w.dim(1) != c_in)
    throw ShapeError("conv1d: weight expects " + std::to_string(w.dim(1)) + " input channels, got " +
                     std::to_string(c_in));
  if (b.dim(0) != c_out) throw ShapeError("conv1d: bias/out channel mismatch");
  if (kernel % 2 == 0) throw ShapeError("conv1d: kernel size must be odd");
  if (padding < 0) throw ShapeError("conv1d: negative padding");
  const int l_out = length + 2 * padding - kernel + 1;
  if (l_out < 1) throw ShapeError("conv1d: output length < 1");

  const int ck = c_in * kernel;
  auto& col = detail::scratch<T>(0);
  col.resize(static_cast<size_t>(ck) * l_out);
  detail::im2col(x.value().data(), c_in, length, kernel, padding, l_out, col.data());

  auto out = Tensor<T>::result(
      {c_out, l_out}, {x, w, b}, [c_in, length, kernel, padding, l_out, c_out, ck](auto& n) {
        const auto& x_in = n.inputs[0];
        const auto& w_in = n.inputs[1];
        const auto& b_in = n.inputs[2];
        auto& colbuf = detail::scratch<T>(0);
        colbuf.resize(static_cast<size_t>(ck) * l_out);
        detail::im2col(x_in.value().data(), c_in, length, kernel, padding, l_out, colbuf.data());
        if (w_in.requires_grad()) {
          detail::gemm(false, true, c_out, ck, l_out, T(1), n.grad.data(), l_out, colbuf.data(),
                       l_out, T(1), w_in.node()->grad.data(), ck);
        }
        if (b_in.requires_grad()) {
          auto& db = b_in.node()->grad;
          for (int co = 0; co < c_out; ++co) {
            T s = 0;
            const T* g = n.grad.data() + static_cast<size_t>(co) * l_out;
            for (int l = 0; l < l_out; ++l) s += g[l];
            db[co] += s;
          }
        }
        if (x_in.requires_grad()) {
          auto& dcol = detail::scratch<T>(1);
          dcol.resize(static_cast<size_t>(ck) * l_out);
          detail::gemm(true, false, ck, l_out, c_out, T(1), w_in.value().data(), ck, n.grad.data(),
                       l_out, T(0), dcol.data(), l_out);
          detail::col2im_add(dcol.data(), c_in, length, kernel, padding, l_out,
                             x_in.node()->grad.data());
        }
      });

  detail::gemm(false, false, c_out, l_out, ck, T(1), w.value().data(), ck, col.data(), l_out, T(0),
               out.value().data(), l_out);
  for (int co = 0; co < c_out; ++co) {
    T* row = out.value().data() + static_cast<size_t>(co) * l_out;
    const T bias = b.value()[co];
    for (int l = 0; l < l_out; ++l) row[l] += bias;
  }
  return out;
}

// Downsample by 2; odd trailing element dropped. Gradient goes to the
// argmax of each pair, first element on ties.
template <typename T>
Tensor<T> maxpool1d(const Tensor<T>& x) {
  if (x.rank() != 2) throw ShapeError("maxpool1d: expected [C, L]");
  const int c = x.dim(0), length = x.dim(1);
  if (length < 2) throw ShapeError("maxpool1d: length must be >= 2");
  const int l_out = length / 2;
  auto argmax = std::make_shared<std::vector<int>>(static_cast<size_t>(c) * l_out);

  auto out = Tensor<T>::result({c, l_out}, {x}, [argmax](auto& n) {
    const auto& x_in = n.inputs[0];
    if (!x_in.requires_grad()) return;
    auto& dx = x_in.node()->grad;
    for (size_t i = 0; i < n.grad.size(); ++i) dx[(*argmax)[i]] += n.grad[i];
  });

  const auto& xv = x.value();
  auto& ov = out.value();
  for (int ci = 0; ci < c; ++ci) {
    const size_t xoff = static_cast<size_t>(ci) * length;
    const size_t ooff = static_cast<size_t>(ci) * l_out;
    for (int l = 0; l < l_out; ++l) {
      const size_t i0 = xoff + 2 * l, i1 = i0 + 1;
      if (xv[i1] > xv[i0]) {
        ov[ooff + l] = xv[i1];
        (*argmax)[ooff + l] = static_cast<int>(i1);
      } else {
        ov[ooff + l] = xv[i0];
        (*argmax)[ooff + l] = static_cast<int>(i0);
      }
    }
  }
  return out;
}

// Mean over contiguous windows; target_len must divide L.
template <typename T>
Tensor<T> avgpool1d(const Tensor<T>& x, int target_len) {
  if (x.rank() != 2) throw ShapeError("avgpool1d: expected [C, L]");
  const int c = x.dim(0), length = x.dim(1);
  if (target_len < 1 || length % target_len != 0)
    throw ShapeError("avgpool1d: target length " + std::to_string(target_len) +
                     " does not divide " + std::to_string(length));
  const int window = length / target_len;
  const T inv = T(1) / static_cast<T>(window);

  auto out = Tensor<T>::result({c, target_len}, {x}, [c, length, target_len, window, inv](auto& n) {
    const auto& x_in = n.inputs[0];
    if (!x_in.requires_grad()) return;
    auto& dx = x_in.node()->grad;
    for (int ci = 0; ci < c; ++ci)
      for (int l = 0; l < target_len; ++l) {
        const T g = n.grad[static_cast<size_t>(ci) * target_len + l] * inv;
        T* d = dx.data() + static_cast<size_t>(ci) * length + static_cast<size_t>(l) * window;
        for (int k = 0; k < window; ++k) d[k] += g;
      }
  });

  for (int ci = 0; ci < c; ++ci)
    for (int l = 0; l < target_len; ++l) {
      const T* s = x.value().data() + static_cast<size_t>(ci) * length + static_cast<size_t>(l) * window;
      T acc = 0;
      for (int k = 0; k < window; ++k) acc += s[k];
      out.value()[static_cast<size_t>(ci) * target_len + l] = acc * inv;
    }
  return out;
}

// Doubles the length; output i samples the input at (i + 0.5)/2 - 0.5,
// edge-clamped, with linear interpolation between neighbors.
template <typename T>
Tensor<T> upsample_linear2(const Tensor<T>& x) {
  if (x.rank() != 2) throw ShapeError("upsample_linear2: expected [C, L]");
  const int c = x.dim(0), length = x.dim(1);
  const int l_out = 2 * length;

  auto weights = [length](int i, int& i0, T& w1) {
    double s = 0.5 * i - 0.25;
    if (s <= 0) {
      i0 = 0;
      w1 = 0;
    } else if (s >= length - 1) {
      i0 = length - 1;
      w1 = 0;
    } else {
      i0 = static_cast<int>(s);
      w1 = static_cast<T>(s - i0);
    }
  };

  auto out = Tensor<T>::result({c, l_out}, {x}, [c, length, l_out, weights](auto& n) {
    const auto& x_in = n.inputs[0];
    if (!x_in.requires_grad()) return;
    auto& dx = x_in.node()->grad;
    for (int ci = 0; ci < c; ++ci) {
      T* drow = dx.data() + static_cast<size_t>(ci) * length;
      const T* g = n.grad.data() + static_cast<size_t>(ci) * l_out;
      for (int i = 0; i < l_out; ++i) {
        int i0;
        T w1;
        weights(i, i0, w1);
        drow[i0] += g[i] * (T(1) - w1);
        if (w1 != T(0)) drow[i0 + 1] += g[i] * w1;
      }
    }
  });

  for (int ci = 0; ci < c; ++ci) {
    const T* xrow = x.value().data() + static_cast<size_t>(ci) * length;
    T* orow = out.value().data() + static_cast<size_t>(ci) * l_out;
    for (int i = 0; i < l_out; ++i) {
      int i0;
      T w1;
      weights(i, i0, w1);
      orow[i] = w1 == T(0) ? xrow[i0] : (T(1) - w1) * xrow[i0] + w1 * xrow[i0 + 1];
    }
  }
  return out;
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope = T(0.01)) {
  auto out = Tensor<T>::result(x.shape(), {x}, [slope](auto& n) {
    const auto& x_in = n.inputs[0];
    if (!x_in.requires_grad()) return;
    const auto& xv = x_in.value();
    auto& dx = x_in.node()->grad;
    for (size_t i = 0; i < n.grad.size(); ++i) dx[i] += n.grad[i] * (xv[i] >= T(0) ? T(1) : slope);
  });
  const auto& xv = x.value();
  auto& ov = out.value();
  for (size_t i = 0; i < xv.size(); ++i) ov[i] = xv[i] >= T(0) ? xv[i] : slope * xv[i];
  return out;
}

// Per-channel normalization over the length axis. Training mode uses the
// current statistics and folds them into the running estimates with the
// given momentum; eval mode normalizes with the running estimates.
template <typename T>
Tensor<T> batchnorm1d(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                      std::vector<T>& running_mean, std::vector<T>& running_var, bool training,
                      T momentum = T(0.1), T eps = T(1e-5)) {
  if (x.rank() != 2) throw ShapeError("batchnorm1d: expected [C, L]");
  const int c = x.dim(0), length = x.dim(1);
  if (gamma.dim(0) != c || beta.dim(0) != c) throw ShapeError("batchnorm1d: parameter size mismatch");
  if (running_mean.size() != static_cast<size_t>(c) || running_var.size() != static_cast<size_t>(c))
    throw ShapeError("batchnorm1d: running stats size mismatch");

  auto xhat = std::make_shared<std::vector<T>>(x.size());
  auto inv_std = std::make_shared<std::vector<T>>(c);
  const T inv_len = T(1) / static_cast<T>(length);

  for (int ci = 0; ci < c; ++ci) {
    const T* xrow = x.value().data() + static_cast<size_t>(ci) * length;
    T mean, var;
    if (training) {
      T s = 0;
      for (int l = 0; l < length; ++l) s += xrow[l];
      mean = s * inv_len;
      T sq = 0;
      for (int l = 0; l < length; ++l) {
        const T d = xrow[l] - mean;
        sq += d * d;
      }
      var = sq * inv_len;
      running_mean[ci] = (T(1) - momentum) * running_mean[ci] + momentum * mean;
      running_var[ci] = (T(1) - momentum) * running_var[ci] + momentum * var;
    } else {
      mean = running_mean[ci];
      var = running_var[ci];
    }
    const T inv = T(1) / std::sqrt(var + eps);
    (*inv_std)[ci] = inv;
    T* hrow = xhat->data() + static_cast<size_t>(ci) * length;
    for (int l = 0; l < length; ++l) hrow[l] = (xrow[l] - mean) * inv;
  }

  auto out = Tensor<T>::result({c, length}, {x, gamma, beta},
                               [c, length, inv_len, xhat, inv_std, training](auto& n) {
    const auto& x_in = n.inputs[0];
    const auto& gamma_in = n.inputs[1];
    const auto& beta_in = n.inputs[2];
    for (int ci = 0; ci < c; ++ci) {
      const T* g = n.grad.data() + static_cast<size_t>(ci) * length;
      const T* h = xhat->data() + static_cast<size_t>(ci) * length;
      T sum_g = 0, sum_gh = 0;
      for (int l = 0; l < length; ++l) {
        sum_g += g[l];
        sum_gh += g[l] * h[l];
      }
      if (beta_in.requires_grad()) beta_in.node()->grad[ci] += sum_g;
      if (gamma_in.requires_grad()) gamma_in.node()->grad[ci] += sum_gh;
      if (x_in.requires_grad()) {
        T* dx = x_in.node()->grad.data() + static_cast<size_t>(ci) * length;
        const T scale = gamma_in.value()[ci] * (*inv_std)[ci];
        if (training) {
          const T mg = sum_g * inv_len, mgh = sum_gh * inv_len;
          for (int l = 0; l < length; ++l) dx[l] += scale * (g[l] - mg - h[l] * mgh);
        } else {
          for (int l = 0; l < length; ++l) dx[l] += scale * g[l];
        }
      }
    }
  });

  for (int ci = 0; ci < c; ++ci) {
    const T g = gamma.value()[ci], b = beta.value()[ci];
    const T* h = xhat->data() + static_cast<size_t>(ci) * length;
    T* orow = out.value().data() + static_cast<size_t>(ci) * length;
    for (int l = 0; l < length; ++l) orow[l] = g * h[l] + b;
  }
  return out;
}

// Softmax over the channel axis, one distribution per timestamp,
// computed in max-subtracted form.
template <typename T>
Tensor<T> softmax_channels(const Tensor<T>& x) {
  if (x.rank() != 2) throw ShapeError("softmax_channels: expected [C, L]");
  const int c = x.dim(0), length = x.dim(1);

  auto out = Tensor<T>::result({c, length}, {x}, [c, length](auto& n) {
    const auto& x_in = n.inputs[0];
    if (!x_in.requires_grad()) return;
    auto& dx = x_in.node()->grad;
    for (int l = 0; l < length; ++l) {
      T dot = 0;
      for (int ci = 0; ci < c; ++ci)
        dot += n.value[static_cast<size_t>(ci) * length + l] * n.grad[static_cast<size_t>(ci) * length + l];
      for (int ci = 0; ci < c; ++ci) {
        const size_t idx = static_cast<size_t>(ci) * length + l;
        dx[idx] += n.value[idx] * (n.grad[idx] - dot);
      }
    }
  });

  const auto& xv = x.value();
  auto& ov = out.value();
  for (int l = 0; l < length; ++l) {
    T mx = xv[l];
    for (int ci = 1; ci < c; ++ci) mx = std::max(mx, xv[static_cast<size_t>(ci) * length + l]);
    T sum = 0;
    for (int ci = 0; ci < c; ++ci) {
      const size_t idx = static_cast<size_t>(ci) * length + l;
      ov[idx] = std::exp(xv[idx] - mx);
      sum += ov[idx];
    }
    const T inv = T(1) / sum;
    for (int ci = 0; ci < c; ++ci) ov[static_cast<size_t>(ci) * length + l] *= inv;
  }
  return out;
}

template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat_channels: no inputs");
  const int length = parts.front().dim(1);
  int c_total = 0;
  for (const auto& p : parts) {
    if (p.rank() != 2 || p.dim(1) != length) throw ShapeError("concat_channels: length mismatch");
    c_total += p.dim(0);
  }

  auto out = Tensor<T>::result({c_total, length}, parts, [length](auto& n) {
    size_t off = 0;
    for (auto& in : n.inputs) {
      const size_t sz = in.size();
      if (in.requires_grad()) {
        auto& dst = in.node()->grad;
        for (size_t i = 0; i < sz; ++i) dst[i] += n.grad[off + i];
      }
      off += sz;
    }
  });

  size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p.value().begin(), p.value().end(), out.value().begin() + off);
    off += p.size();
  }
  return out;
}

template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, int first, int count) {
  if (x.rank() != 2) throw ShapeError("slice_channels: expected [C, L]");
  const int c = x.dim(0), length = x.dim(1);
  if (first < 0 || count < 1 || first + count > c) throw ShapeError("slice_channels: out of range");

  auto out = Tensor<T>::result({count, length}, {x}, [first, length](auto& n) {
    const auto& x_in = n.inputs[0];
    if (!x_in.requires_grad()) return;
    auto& dx = x_in.node()->grad;
    const size_t off = static_cast<size_t>(first) * length;
    for (size_t i = 0; i < n.grad.size(); ++i) dx[off + i] += n.grad[i];
  });

  const size_t off = static_cast<size_t>(first) * length;
  std::copy(x.value().begin() + off, x.value().begin() + off + out.size(), out.value().begin());
  return out;
}

// Replicates the last column n times.
template <typename T>
Tensor<T> pad_right_edge(const Tensor<T>& x, int n_pad) {
  if (x.rank() != 2) throw ShapeError("pad_right_edge: expected [C, L]");
  if (n_pad == 0) return x;
  if (n_pad < 0 || x.dim(1) < 1) throw ShapeError("pad_right_edge: bad arguments");
  const int c = x.dim(0), length = x.dim(1), l_out = length + n_pad;

  auto out = Tensor<T>::result({c, l_out}, {x}, [c, length, l_out](auto& n) {
    const auto& x_in = n.inputs[0];
    if (!x_in.requires_grad()) return;
    auto& dx = x_in.node()->grad;
    for (int ci = 0; ci < c; ++ci) {
      const T* g = n.grad.data() + static_cast<size_t>(ci) * l_out;
      T* d = dx.data() + static_cast<size_t>(ci) * length;
      for (int l = 0; l < length; ++l) d[l] += g[l];
      for (int l = length; l < l_out; ++l) d[length - 1] += g[l];
    }
  });

  for (int ci = 0; ci < c; ++ci) {
    const T* xrow = x.value().data() + static_cast<size_t>(ci) * length;
    T* orow = out.value().data() + static_cast<size_t>(ci) * l_out;
    std::copy(xrow, xrow + length, orow);
    std::fill(orow + length, orow + l_out, xrow[length - 1]);
  }
  return out;
}

template <typename T>
Tensor<T> crop_cols(const Tensor<T>& x, int first, int count) {
  if (x.rank() != 2) throw ShapeError("crop_cols: expected [C, L]");
  const int c = x.dim(0), length = x.dim(1);
  if (first < 0 || count < 1 || first + count > length) throw ShapeError("crop_cols: out of range");
  if (first == 0 && count == length) return x;

  auto out = Tensor<T>::result({c, count}, {x}, [c, length, first, count](auto& n) {
    const auto& x_in = n.inputs[0];
    if (!x_in.requires_grad()) return;
    auto& dx = x_in.node()->grad;
    for (int ci = 0; ci < c; ++ci) {
      const T* g = n.grad.data() + static_cast<size_t>(ci) * count;
      T* d = dx.data() + static_cast<size_t>(ci) * length + first;
      for (int l = 0; l < count; ++l) d[l] += g[l];
    }
  });

  for (int ci = 0; ci < c; ++ci) {
    const T* xrow = x.value().data() + static_cast<size_t>(ci) * length + first;
    std::copy(xrow, xrow + count, out.value().begin() + static_cast<size_t>(ci) * count);
  }
  return out;
}

// Inverted dropout; identity when not training or p == 0.
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double p, std::mt19937_64* rng, bool training) {
  if (!training || p <= 0.0 || rng == nullptr) return x;
  if (p >= 1.0) throw ShapeError("dropout: p must be < 1");
  auto mask = std::make_shared<std::vector<T>>(x.size());
  std::bernoulli_distribution keep(1.0 - p);
  const T scale = T(1.0 / (1.0 - p));
  for (auto& m : *mask) m = keep(*rng) ? scale : T(0);

  auto out = Tensor<T>::result(x.shape(), {x}, [mask](auto& n) {
    const auto& x_in = n.inputs[0];
    if (!x_in.requires_grad()) return;
    auto& dx = x_in.node()->grad;
    for (size_t i = 0; i < n.grad.size(); ++i) dx[i] += n.grad[i] * (*mask)[i];
  });
  for (size_t i = 0; i < x.size(); ++i) out.value()[i] = x.value()[i] * (*mask)[i];
  return out;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) throw ShapeError("add: shape mismatch");
  auto out = Tensor<T>::result(a.shape(), {a, b}, [](auto& n) {
    for (auto& in : n.inputs) {
      if (!in.requires_grad()) continue;
      auto& d = in.node()->grad;
      for (size_t i = 0; i < n.grad.size(); ++i) d[i] += n.grad[i];
    }
  });
  for (size_t i = 0; i < a.size(); ++i) out.value()[i] = a.value()[i] + b.value()[i];
  return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  auto out = Tensor<T>::result(a.shape(), {a}, [factor](auto& n) {
    const auto& in = n.inputs[0];
    if (!in.requires_grad()) return;
    auto& d = in.node()->grad;
    for (size_t i = 0; i < n.grad.size(); ++i) d[i] += n.grad[i] * factor;
  });
  for (size_t i = 0; i < a.size(); ++i) out.value()[i] = a.value()[i] * factor;
  return out;
}

inline constexpr double kLossEps = 1e-12;

// Mean over timestamps of -(1 - p_true)^gamma * log(p_true), where probs
// holds per-timestamp class distributions [C, L] and labels the true class
// ids. With gamma = 0 this is exactly cross-entropy.
template <typename T>
Tensor<T> focal_loss(const Tensor<T>& probs, const std::vector<int>& labels, double gamma) {
  if (probs.rank() != 2) throw ShapeError("focal_loss: expected [C, L]");
  const int c = probs.dim(0), length = probs.dim(1);
  if (static_cast<int>(labels.size()) != length) throw ShapeError("focal_loss: label length mismatch");
  if (gamma < 0) throw ShapeError("focal_loss: gamma must be >= 0");
  for (int l = 0; l < length; ++l)
    if (labels[l] < 0 || labels[l] >= c) throw ShapeError("focal_loss: label out of range");

  auto labels_copy = std::make_shared<std::vector<int>>(labels);
  auto out = Tensor<T>::result({1}, {probs}, [c, length, gamma, labels_copy](auto& n) {
    const auto& p_in = n.inputs[0];
    if (!p_in.requires_grad()) return;
    auto& dp = p_in.node()->grad;
    const double g0 = n.grad[0];
    const double inv_len = 1.0 / length;
    for (int l = 0; l < length; ++l) {
      const size_t idx = static_cast<size_t>((*labels_copy)[l]) * length + l;
      const double p = p_in.value()[idx];
      const double pc = std::max(p, kLossEps);
      const double u = std::max(1.0 - p, 0.0);
      double grad = -std::pow(u, gamma) / pc;
      if (gamma > 0 && u > 0) grad += gamma * std::pow(u, gamma - 1) * std::log(pc);
      dp[idx] += static_cast<T>(g0 * grad * inv_len);
    }
  });

  double acc = 0;
  for (int l = 0; l < length; ++l) {
    const double p = probs.value()[static_cast<size_t>(labels[l]) * length + l];
    const double pc = std::max(p, kLossEps);
    const double u = std::max(1.0 - p, 0.0);
    acc -= std::pow(u, gamma) * std::log(pc);
  }
  out.value()[0] = static_cast<T>(acc / length);
  return out;
}

// -[t*log(p) + (1 - t)*log(1 - p)] on a single probability.
template <typename T>
Tensor<T> bce_loss(const Tensor<T>& p, int target) {
  if (p.size() != 1) throw ShapeError("bce_loss: expected a scalar probability");
  if (target != 0 && target != 1) throw ShapeError("bce_loss: target must be 0 or 1");

  auto out = Tensor<T>::result({1}, {p}, [target](auto& n) {
    const auto& p_in = n.inputs[0];
    if (!p_in.requires_grad()) return;
    const double pv = p_in.value()[0];
    const double g0 = n.grad[0];
    double grad = target == 1 ? -1.0 / std::max(pv, kLossEps) : 1.0 / std::max(1.0 - pv, kLossEps);
    p_in.node()->grad[0] += static_cast<T>(g0 * grad);
  });

  const double pv = p.value()[0];
  out.value()[0] = static_cast<T>(target == 1 ? -std::log(std::max(pv, kLossEps))
                                              : -std::log(std::max(1.0 - pv, kLossEps)));
  return out;
}

template <typename T>
Tensor<T> total_loss(const Tensor<T>& focal, const Tensor<T>& bce, T alpha) {
  return add(focal, scale(bce, alpha));
}

}  // namespace ecgseg::nn
