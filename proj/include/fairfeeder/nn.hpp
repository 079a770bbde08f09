#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "fairfeeder/common.hpp"

namespace fairfeeder::nn {

// Row-major dense matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> d;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), d(r * c, 0.0) {}

  // Reshape without touching existing contents; every writer below fills the
  // buffer it claims.
  void resize(std::size_t r, std::size_t c) {
    rows = r;
    cols = c;
    if (d.size() != r * c) d.resize(r * c, 0.0);
  }

  double* row(std::size_t r) { return d.data() + r * cols; }
  const double* row(std::size_t r) const { return d.data() + r * cols; }
  double& at(std::size_t r, std::size_t c) { return d[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return d[r * cols + c]; }
};

namespace detail {

#if defined(__AVX512F__)
constexpr std::size_t kLanes = 8;
#elif defined(__AVX2__)
constexpr std::size_t kLanes = 4;
#else
constexpr std::size_t kLanes = 2;
#endif
typedef double vdouble __attribute__((vector_size(kLanes * 8)));
typedef long long vint64 __attribute__((vector_size(kLanes * 8)));

// Vector lane version of fast_tanh; same polynomial, same results.
inline vdouble vtanh(vdouble x) {
  const vdouble zero = x - x;
  const vdouble a0 = x < zero ? -x : x;
  vdouble y = 2.0 * a0;
  y = y > 40.0 ? vdouble{} + 40.0 : y;
  const vdouble big = vdouble{} + 6755399441055744.0;  // 1.5 * 2^52
  const vdouble shifted = y * 1.4426950408889634 + big;
  const vdouble n = shifted - big;
  vdouble r = y - n * 0.693147180559945286;
  r -= n * 2.3190468138462995584e-17;
  vdouble p = vdouble{} + 1.0 / 39916800.0;
  p = p * r + 1.0 / 3628800.0;
  p = p * r + 1.0 / 362880.0;
  p = p * r + 1.0 / 40320.0;
  p = p * r + 1.0 / 5040.0;
  p = p * r + 1.0 / 720.0;
  p = p * r + 1.0 / 120.0;
  p = p * r + 1.0 / 24.0;
  p = p * r + 1.0 / 6.0;
  p = p * r + 0.5;
  p = p * r + 1.0;
  p = p * r + 1.0;
  // (n + 1023) << 52 builds 2^n in the exponent field; |n| <= 58 here
  const vint64 bits = ((vint64)shifted + 1023) << 52;
  const vdouble e = p * (vdouble)bits;
  const vdouble t = 1.0 - 2.0 / (e + 1.0);
  return x < zero ? -t : t;
}

inline void tanh_array(const double* __restrict src, double* __restrict dst,
                       std::size_t count) {
  std::size_t k = 0;
  for (; k + kLanes <= count; k += kLanes) {
    vdouble x;
    __builtin_memcpy(&x, src + k, sizeof x);
    const vdouble t = vtanh(x);
    __builtin_memcpy(dst + k, &t, sizeof t);
  }
  for (; k < count; ++k) dst[k] = fast_tanh(src[k]);
}

inline vdouble vload(const double* p) {
  vdouble v;
  __builtin_memcpy(&v, p, sizeof v);
  return v;
}

inline void vstore(double* p, vdouble v) { __builtin_memcpy(p, &v, sizeof v); }

inline vdouble vsplat(double a) { return vdouble{} + a; }

// plain accumulation kernel over a column slice [n0, n1); assigns on the
// first depth index when `accumulate` is false
inline void gemm_rows_simple(const Matrix& x, const Matrix& w, Matrix& out,
                             std::size_t row_begin, std::size_t row_end,
                             std::size_t n0, std::size_t n1, bool accumulate) {
  for (std::size_t b = row_begin; b < row_end; ++b) {
    const double* __restrict xrow = x.row(b);
    double* __restrict orow = out.row(b);
    if (!accumulate) {
      const double a = xrow[0];
      const double* __restrict wrow = w.row(0);
      for (std::size_t n = n0; n < n1; ++n) orow[n] = a * wrow[n];
    }
    for (std::size_t m = accumulate ? 0 : 1; m < x.cols; ++m) {
      const double a = xrow[m];
      const double* __restrict wrow = w.row(m);
      for (std::size_t n = n0; n < n1; ++n) orow[n] += a * wrow[n];
    }
  }
}

// out(BxN) = x(BxM) * w(MxN). Register-blocked 4 x (2*kLanes) tiles keep the
// accumulators in registers across the depth loop; `out` needs no pre-zeroing.
inline void gemm_nn(const Matrix& x, const Matrix& w, Matrix& out) {
  out.resize(x.rows, w.cols);
  const std::size_t rows = x.rows, depth = x.cols, cols = w.cols;
  constexpr std::size_t kNB = 2 * kLanes;
  const std::size_t cols_main = cols - cols % kNB;
  std::size_t b = 0;
  for (; b + 4 <= rows; b += 4) {
    const double* __restrict x0 = x.row(b);
    const double* __restrict x1 = x.row(b + 1);
    const double* __restrict x2 = x.row(b + 2);
    const double* __restrict x3 = x.row(b + 3);
    for (std::size_t n = 0; n < cols_main; n += kNB) {
      vdouble c00{}, c01{}, c10{}, c11{}, c20{}, c21{}, c30{}, c31{};
      const double* wp = w.d.data() + n;
      for (std::size_t k = 0; k < depth; ++k, wp += cols) {
        const vdouble w0 = vload(wp);
        const vdouble w1 = vload(wp + kLanes);
        vdouble a;
        a = vsplat(x0[k]); c00 += a * w0; c01 += a * w1;
        a = vsplat(x1[k]); c10 += a * w0; c11 += a * w1;
        a = vsplat(x2[k]); c20 += a * w0; c21 += a * w1;
        a = vsplat(x3[k]); c30 += a * w0; c31 += a * w1;
      }
      vstore(out.row(b) + n, c00); vstore(out.row(b) + n + kLanes, c01);
      vstore(out.row(b + 1) + n, c10); vstore(out.row(b + 1) + n + kLanes, c11);
      vstore(out.row(b + 2) + n, c20); vstore(out.row(b + 2) + n + kLanes, c21);
      vstore(out.row(b + 3) + n, c30); vstore(out.row(b + 3) + n + kLanes, c31);
    }
    if (cols_main < cols)
      gemm_rows_simple(x, w, out, b, b + 4, cols_main, cols, false);
  }
  if (b < rows) gemm_rows_simple(x, w, out, b, rows, 0, cols, false);
}

inline void transpose(const Matrix& in, Matrix& out) {
  out.resize(in.cols, in.rows);
  for (std::size_t r = 0; r < in.rows; ++r) {
    const double* row = in.row(r);
    for (std::size_t c = 0; c < in.cols; ++c) out.d[c * in.rows + r] = row[c];
  }
}

// dw(MxN) += x(BxM)^T * dy(BxN), same tiling; column m of x is read with
// stride M.
inline void gemm_tn_accum(const Matrix& x, const Matrix& dy, Matrix& dw) {
  const std::size_t rows = x.cols, depth = x.rows, cols = dy.cols;
  constexpr std::size_t kNB = 2 * kLanes;
  const std::size_t cols_main = cols - cols % kNB;
  std::size_t m = 0;
  for (; m + 4 <= rows; m += 4) {
    for (std::size_t n = 0; n < cols_main; n += kNB) {
      vdouble c00 = vload(dw.row(m) + n), c01 = vload(dw.row(m) + n + kLanes);
      vdouble c10 = vload(dw.row(m + 1) + n), c11 = vload(dw.row(m + 1) + n + kLanes);
      vdouble c20 = vload(dw.row(m + 2) + n), c21 = vload(dw.row(m + 2) + n + kLanes);
      vdouble c30 = vload(dw.row(m + 3) + n), c31 = vload(dw.row(m + 3) + n + kLanes);
      const double* yp = dy.d.data() + n;
      const double* xp = x.d.data() + m;
      for (std::size_t k = 0; k < depth; ++k, yp += cols, xp += rows) {
        const vdouble y0 = vload(yp);
        const vdouble y1 = vload(yp + kLanes);
        vdouble a;
        a = vsplat(xp[0]); c00 += a * y0; c01 += a * y1;
        a = vsplat(xp[1]); c10 += a * y0; c11 += a * y1;
        a = vsplat(xp[2]); c20 += a * y0; c21 += a * y1;
        a = vsplat(xp[3]); c30 += a * y0; c31 += a * y1;
      }
      vstore(dw.row(m) + n, c00); vstore(dw.row(m) + n + kLanes, c01);
      vstore(dw.row(m + 1) + n, c10); vstore(dw.row(m + 1) + n + kLanes, c11);
      vstore(dw.row(m + 2) + n, c20); vstore(dw.row(m + 2) + n + kLanes, c21);
      vstore(dw.row(m + 3) + n, c30); vstore(dw.row(m + 3) + n + kLanes, c31);
    }
    for (std::size_t k = 0; k < depth; ++k) {
      const double* __restrict xrow = x.row(k);
      const double* __restrict yrow = dy.row(k);
      for (std::size_t r = m; r < m + 4; ++r) {
        const double a = xrow[r];
        double* __restrict wrow = dw.row(r);
        for (std::size_t n = cols_main; n < cols; ++n) wrow[n] += a * yrow[n];
      }
    }
  }
  for (; m < rows; ++m) {
    double* __restrict wrow = dw.row(m);
    for (std::size_t k = 0; k < depth; ++k) {
      const double a = x.row(k)[m];
      const double* __restrict yrow = dy.row(k);
      for (std::size_t n = 0; n < cols; ++n) wrow[n] += a * yrow[n];
    }
  }
}

}  // namespace detail

struct ParamRef {
  std::vector<double>* value;
  std::vector<double>* grad;
};

// The forward input is held by pointer: callers must keep it alive and
// unchanged until the matching backward (Mlp guarantees this internally).
struct Linear {
  Matrix w;   // [in x out]
  std::vector<double> b;
  Matrix gw;
  std::vector<double> gb;
  const Matrix* input = nullptr;
  Matrix wt;  // transpose scratch for the input-gradient pass

  Linear() = default;
  Linear(std::size_t in, std::size_t out, RandomStream& rng) {
    w.resize(in, out);
    gw.resize(in, out);
    b.assign(out, 0.0);
    gb.assign(out, 0.0);
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    for (auto& value : w.d) value = rng.uniform(-limit, limit);
  }

  void forward(const Matrix& x, Matrix& out) {
    input = &x;
    detail::gemm_nn(x, w, out);
    for (std::size_t r = 0; r < out.rows; ++r) {
      double* row = out.row(r);
      for (std::size_t c = 0; c < out.cols; ++c) row[c] += b[c];
    }
  }

  void backward(const Matrix& dy, Matrix& dx) {
    detail::gemm_tn_accum(*input, dy, gw);
    for (std::size_t r = 0; r < dy.rows; ++r) {
      const double* row = dy.row(r);
      for (std::size_t c = 0; c < dy.cols; ++c) gb[c] += row[c];
    }
    backward_input_only(dy, dx);
  }

  // dx = dy * w^T, done through an explicit transpose so the kernel stays an
  // accumulation loop the compiler vectorizes
  void backward_input_only(const Matrix& dy, Matrix& dx) {
    detail::transpose(w, wt);
    detail::gemm_nn(dy, wt, dx);
  }

  void zero_grad() {
    std::fill(gw.d.begin(), gw.d.end(), 0.0);
    std::fill(gb.begin(), gb.end(), 0.0);
  }
};

// Fully connected network with tanh hidden activations and a linear head.
class Mlp {
 public:
  Mlp() = default;
  Mlp(std::size_t input_dim, std::span<const std::size_t> hidden,
      std::size_t output_dim, RandomStream& rng) {
    std::size_t in = input_dim;
    for (std::size_t width : hidden) {
      layers_.emplace_back(in, width, rng);
      in = width;
    }
    layers_.emplace_back(in, output_dim, rng);
    pre_.resize(layers_.size());
    act_.resize(layers_.size());
    dbuf_.resize(layers_.size() + 1);
  }

  std::size_t input_dim() const { return layers_.front().w.rows; }
  std::size_t output_dim() const { return layers_.back().w.cols; }

  const Matrix& forward(const Matrix& x) {
    const Matrix* current = &x;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      layers_[i].forward(*current, pre_[i]);
      if (i + 1 < layers_.size()) {
        act_[i].resize(pre_[i].rows, pre_[i].cols);
        detail::tanh_array(pre_[i].d.data(), act_[i].d.data(), pre_[i].d.size());
        current = &act_[i];
      } else {
        current = &pre_[i];
      }
    }
    return pre_.back();
  }

  // Accumulates parameter gradients; returns d(loss)/d(input).
  const Matrix& backward(const Matrix& dout) { return backward_impl(dout, true); }

  // Input gradient only; parameter gradients stay untouched.
  const Matrix& backward_input_only(const Matrix& dout) {
    return backward_impl(dout, false);
  }

  void zero_grad() {
    for (auto& layer : layers_) layer.zero_grad();
  }

  std::vector<ParamRef> params() {
    std::vector<ParamRef> refs;
    refs.reserve(layers_.size() * 2);
    for (auto& layer : layers_) {
      refs.push_back({&layer.w.d, &layer.gw.d});
      refs.push_back({&layer.b, &layer.gb});
    }
    return refs;
  }

  std::vector<Linear>& layers() { return layers_; }
  const std::vector<Linear>& layers() const { return layers_; }

 private:
  const Matrix& backward_impl(const Matrix& dout, bool with_params) {
    dbuf_.back() = dout;
    for (std::size_t i = layers_.size(); i-- > 0;) {
      Matrix& dy = dbuf_[i + 1];
      if (i + 1 < layers_.size()) {
        // gradient through tanh: dy *= (1 - act^2)
        const double* __restrict a = act_[i].d.data();
        double* __restrict g = dy.d.data();
        for (std::size_t k = 0; k < dy.d.size(); ++k) g[k] *= 1.0 - a[k] * a[k];
      }
      if (with_params) layers_[i].backward(dy, dbuf_[i]);
      else layers_[i].backward_input_only(dy, dbuf_[i]);
    }
    return dbuf_.front();
  }

  std::vector<Linear> layers_;
  std::vector<Matrix> pre_;   // pre-activation outputs per layer
  std::vector<Matrix> act_;   // tanh outputs per hidden layer
  std::vector<Matrix> dbuf_;  // backward scratch
};

class Adam {
 public:
  explicit Adam(double learning_rate) : lr_(learning_rate) {}

  void step(std::span<ParamRef> params) {
    if (m_.empty()) {
      for (const auto& p : params) {
        m_.emplace_back(p.value->size(), 0.0);
        v_.emplace_back(p.value->size(), 0.0);
      }
    }
    require(m_.size() == params.size(), "adam: parameter set changed");
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& value = *params[i].value;
      auto& grad = *params[i].grad;
      require(value.size() == m_[i].size(), "adam: parameter shape changed");
      for (std::size_t k = 0; k < value.size(); ++k) {
        m_[i][k] = beta1_ * m_[i][k] + (1.0 - beta1_) * grad[k];
        v_[i][k] = beta2_ * v_[i][k] + (1.0 - beta2_) * grad[k] * grad[k];
        const double mhat = m_[i][k] / bc1;
        const double vhat = v_[i][k] / bc2;
        value[k] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
      }
    }
  }

 private:
  double lr_;
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double eps_ = 1e-8;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

// target <- (1 - tau) * target + tau * source, elementwise.
inline void soft_target_update(Mlp& source, Mlp& target, double tau) {
  auto src = source.params();
  auto dst = target.params();
  require(src.size() == dst.size(), "soft_target_update: layer count mismatch");
  for (std::size_t i = 0; i < src.size(); ++i) {
    require(src[i].value->size() == dst[i].value->size(),
            "soft_target_update: shape mismatch");
    for (std::size_t k = 0; k < src[i].value->size(); ++k)
      (*dst[i].value)[k] =
          (1.0 - tau) * (*dst[i].value)[k] + tau * (*src[i].value)[k];
  }
}

}  // namespace fairfeeder::nn
