// Reverse-mode automatic differentiation on a flat tape.
//
// Design notes:
//  * Templated on the scalar type: float for training speed, double for
//    finite-difference gradient verification in the tests.
//  * Nodes own their value tensors; gradients are allocated lazily during
//    backward(). Backward closures capture node ids only (the node vector
//    may reallocate while the graph is being built).
//  * With grad recording disabled the same op set doubles as the inference
//    path, so the model forward passes are written exactly once.
//  * Matrix products go through Eigen; everything else is explicit loops,
//    which keeps numerical behaviour deterministic and easy to audit.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <vector>

#include "aif/core/rng.hpp"
#include "aif/core/tensor.hpp"

namespace aif {

struct ConvSpec {
  int N = 0, H = 0, W = 0, C = 0;  // input geometry (NHWC)
  int KH = 2, KW = 2, S = 2, P = 0;
  int OC = 0;
  int OH() const { return (H + 2 * P - KH) / S + 1; }
  int OW() const { return (W + 2 * P - KW) / S + 1; }
};

// Transposed convolution: input lives on the (h,w) grid, output on (H,W)
// with H = (h-1)*S - 2*P + KH.
struct ConvTSpec {
  int N = 0, h = 0, w = 0, IC = 0;
  int KH = 2, KW = 2, S = 2, P = 0;
  int OC = 0;
  int OH() const { return (h - 1) * S - 2 * P + KH; }
  int OW() const { return (w - 1) * S - 2 * P + KW; }
};

namespace detail {

template <class T>
using MatMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <class T>
using CMatMap = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

// Patch extraction for convolution as GEMM: out is [N*OH*OW, KH*KW*C].
template <class T>
void im2col(const T* x, const ConvSpec& cs, T* out) {
  const int OH = cs.OH(), OW = cs.OW(), K = cs.KH * cs.KW * cs.C;
  int64_t r = 0;
  for (int n = 0; n < cs.N; ++n) {
    const T* xn = x + static_cast<int64_t>(n) * cs.H * cs.W * cs.C;
    for (int oy = 0; oy < OH; ++oy) {
      for (int ox = 0; ox < OW; ++ox, ++r) {
        T* dst = out + r * K;
        for (int ky = 0; ky < cs.KH; ++ky) {
          const int y = oy * cs.S - cs.P + ky;
          for (int kx = 0; kx < cs.KW; ++kx) {
            const int xx = ox * cs.S - cs.P + kx;
            T* d = dst + (ky * cs.KW + kx) * cs.C;
            if (y < 0 || y >= cs.H || xx < 0 || xx >= cs.W) {
              for (int c = 0; c < cs.C; ++c) d[c] = T(0);
            } else {
              const T* s = xn + (static_cast<int64_t>(y) * cs.W + xx) * cs.C;
              for (int c = 0; c < cs.C; ++c) d[c] = s[c];
            }
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-add patches back onto the image grid.
template <class T>
void col2im(const T* cols, const ConvSpec& cs, T* x) {
  const int OH = cs.OH(), OW = cs.OW(), K = cs.KH * cs.KW * cs.C;
  int64_t r = 0;
  for (int n = 0; n < cs.N; ++n) {
    T* xn = x + static_cast<int64_t>(n) * cs.H * cs.W * cs.C;
    for (int oy = 0; oy < OH; ++oy) {
      for (int ox = 0; ox < OW; ++ox, ++r) {
        const T* src = cols + r * K;
        for (int ky = 0; ky < cs.KH; ++ky) {
          const int y = oy * cs.S - cs.P + ky;
          if (y < 0 || y >= cs.H) continue;
          for (int kx = 0; kx < cs.KW; ++kx) {
            const int xx = ox * cs.S - cs.P + kx;
            if (xx < 0 || xx >= cs.W) continue;
            const T* s = src + (ky * cs.KW + kx) * cs.C;
            T* d = xn + (static_cast<int64_t>(y) * cs.W + xx) * cs.C;
            for (int c = 0; c < cs.C; ++c) d[c] += s[c];
          }
        }
      }
    }
  }
}

// The matching conv view of a transposed convolution (big grid -> small grid).
inline ConvSpec as_conv(const ConvTSpec& ts) {
  ConvSpec cs;
  cs.N = ts.N;
  cs.H = ts.OH();
  cs.W = ts.OW();
  cs.C = ts.OC;
  cs.KH = ts.KH;
  cs.KW = ts.KW;
  cs.S = ts.S;
  cs.P = ts.P;
  cs.OC = ts.IC;
  return cs;
}

template <class T>
void log_softmax_row(const T* logits, double* out, int n) {
  double mx = -1e300;
  for (int i = 0; i < n; ++i) mx = std::max(mx, static_cast<double>(logits[i]));
  double z = 0.0;
  for (int i = 0; i < n; ++i) z += std::exp(static_cast<double>(logits[i]) - mx);
  const double lz = std::log(z) + mx;
  for (int i = 0; i < n; ++i) out[i] = static_cast<double>(logits[i]) - lz;
}

}  // namespace detail

template <class T>
class Tape {
 public:
  using Id = int32_t;

  bool grad_enabled = true;
  // When set, st_cat_sample* outputs the softmax probabilities instead of a
  // drawn one-hot (no RNG consumed). The backward rule is unchanged, so in
  // this mode forward and backward are exactly consistent — used by
  // finite-difference gradient checks of losses that contain samplers.
  bool st_relaxed = false;
  // When set, kl_cat_balanced backpropagates the true gradient of KL(q||p)
  // instead of the balanced (w-weighted, stop-gradient) one. Together with
  // st_relaxed this makes a whole loss graph exactly differentiable, which is
  // what finite-difference checks require; training leaves both flags off.
  bool kl_exact = false;

  void clear() { nodes_.clear(); }
  size_t num_nodes() const { return nodes_.size(); }

  const Tensor<T>& val(Id i) const { return nodes_[static_cast<size_t>(i)].val; }
  Tensor<T>& grad(Id i) { return nodes_[static_cast<size_t>(i)].grad; }
  bool requires_grad(Id i) const { return nodes_[static_cast<size_t>(i)].rg; }

  Id input(Tensor<T> v, bool needs_grad = false) { return push(std::move(v), needs_grad && grad_enabled); }
  Id constant(Tensor<T> v) { return push(std::move(v), false); }
  Id scalar(T v) { return constant(Tensor<T>({1}, {v})); }

  // ---- elementwise -------------------------------------------------------

  Id add(Id a, Id b) { return binary(a, b, [](T x, T y) { return x + y; }, T(1), T(1)); }
  Id sub(Id a, Id b) { return binary(a, b, [](T x, T y) { return x - y; }, T(1), T(-1)); }

  Id mul(Id a, Id b) {
    const Tensor<T>&A = val(a), &B = val(b);
    AIF_CHECK(A.same_shape(B), "mul shape mismatch");
    Tensor<T> out(A.shape);
    for (int64_t i = 0; i < A.size(); ++i) out[i] = A[i] * B[i];
    Id o = push(std::move(out), rg2(a, b));
    record(o, [this, a, b, o]() {
      const Tensor<T>& g = gradc(o);
      if (requires_grad(a)) {
        Tensor<T>& ga = ensure(a);
        const Tensor<T>& B = val(b);
        for (int64_t i = 0; i < g.size(); ++i) ga[i] += g[i] * B[i];
      }
      if (requires_grad(b)) {
        Tensor<T>& gb = ensure(b);
        const Tensor<T>& A = val(a);
        for (int64_t i = 0; i < g.size(); ++i) gb[i] += g[i] * A[i];
      }
    });
    return o;
  }

  // alpha*a + beta*b  (MTRNN leaky blend and friends)
  Id scale_add(Id a, T alpha, Id b, T beta) {
    const Tensor<T>&A = val(a), &B = val(b);
    AIF_CHECK(A.same_shape(B), "scale_add shape mismatch");
    Tensor<T> out(A.shape);
    for (int64_t i = 0; i < A.size(); ++i) out[i] = alpha * A[i] + beta * B[i];
    Id o = push(std::move(out), rg2(a, b));
    record(o, [this, a, b, o, alpha, beta]() {
      const Tensor<T>& g = gradc(o);
      if (requires_grad(a)) {
        Tensor<T>& ga = ensure(a);
        for (int64_t i = 0; i < g.size(); ++i) ga[i] += alpha * g[i];
      }
      if (requires_grad(b)) {
        Tensor<T>& gb = ensure(b);
        for (int64_t i = 0; i < g.size(); ++i) gb[i] += beta * g[i];
      }
    });
    return o;
  }

  Id scale(Id a, T alpha) {
    const Tensor<T>& A = val(a);
    Tensor<T> out(A.shape);
    for (int64_t i = 0; i < A.size(); ++i) out[i] = alpha * A[i];
    Id o = push(std::move(out), requires_grad(a));
    record(o, [this, a, o, alpha]() {
      if (!requires_grad(a)) return;
      const Tensor<T>& g = gradc(o);
      Tensor<T>& ga = ensure(a);
      for (int64_t i = 0; i < g.size(); ++i) ga[i] += alpha * g[i];
    });
    return o;
  }

  Id tanh_(Id a) {
    const Tensor<T>& A = val(a);
    Tensor<T> out(A.shape);
    for (int64_t i = 0; i < A.size(); ++i) out[i] = std::tanh(A[i]);
    Id o = push(std::move(out), requires_grad(a));
    record(o, [this, a, o]() {
      if (!requires_grad(a)) return;
      const Tensor<T>&g = gradc(o), &y = val(o);
      Tensor<T>& ga = ensure(a);
      for (int64_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (T(1) - y[i] * y[i]);
    });
    return o;
  }

  Id sigmoid_(Id a) {
    const Tensor<T>& A = val(a);
    Tensor<T> out(A.shape);
    for (int64_t i = 0; i < A.size(); ++i) out[i] = T(1) / (T(1) + std::exp(-A[i]));
    Id o = push(std::move(out), requires_grad(a));
    record(o, [this, a, o]() {
      if (!requires_grad(a)) return;
      const Tensor<T>&g = gradc(o), &y = val(o);
      Tensor<T>& ga = ensure(a);
      for (int64_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i] * (T(1) - y[i]);
    });
    return o;
  }

  Id elu(Id a) {
    const Tensor<T>& A = val(a);
    Tensor<T> out(A.shape);
    for (int64_t i = 0; i < A.size(); ++i) out[i] = A[i] > T(0) ? A[i] : std::expm1(A[i]);
    Id o = push(std::move(out), requires_grad(a));
    record(o, [this, a, o]() {
      if (!requires_grad(a)) return;
      const Tensor<T>&g = gradc(o), &y = val(o);
      Tensor<T>& ga = ensure(a);
      for (int64_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (y[i] > T(0) ? T(1) : y[i] + T(1));
    });
    return o;
  }

  // Gradient passes through where the input lies inside [lo, hi].
  Id clamp(Id a, T lo, T hi) {
    const Tensor<T>& A = val(a);
    Tensor<T> out(A.shape);
    for (int64_t i = 0; i < A.size(); ++i) out[i] = std::min(hi, std::max(lo, A[i]));
    Id o = push(std::move(out), requires_grad(a));
    record(o, [this, a, o, lo, hi]() {
      if (!requires_grad(a)) return;
      const Tensor<T>&g = gradc(o), &x = val(a);
      Tensor<T>& ga = ensure(a);
      for (int64_t i = 0; i < g.size(); ++i)
        if (x[i] >= lo && x[i] <= hi) ga[i] += g[i];
    });
    return o;
  }

  // ---- linear algebra ----------------------------------------------------

  Id matmul(Id a, Id w) {
    const Tensor<T>&A = val(a), &W = val(w);
    const int m = A.rows(), k = A.cols(), k2 = W.rows(), n = W.cols();
    AIF_CHECK(k == k2, "matmul inner dim mismatch " + shape_str(A.shape) + " x " + shape_str(W.shape));
    Tensor<T> out({m, n});
    detail::MatMap<T>(out.ptr(), m, n).noalias() =
        detail::CMatMap<T>(A.ptr(), m, k) * detail::CMatMap<T>(W.ptr(), k, n);
    Id o = push(std::move(out), rg2(a, w));
    record(o, [this, a, w, o]() {
      const Tensor<T>& g = gradc(o);
      const Tensor<T>&A = val(a), &W = val(w);
      const int m = A.rows(), k = A.cols(), n = W.cols();
      detail::CMatMap<T> G(g.ptr(), m, n), Am(A.ptr(), m, k), Wm(W.ptr(), k, n);
      if (requires_grad(a)) detail::MatMap<T>(ensure(a).ptr(), m, k).noalias() += G * Wm.transpose();
      if (requires_grad(w)) detail::MatMap<T>(ensure(w).ptr(), k, n).noalias() += Am.transpose() * G;
    });
    return o;
  }

  // x[m,k] * w[k,n] + row-broadcast bias b[n]
  Id linear(Id x, Id w, Id b) {
    Id mm = matmul(x, w);
    return add_rowvec(mm, b);
  }

  Id add_rowvec(Id a, Id b) {
    const Tensor<T>&A = val(a), &B = val(b);
    const int m = A.rows(), n = A.cols();
    AIF_CHECK(B.size() == n, "add_rowvec width mismatch");
    Tensor<T> out(A.shape);
    for (int r = 0; r < m; ++r)
      for (int c = 0; c < n; ++c) out[static_cast<int64_t>(r) * n + c] = A[static_cast<int64_t>(r) * n + c] + B[c];
    Id o = push(std::move(out), rg2(a, b));
    record(o, [this, a, b, o]() {
      const Tensor<T>& g = gradc(o);
      const int m = g.rows(), n = g.cols();
      if (requires_grad(a)) {
        Tensor<T>& ga = ensure(a);
        for (int64_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (requires_grad(b)) {
        Tensor<T>& gb = ensure(b);
        for (int r = 0; r < m; ++r)
          for (int c = 0; c < n; ++c) gb[c] += g[static_cast<int64_t>(r) * n + c];
      }
    });
    return o;
  }

  // ---- structure ---------------------------------------------------------

  Id reshape(Id a, Shape s) {
    const Tensor<T>& A = val(a);
    AIF_CHECK(Tensor<T>::count(s) == A.size(), "reshape element count mismatch");
    Tensor<T> out(s, A.data);
    Id o = push(std::move(out), requires_grad(a));
    record(o, [this, a, o]() {
      if (!requires_grad(a)) return;
      const Tensor<T>& g = gradc(o);
      Tensor<T>& ga = ensure(a);
      for (int64_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
    return o;
  }

  Id concat_cols(const std::vector<Id>& parts) {
    AIF_CHECK(!parts.empty(), "concat_cols: empty");
    const int m = val(parts[0]).rows();
    int n = 0;
    for (Id p : parts) {
      AIF_CHECK(val(p).rows() == m, "concat_cols row mismatch");
      n += val(p).cols();
    }
    Tensor<T> out({m, n});
    int off = 0;
    for (Id p : parts) {
      const Tensor<T>& P = val(p);
      const int pc = P.cols();
      for (int r = 0; r < m; ++r)
        std::copy_n(P.ptr() + static_cast<int64_t>(r) * pc, pc, out.ptr() + static_cast<int64_t>(r) * n + off);
      off += pc;
    }
    bool rg = false;
    for (Id p : parts) rg = rg || requires_grad(p);
    Id o = push(std::move(out), rg);
    record(o, [this, parts, o]() {
      const Tensor<T>& g = gradc(o);
      const int m = g.rows(), n = g.cols();
      int off = 0;
      for (Id p : parts) {
        const int pc = val(p).cols();
        if (requires_grad(p)) {
          Tensor<T>& gp = ensure(p);
          for (int r = 0; r < m; ++r)
            for (int c = 0; c < pc; ++c)
              gp[static_cast<int64_t>(r) * pc + c] += g[static_cast<int64_t>(r) * n + off + c];
        }
        off += pc;
      }
    });
    return o;
  }

  Id concat_rows(const std::vector<Id>& parts) {
    AIF_CHECK(!parts.empty(), "concat_rows: empty");
    const int n = val(parts[0]).cols();
    int m = 0;
    for (Id p : parts) {
      AIF_CHECK(val(p).cols() == n, "concat_rows col mismatch");
      m += val(p).rows();
    }
    Tensor<T> out({m, n});
    int64_t off = 0;
    for (Id p : parts) {
      const Tensor<T>& P = val(p);
      std::copy_n(P.ptr(), P.size(), out.ptr() + off);
      off += P.size();
    }
    bool rg = false;
    for (Id p : parts) rg = rg || requires_grad(p);
    Id o = push(std::move(out), rg);
    record(o, [this, parts, o]() {
      const Tensor<T>& g = gradc(o);
      int64_t off = 0;
      for (Id p : parts) {
        const int64_t sz = val(p).size();
        if (requires_grad(p)) {
          Tensor<T>& gp = ensure(p);
          for (int64_t i = 0; i < sz; ++i) gp[i] += g[off + i];
        }
        off += sz;
      }
    });
    return o;
  }

  Id slice_rows(Id a, int r0, int r1) {
    const Tensor<T>& A = val(a);
    const int n = A.cols();
    AIF_CHECK(0 <= r0 && r0 < r1 && r1 <= A.rows(), "slice_rows out of range");
    Tensor<T> out({r1 - r0, n});
    std::copy_n(A.ptr() + static_cast<int64_t>(r0) * n, static_cast<int64_t>(r1 - r0) * n, out.ptr());
    Id o = push(std::move(out), requires_grad(a));
    record(o, [this, a, o, r0]() {
      if (!requires_grad(a)) return;
      const Tensor<T>& g = gradc(o);
      const int n = g.cols();
      Tensor<T>& ga = ensure(a);
      for (int64_t i = 0; i < g.size(); ++i) ga[static_cast<int64_t>(r0) * n + i] += g[i];
    });
    return o;
  }

  // ---- convolution (NHWC, GEMM via patch extraction) ---------------------

  // w: [KH*KW*C, OC], b: [OC]
  Id conv2d(Id x, Id w, Id b, ConvSpec cs) {
    const Tensor<T>& X = val(x);
    AIF_CHECK(X.size() == static_cast<int64_t>(cs.N) * cs.H * cs.W * cs.C, "conv2d input size mismatch");
    AIF_CHECK(val(w).rows() == cs.KH * cs.KW * cs.C && val(w).cols() == cs.OC, "conv2d weight shape");
    const int OH = cs.OH(), OW = cs.OW();
    const int64_t rows = static_cast<int64_t>(cs.N) * OH * OW;
    const int K = cs.KH * cs.KW * cs.C;
    std::vector<T> cols(rows * K);
    detail::im2col(X.ptr(), cs, cols.data());
    Tensor<T> out({cs.N, OH, OW, cs.OC});
    detail::MatMap<T>(out.ptr(), rows, cs.OC).noalias() =
        detail::CMatMap<T>(cols.data(), rows, K) * detail::CMatMap<T>(val(w).ptr(), K, cs.OC);
    const Tensor<T>& B = val(b);
    for (int64_t r = 0; r < rows; ++r)
      for (int c = 0; c < cs.OC; ++c) out[r * cs.OC + c] += B[c];
    bool rg = requires_grad(x) || requires_grad(w) || requires_grad(b);
    Id o = push(std::move(out), rg);
    record(o, [this, x, w, b, o, cs]() {
      const Tensor<T>& g = gradc(o);
      const int OH = cs.OH(), OW = cs.OW();
      const int64_t rows = static_cast<int64_t>(cs.N) * OH * OW;
      const int K = cs.KH * cs.KW * cs.C;
      detail::CMatMap<T> G(g.ptr(), rows, cs.OC);
      if (requires_grad(b)) {
        Tensor<T>& gb = ensure(b);
        for (int64_t r = 0; r < rows; ++r)
          for (int c = 0; c < cs.OC; ++c) gb[c] += g[r * cs.OC + c];
      }
      if (requires_grad(w) || requires_grad(x)) {
        std::vector<T> cols(rows * K);
        detail::im2col(val(x).ptr(), cs, cols.data());
        if (requires_grad(w))
          detail::MatMap<T>(ensure(w).ptr(), K, cs.OC).noalias() +=
              detail::CMatMap<T>(cols.data(), rows, K).transpose() * G;
        if (requires_grad(x)) {
          std::vector<T> dcols(rows * K);
          detail::MatMap<T>(dcols.data(), rows, K).noalias() =
              G * detail::CMatMap<T>(val(w).ptr(), K, cs.OC).transpose();
          detail::col2im(dcols.data(), cs, ensure(x).ptr());
        }
      }
    });
    return o;
  }

  // w: [KH*KW*OC, IC] (the weight layout of the adjoint convolution), b: [OC]
  Id conv2d_transpose(Id x, Id w, Id b, ConvTSpec ts) {
    const Tensor<T>& X = val(x);
    AIF_CHECK(X.size() == static_cast<int64_t>(ts.N) * ts.h * ts.w * ts.IC, "convT input size mismatch");
    const int K = ts.KH * ts.KW * ts.OC;
    AIF_CHECK(val(w).rows() == K && val(w).cols() == ts.IC, "convT weight shape");
    const int64_t rows = static_cast<int64_t>(ts.N) * ts.h * ts.w;
    std::vector<T> cols(rows * K);
    detail::MatMap<T>(cols.data(), rows, K).noalias() =
        detail::CMatMap<T>(X.ptr(), rows, ts.IC) * detail::CMatMap<T>(val(w).ptr(), K, ts.IC).transpose();
    Tensor<T> out({ts.N, ts.OH(), ts.OW(), ts.OC});
    // scatter onto the big grid (the adjoint convolution's input geometry)
    detail::col2im(cols.data(), detail::as_conv(ts), out.ptr());
    const Tensor<T>& B = val(b);
    const int64_t orows = out.size() / ts.OC;
    for (int64_t r = 0; r < orows; ++r)
      for (int c = 0; c < ts.OC; ++c) out[r * ts.OC + c] += B[c];
    bool rg = requires_grad(x) || requires_grad(w) || requires_grad(b);
    Id o = push(std::move(out), rg);
    record(o, [this, x, w, b, o, ts]() {
      const Tensor<T>& g = gradc(o);
      const ConvSpec back = detail::as_conv(ts);
      const int K = back.KH * back.KW * back.C;
      const int64_t rows = static_cast<int64_t>(ts.N) * ts.h * ts.w;
      if (requires_grad(b)) {
        Tensor<T>& gb = ensure(b);
        const int64_t orows = g.size() / ts.OC;
        for (int64_t r = 0; r < orows; ++r)
          for (int c = 0; c < ts.OC; ++c) gb[c] += g[r * ts.OC + c];
      }
      std::vector<T> gcols(rows * K);
      detail::im2col(g.ptr(), back, gcols.data());
      detail::CMatMap<T> Gc(gcols.data(), rows, K);
      if (requires_grad(x))
        detail::MatMap<T>(ensure(x).ptr(), rows, ts.IC).noalias() +=
            Gc * detail::CMatMap<T>(val(w).ptr(), K, ts.IC);
      if (requires_grad(w))
        detail::MatMap<T>(ensure(w).ptr(), K, ts.IC).noalias() +=
            Gc.transpose() * detail::CMatMap<T>(val(x).ptr(), rows, ts.IC);
    });
    return o;
  }

  // ---- reductions and losses --------------------------------------------

  Id sum_all(Id a) {
    const Tensor<T>& A = val(a);
    T s = 0;
    for (int64_t i = 0; i < A.size(); ++i) s += A[i];
    Id o = push(Tensor<T>({1}, {s}), requires_grad(a));
    record(o, [this, a, o]() {
      if (!requires_grad(a)) return;
      const T g = gradc(o)[0];
      Tensor<T>& ga = ensure(a);
      for (int64_t i = 0; i < ga.size(); ++i) ga[i] += g;
    });
    return o;
  }

  Id add_scalars(const std::vector<Id>& xs) {
    AIF_CHECK(!xs.empty(), "add_scalars: empty");
    T s = 0;
    bool rg = false;
    for (Id x : xs) {
      AIF_CHECK(val(x).size() == 1, "add_scalars: non-scalar");
      s += val(x)[0];
      rg = rg || requires_grad(x);
    }
    Id o = push(Tensor<T>({1}, {s}), rg);
    record(o, [this, xs, o]() {
      const T g = gradc(o)[0];
      for (Id x : xs)
        if (requires_grad(x)) ensure(x)[0] += g;
    });
    return o;
  }

  // sum over all elements of (a-b)^2; gradients flow to both sides.
  Id sse(Id a, Id b) {
    const Tensor<T>&A = val(a), &B = val(b);
    AIF_CHECK(A.same_shape(B), "sse shape mismatch");
    T s = 0;
    for (int64_t i = 0; i < A.size(); ++i) {
      const T d = A[i] - B[i];
      s += d * d;
    }
    Id o = push(Tensor<T>({1}, {s}), rg2(a, b));
    record(o, [this, a, b, o]() {
      const T g = gradc(o)[0];
      const Tensor<T>&A = val(a), &B = val(b);
      if (requires_grad(a)) {
        Tensor<T>& ga = ensure(a);
        for (int64_t i = 0; i < A.size(); ++i) ga[i] += g * T(2) * (A[i] - B[i]);
      }
      if (requires_grad(b)) {
        Tensor<T>& gb = ensure(b);
        for (int64_t i = 0; i < A.size(); ++i) gb[i] -= g * T(2) * (A[i] - B[i]);
      }
    });
    return o;
  }

  // Unit-variance Gaussian negative log-likelihood up to constants:
  // 0.5 * sum (pred - target)^2 against a fixed target.
  Id gauss_nll(Id pred, const Tensor<T>& target) {
    const Tensor<T>& P = val(pred);
    AIF_CHECK(P.same_shape(target), "gauss_nll shape mismatch");
    T s = 0;
    for (int64_t i = 0; i < P.size(); ++i) {
      const T d = P[i] - target[i];
      s += d * d;
    }
    Id o = push(Tensor<T>({1}, {s / T(2)}), requires_grad(pred));
    Tensor<T> tgt = target;  // keep the target alive for backward
    record(o, [this, pred, o, tgt = std::move(tgt)]() {
      if (!requires_grad(pred)) return;
      const T g = gradc(o)[0];
      const Tensor<T>& P = val(pred);
      Tensor<T>& gp = ensure(pred);
      for (int64_t i = 0; i < P.size(); ++i) gp[i] += g * (P[i] - tgt[i]);
    });
    return o;
  }

  // Fused sigmoid + Gaussian NLL on pixels: 0.5 * sum (sigmoid(x) - target)^2.
  // Fusing avoids materialising a second image-sized activation per frame.
  Id sigmoid_gauss_nll(Id logits, const Tensor<T>& target) {
    const Tensor<T>& X = val(logits);
    AIF_CHECK(X.same_shape(target), "sigmoid_gauss_nll shape mismatch");
    T s = 0;
    for (int64_t i = 0; i < X.size(); ++i) {
      const T m = T(1) / (T(1) + std::exp(-X[i]));
      const T d = m - target[i];
      s += d * d;
    }
    Id o = push(Tensor<T>({1}, {s / T(2)}), requires_grad(logits));
    Tensor<T> tgt = target;
    record(o, [this, logits, o, tgt = std::move(tgt)]() {
      if (!requires_grad(logits)) return;
      const T g = gradc(o)[0];
      const Tensor<T>& X = val(logits);
      Tensor<T>& gx = ensure(logits);
      for (int64_t i = 0; i < X.size(); ++i) {
        const T m = T(1) / (T(1) + std::exp(-X[i]));
        gx[i] += g * (m - tgt[i]) * m * (T(1) - m);
      }
    });
    return o;
  }

  // ---- categorical latents ----------------------------------------------

  // Sample one-hot vectors from V independent C-way categoricals per row.
  // Forward: exact one-hot draw. Backward: straight-through, i.e. the
  // gradient of the softmax probabilities is used in place of the
  // non-differentiable sample.
  Id st_cat_sample(Id logits, int V, int C, Rng& rng) {
    std::vector<Rng*> rs = {&rng};
    return st_cat_sample_impl(logits, V, C, rs);
  }
  Id st_cat_sample_rows(Id logits, int V, int C, std::vector<Rng>& per_row) {
    std::vector<Rng*> rs(per_row.size());
    for (size_t i = 0; i < per_row.size(); ++i) rs[i] = &per_row[i];
    return st_cat_sample_impl(logits, V, C, rs);
  }

  // KL(q || p) for V independent C-way categoricals per row, summed over
  // rows and variables. The reported value is the plain KL; the gradient is
  // balanced: w * d/dp KL(sg(q) || p) + (1-w) * d/dq KL(q || sg(p)).
  Id kl_cat_balanced(Id qlogits, Id plogits, int V, int C, T w) {
    const Tensor<T>&Q = val(qlogits), &P = val(plogits);
    AIF_CHECK(Q.same_shape(P) && Q.cols() == V * C, "kl_cat_balanced shape mismatch");
    const int B = Q.rows();
    double total = 0.0;
    std::vector<double> lq(C), lp(C);
    for (int r = 0; r < B; ++r)
      for (int v = 0; v < V; ++v) {
        const int64_t off = static_cast<int64_t>(r) * V * C + static_cast<int64_t>(v) * C;
        detail::log_softmax_row(Q.ptr() + off, lq.data(), C);
        detail::log_softmax_row(P.ptr() + off, lp.data(), C);
        for (int c = 0; c < C; ++c) total += std::exp(lq[c]) * (lq[c] - lp[c]);
      }
    Id o = push(Tensor<T>({1}, {static_cast<T>(total)}), rg2(qlogits, plogits));
    // Both sides use the analytic per-side derivative of KL(q||p); balancing
    // only reweights them (w on the prior side, 1-w on the posterior side).
    // kl_exact restores the unweighted true gradient for FD checks.
    const double wp = kl_exact ? 1.0 : static_cast<double>(w);
    const double wq = kl_exact ? 1.0 : 1.0 - static_cast<double>(w);
    record(o, [this, qlogits, plogits, o, V, C, wp, wq]() {
      const T g = gradc(o)[0];
      const Tensor<T>&Q = val(qlogits), &P = val(plogits);
      const int B = Q.rows();
      std::vector<double> lq(C), lp(C);
      Tensor<T>* gq = requires_grad(qlogits) ? &ensure(qlogits) : nullptr;
      Tensor<T>* gp = requires_grad(plogits) ? &ensure(plogits) : nullptr;
      for (int r = 0; r < B; ++r)
        for (int v = 0; v < V; ++v) {
          const int64_t off = static_cast<int64_t>(r) * V * C + static_cast<int64_t>(v) * C;
          detail::log_softmax_row(Q.ptr() + off, lq.data(), C);
          detail::log_softmax_row(P.ptr() + off, lp.data(), C);
          double kl = 0.0;
          for (int c = 0; c < C; ++c) kl += std::exp(lq[c]) * (lq[c] - lp[c]);
          for (int c = 0; c < C; ++c) {
            const double qc = std::exp(lq[c]), pc = std::exp(lp[c]);
            // d/dp of KL(sg(q) || p) = p - q ; d/dq of KL(q || sg(p)) = q*(delta - KL)
            if (gp) (*gp)[off + c] += g * static_cast<T>(wp * (pc - qc));
            if (gq) (*gq)[off + c] += g * static_cast<T>(wq * qc * ((lq[c] - lp[c]) - kl));
          }
        }
    });
    return o;
  }

  // ---- engine ------------------------------------------------------------

  void backward(Id root) {
    AIF_CHECK(grad_enabled, "backward() with grad recording disabled");
    AIF_CHECK(val(root).size() == 1, "backward root must be scalar");
    ensure(root)[0] = T(1);
    for (Id i = root; i >= 0; --i) {
      Node& n = nodes_[static_cast<size_t>(i)];
      if (n.back && n.grad.size() > 0) n.back();
    }
  }

 private:
  struct Node {
    Tensor<T> val;
    Tensor<T> grad;
    std::function<void()> back;
    bool rg = false;
  };
  std::vector<Node> nodes_;

  Id push(Tensor<T> v, bool rg) {
    nodes_.push_back(Node{std::move(v), Tensor<T>(), nullptr, rg});
    return static_cast<Id>(nodes_.size() - 1);
  }
  template <class F>
  void record(Id o, F&& f) {
    if (grad_enabled && nodes_[static_cast<size_t>(o)].rg) nodes_[static_cast<size_t>(o)].back = std::forward<F>(f);
  }
  bool rg2(Id a, Id b) const { return requires_grad(a) || requires_grad(b); }
  const Tensor<T>& gradc(Id i) const { return nodes_[static_cast<size_t>(i)].grad; }
  Tensor<T>& ensure(Id i) {
    Node& n = nodes_[static_cast<size_t>(i)];
    if (n.grad.size() == 0) n.grad = Tensor<T>::zeros(n.val.shape);
    return n.grad;
  }

  template <class F>
  Id binary(Id a, Id b, F&& f, T da, T db) {
    const Tensor<T>&A = val(a), &B = val(b);
    AIF_CHECK(A.same_shape(B), "elementwise shape mismatch " + shape_str(A.shape) + " vs " + shape_str(B.shape));
    Tensor<T> out(A.shape);
    for (int64_t i = 0; i < A.size(); ++i) out[i] = f(A[i], B[i]);
    Id o = push(std::move(out), rg2(a, b));
    record(o, [this, a, b, o, da, db]() {
      const Tensor<T>& g = gradc(o);
      if (requires_grad(a)) {
        Tensor<T>& ga = ensure(a);
        for (int64_t i = 0; i < g.size(); ++i) ga[i] += da * g[i];
      }
      if (requires_grad(b)) {
        Tensor<T>& gb = ensure(b);
        for (int64_t i = 0; i < g.size(); ++i) gb[i] += db * g[i];
      }
    });
    return o;
  }

  Id st_cat_sample_impl(Id logits, int V, int C, std::vector<Rng*>& rngs) {
    const Tensor<T>& L = val(logits);
    const int B = L.rows();
    AIF_CHECK(L.cols() == V * C, "st_cat_sample width mismatch");
    AIF_CHECK(rngs.size() == 1 || static_cast<int>(rngs.size()) == B, "st_cat_sample rng count");
    Tensor<T> out(L.shape);
    std::vector<double> probs(C);
    for (int r = 0; r < B; ++r) {
      Rng& rng = rngs.size() == 1 ? *rngs[0] : *rngs[static_cast<size_t>(r)];
      for (int v = 0; v < V; ++v) {
        const int64_t off = static_cast<int64_t>(r) * V * C + static_cast<int64_t>(v) * C;
        softmax_row(L.ptr() + off, probs.data(), C);
        if (st_relaxed) {
          for (int c = 0; c < C; ++c) out[off + c] = static_cast<T>(probs[c]);
        } else {
          const int k = rng.categorical(probs.data(), C);
          for (int c = 0; c < C; ++c) out[off + c] = (c == k) ? T(1) : T(0);
        }
      }
    }
    Id o = push(std::move(out), requires_grad(logits));
    record(o, [this, logits, o, V, C]() {
      if (!requires_grad(logits)) return;
      const Tensor<T>&g = gradc(o), &L = val(logits);
      Tensor<T>& gl = ensure(logits);
      const int B = L.rows();
      std::vector<double> probs(C);
      for (int r = 0; r < B; ++r)
        for (int v = 0; v < V; ++v) {
          const int64_t off = static_cast<int64_t>(r) * V * C + static_cast<int64_t>(v) * C;
          softmax_row(L.ptr() + off, probs.data(), C);
          double dot = 0.0;
          for (int c = 0; c < C; ++c) dot += probs[c] * static_cast<double>(g[off + c]);
          for (int c = 0; c < C; ++c)
            gl[off + c] += static_cast<T>(probs[c] * (static_cast<double>(g[off + c]) - dot));
        }
    });
    return o;
  }
};

// ---- plain-tensor helpers used by inference-side code ---------------------

template <class T>
bool all_finite(const Tensor<T>& t) {
  for (int64_t i = 0; i < t.size(); ++i)
    if (!std::isfinite(static_cast<double>(t[i]))) return false;
  return true;
}

// log q(onehot) for V independent C-way categoricals in one row.
template <class T>
double cat_logprob_row(const T* logits, const T* onehot, int V, int C) {
  std::vector<double> ls(C);
  double lp = 0.0;
  for (int v = 0; v < V; ++v) {
    detail::log_softmax_row(logits + static_cast<int64_t>(v) * C, ls.data(), C);
    for (int c = 0; c < C; ++c)
      if (onehot[static_cast<int64_t>(v) * C + c] > T(0.5)) lp += ls[c];
  }
  return lp;
}

// Shannon entropy (nats) summed over the V categoricals of one row.
template <class T>
double cat_entropy_row(const T* logits, int V, int C) {
  std::vector<double> ls(C);
  double h = 0.0;
  for (int v = 0; v < V; ++v) {
    detail::log_softmax_row(logits + static_cast<int64_t>(v) * C, ls.data(), C);
    for (int c = 0; c < C; ++c) h -= std::exp(ls[c]) * ls[c];
  }
  return h;
}

}  // namespace aif
