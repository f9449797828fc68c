#include "audron/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "audron/rng.hpp"
#include "audron/threadpool.hpp"

namespace audron {

// ---------------------------------------------------------------------------
// Tensor
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  Tensor t;
  t.p_ = std::make_shared<Payload>();
  t.p_->shape = std::move(shape);
  t.p_->values.assign(static_cast<size_t>(shape_numel(t.p_->shape)), T(0));
  t.p_->requires_grad = requires_grad;
  return t;
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value) {
  Tensor t = zeros(std::move(shape));
  std::fill(t.p_->values.begin(), t.p_->values.end(), value);
  return t;
}

template <typename T>
Tensor<T> Tensor<T>::from(Shape shape, std::vector<T> values, bool requires_grad) {
  if (shape_numel(shape) != static_cast<int64_t>(values.size()))
    throw DimensionError("tensor: shape " + shape_str(shape) + " does not hold " +
                         std::to_string(values.size()) + " values");
  Tensor t;
  t.p_ = std::make_shared<Payload>();
  t.p_->shape = std::move(shape);
  t.p_->values = std::move(values);
  t.p_->requires_grad = requires_grad;
  return t;
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value) {
  return from({1}, {value});
}

template <typename T>
T* Tensor<T>::grad_data() {
  if (p_->grad.empty()) p_->grad.assign(p_->values.size(), T(0));
  return p_->grad.data();
}

template <typename T>
const std::vector<T>* Tensor<T>::grad() const {
  if (!p_ || p_->grad.empty()) return nullptr;
  return &p_->grad;
}

template <typename T>
void Tensor<T>::zero_grad() {
  if (p_) p_->grad.clear();
}

template <typename T>
T Tensor<T>::item() const {
  if (!p_ || p_->values.size() != 1)
    throw DimensionError("tensor: item() requires exactly one element, shape " +
                         (p_ ? shape_str(p_->shape) : std::string("[]")));
  return p_->values[0];
}

// ---------------------------------------------------------------------------
// Graph
// ---------------------------------------------------------------------------

namespace {
template <typename T>
thread_local Graph<T>* g_active_graph = nullptr;
}  // namespace

template <typename T>
Graph<T>::Scope::Scope(Graph& g) : prev_(g_active_graph<T>) {
  g_active_graph<T> = &g;
}

template <typename T>
Graph<T>::Scope::~Scope() {
  g_active_graph<T> = prev_;
}

template <typename T>
Graph<T>* Graph<T>::active() {
  return g_active_graph<T>;
}

template <typename T>
void Graph<T>::backward(Tensor<T> loss) {
  if (loss.numel() != 1)
    throw DimensionError("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
  loss.grad_data()[0] = T(1);
  for (auto it = tape_.rbegin(); it != tape_.rend(); ++it) (*it)();
}

// ---------------------------------------------------------------------------
// shared helpers
// ---------------------------------------------------------------------------

namespace {

constexpr int64_t kParGrain = 1 << 14;

// Parallel loop over independent elements; serial under the grain so tiny
// tensors skip pool dispatch. Each element is written by exactly one thread,
// so results are bit-identical for any thread count.
inline void par_elems(int64_t n, const std::function<void(int64_t, int64_t)>& fn) {
  if (n < kParGrain) {
    fn(0, n);
    return;
  }
  parallel_for(n, fn);
}

template <typename T>
void check_finite(Tensor<T> t, const char* op) {
  const T* v = t.data();
  const int64_t n = t.numel();
  for (int64_t i = 0; i < n; ++i) {
    if (!std::isfinite(static_cast<double>(v[i])))
      throw NumericError(std::string(op) + ": produced non-finite value at index " +
                         std::to_string(i));
  }
}

template <typename T>
bool tracked(std::initializer_list<const Tensor<T>*> inputs) {
  if (!Graph<T>::active()) return false;
  for (const Tensor<T>* t : inputs)
    if (t->requires_grad()) return true;
  return false;
}

template <typename T>
void record(std::function<void()> fn) {
  Graph<T>::active()->record(std::move(fn));
}

// C[M,N] += A[M,K] * B[K,N]; deterministic: each C row is owned by one
// thread and accumulates over k in order.
template <typename T>
void gemm_axpy(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n) {
  const auto body = [=](int64_t r0, int64_t r1) {
    for (int64_t i = r0; i < r1; ++i) {
      T* crow = c + i * n;
      const T* arow = a + i * k;
      for (int64_t p = 0; p < k; ++p) {
        const T av = arow[p];
        if (av == T(0)) continue;
        const T* brow = b + p * n;
        for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  };
  if (m * k * n < kParGrain) body(0, m);
  else parallel_for(m, body);
}

// C[M,N] += A[M,K] * B^T where Bt is [N,K]; rows of both operands are
// contiguous over k. Four accumulators pipeline the dot product; the
// split-accumulator order is fixed, so results stay deterministic.
template <typename T>
void gemm_dotT(const T* a, const T* bt, T* c, int64_t m, int64_t k, int64_t n) {
  const auto body = [=](int64_t r0, int64_t r1) {
    for (int64_t i = r0; i < r1; ++i) {
      const T* arow = a + i * k;
      T* crow = c + i * n;
      for (int64_t j = 0; j < n; ++j) {
        const T* brow = bt + j * k;
        T s0 = 0, s1 = 0, s2 = 0, s3 = 0;
        int64_t p = 0;
        for (; p + 4 <= k; p += 4) {
          s0 += arow[p] * brow[p];
          s1 += arow[p + 1] * brow[p + 1];
          s2 += arow[p + 2] * brow[p + 2];
          s3 += arow[p + 3] * brow[p + 3];
        }
        T s = (s0 + s1) + (s2 + s3);
        for (; p < k; ++p) s += arow[p] * brow[p];
        crow[j] += s;
      }
    }
  };
  if (m * k * n < kParGrain) body(0, m);
  else parallel_for(m, body);
}

// C[M,N] += A^T * B where A is [K,M], B is [K,N].
template <typename T>
void gemm_atb(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n) {
  const auto body = [=](int64_t r0, int64_t r1) {
    for (int64_t i = r0; i < r1; ++i) {
      T* crow = c + i * n;
      for (int64_t p = 0; p < k; ++p) {
        const T av = a[p * m + i];
        if (av == T(0)) continue;
        const T* brow = b + p * n;
        for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  };
  if (m * k * n < kParGrain) body(0, m);
  else parallel_for(m, body);
}

template <typename T>
void require_same_shape(Tensor<T> a, Tensor<T> b, const char* op) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

struct AxisSpan {
  int64_t outer = 1, axis = 1, inner = 1;
};

inline AxisSpan axis_span(const Shape& s, int axis) {
  AxisSpan sp;
  for (int i = 0; i < static_cast<int>(s.size()); ++i) {
    if (i < axis) sp.outer *= s[i];
    else if (i == axis) sp.axis = s[i];
    else sp.inner *= s[i];
  }
  return sp;
}

}  // namespace

// ---------------------------------------------------------------------------
// elementwise ops
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> add(Tensor<T> a, Tensor<T> b) {
  require_same_shape(a, b, "add");
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  const int64_t n = out.numel();
  const T* pa = a.data();
  const T* pb = b.data();
  T* po = out.data();
  par_elems(n, [=](int64_t i0, int64_t i1) {
    for (int64_t i = i0; i < i1; ++i) po[i] = pa[i] + pb[i];
  });
  check_finite(out, "add");
  if (tracked<T>({&a, &b})) {
    out.set_requires_grad(true);
    record<T>([a, b, out]() mutable {
      const auto* g = out.grad();
      if (!g) return;
      if (a.requires_grad()) {
        T* ga = a.grad_data();
        for (int64_t i = 0; i < out.numel(); ++i) ga[i] += (*g)[i];
      }
      if (b.requires_grad()) {
        T* gb = b.grad_data();
        for (int64_t i = 0; i < out.numel(); ++i) gb[i] += (*g)[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> mul(Tensor<T> a, Tensor<T> b) {
  require_same_shape(a, b, "mul");
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  const int64_t n = out.numel();
  const T* pa = a.data();
  const T* pb = b.data();
  T* po = out.data();
  par_elems(n, [=](int64_t i0, int64_t i1) {
    for (int64_t i = i0; i < i1; ++i) po[i] = pa[i] * pb[i];
  });
  check_finite(out, "mul");
  if (tracked<T>({&a, &b})) {
    out.set_requires_grad(true);
    record<T>([a, b, out]() mutable {
      const auto* g = out.grad();
      if (!g) return;
      if (a.requires_grad()) {
        T* ga = a.grad_data();
        const T* pb2 = b.data();
        for (int64_t i = 0; i < out.numel(); ++i) ga[i] += (*g)[i] * pb2[i];
      }
      if (b.requires_grad()) {
        T* gb = b.grad_data();
        const T* pa2 = a.data();
        for (int64_t i = 0; i < out.numel(); ++i) gb[i] += (*g)[i] * pa2[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> scale(Tensor<T> a, T c) {
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  const int64_t n = out.numel();
  const T* pa = a.data();
  T* po = out.data();
  par_elems(n, [=](int64_t i0, int64_t i1) {
    for (int64_t i = i0; i < i1; ++i) po[i] = c * pa[i];
  });
  check_finite(out, "scale");
  if (tracked<T>({&a})) {
    out.set_requires_grad(true);
    record<T>([a, out, c]() mutable {
      const auto* g = out.grad();
      if (!g) return;
      T* ga = a.grad_data();
      for (int64_t i = 0; i < out.numel(); ++i) ga[i] += c * (*g)[i];
    });
  }
  return out;
}

namespace {

template <typename T, typename FwdFn, typename BwdFn>
Tensor<T> unary_op(Tensor<T> a, const char* name, FwdFn fwd, BwdFn dfromy) {
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  const int64_t n = out.numel();
  const T* pa = a.data();
  T* po = out.data();
  par_elems(n, [=](int64_t i0, int64_t i1) {
    for (int64_t i = i0; i < i1; ++i) po[i] = fwd(pa[i]);
  });
  check_finite(out, name);
  if (tracked<T>({&a})) {
    out.set_requires_grad(true);
    record<T>([a, out, dfromy]() mutable {
      const auto* g = out.grad();
      if (!g) return;
      T* ga = a.grad_data();
      const T* y = out.data();
      const T* x = a.data();
      for (int64_t i = 0; i < out.numel(); ++i) ga[i] += (*g)[i] * dfromy(x[i], y[i]);
    });
  }
  return out;
}

}  // namespace

template <typename T>
Tensor<T> relu(Tensor<T> a) {
  return unary_op(
      a, "relu", [](T x) { return x > T(0) ? x : T(0); },
      [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> tanh(Tensor<T> a) {
  return unary_op(
      a, "tanh", [](T x) { return std::tanh(x); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Tensor<T> sigmoid(Tensor<T> a) {
  return unary_op(
      a, "sigmoid", [](T x) { return T(1) / (T(1) + std::exp(-x)); },
      [](T, T y) { return y * (T(1) - y); });
}

// ---------------------------------------------------------------------------
// matmul / linear
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> matmul(Tensor<T> a, Tensor<T> b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor<T> out = Tensor<T>::zeros({m, n});
  gemm_axpy(a.data(), b.data(), out.data(), m, k, n);
  check_finite(out, "matmul");
  if (tracked<T>({&a, &b})) {
    out.set_requires_grad(true);
    record<T>([a, b, out, m, k, n]() mutable {
      const auto* g = out.grad();
      if (!g) return;
      if (a.requires_grad())  // dA = dY * B^T
        gemm_dotT(g->data(), b.data(), a.grad_data(), m, n, k);
      if (b.requires_grad())  // dB = A^T * dY
        gemm_atb(a.data(), g->data(), b.grad_data(), k, m, n);
    });
  }
  return out;
}

template <typename T>
Tensor<T> linear(Tensor<T> x, Tensor<T> w, Tensor<T> bias) {
  if (x.rank() != 2 || w.rank() != 2 || x.dim(1) != w.dim(1))
    throw DimensionError("linear: input " + shape_str(x.shape()) + " incompatible with weight " +
                         shape_str(w.shape()));
  const int64_t b = x.dim(0), in = x.dim(1), out_dim = w.dim(0);
  if (bias.numel() != out_dim)
    throw DimensionError("linear: bias " + shape_str(bias.shape()) + " does not match weight " +
                         shape_str(w.shape()));
  Tensor<T> out = Tensor<T>::zeros({b, out_dim});
  T* po = out.data();
  const T* pb = bias.data();
  for (int64_t i = 0; i < b; ++i)
    for (int64_t o = 0; o < out_dim; ++o) po[i * out_dim + o] = pb[o];
  gemm_dotT(x.data(), w.data(), po, b, in, out_dim);
  check_finite(out, "linear");
  if (tracked<T>({&x, &w, &bias})) {
    out.set_requires_grad(true);
    record<T>([x, w, bias, out, b, in, out_dim]() mutable {
      const auto* g = out.grad();
      if (!g) return;
      if (x.requires_grad())  // dX = dY * W
        gemm_axpy(g->data(), w.data(), x.grad_data(), b, out_dim, in);
      if (w.requires_grad())  // dW = dY^T * X
        gemm_atb(g->data(), x.data(), w.grad_data(), out_dim, b, in);
      if (bias.requires_grad()) {
        T* gb = bias.grad_data();
        for (int64_t i = 0; i < b; ++i)
          for (int64_t o = 0; o < out_dim; ++o) gb[o] += (*g)[i * out_dim + o];
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// convolutions
// ---------------------------------------------------------------------------

namespace {

// Gather map for one conv axis: output position / kernel tap -> input index,
// -1 meaning zero padding. Replicate clamps to the valid range.
inline int64_t conv_src_index(int64_t out_pos, int64_t tap, int stride, int pad, int64_t len,
                              PadMode mode) {
  int64_t idx = out_pos * stride - pad + tap;
  if (idx < 0 || idx >= len) {
    if (mode == PadMode::Zero) return -1;
    idx = std::clamp<int64_t>(idx, 0, len - 1);
  }
  return idx;
}

inline int64_t conv_out_len(int64_t len, int64_t k, int stride, int pad) {
  return (len + 2 * pad - k) / stride + 1;
}

}  // namespace

template <typename T>
Tensor<T> conv1d(Tensor<T> x, Tensor<T> w, Tensor<T> bias, int stride,
                 int pad, PadMode mode) {
  if (x.rank() != 3 || w.rank() != 3 || x.dim(1) != w.dim(1))
    throw DimensionError("conv1d: input " + shape_str(x.shape()) + " incompatible with weight " +
                         shape_str(w.shape()));
  if (stride < 1 || pad < 0) throw ParameterError("conv1d: bad stride/pad");
  const int64_t batch = x.dim(0), cin = x.dim(1), len = x.dim(2);
  const int64_t cout = w.dim(0), k = w.dim(2);
  const int64_t out_len = conv_out_len(len, k, stride, pad);
  if (out_len < 1)
    throw DimensionError("conv1d: input " + shape_str(x.shape()) + " too short for kernel " +
                         shape_str(w.shape()));
  if (bias.numel() != cout)
    throw DimensionError("conv1d: bias " + shape_str(bias.shape()) + " does not match weight " +
                         shape_str(w.shape()));

  // im2col: rows = cin*k, cols = out_len; shared across the batch loop.
  const int64_t ck = cin * k;
  std::vector<int64_t> src(static_cast<size_t>(k) * out_len);
  for (int64_t t = 0; t < k; ++t)
    for (int64_t l = 0; l < out_len; ++l)
      src[t * out_len + l] = conv_src_index(l, t, stride, pad, len, mode);

  Tensor<T> out = Tensor<T>::zeros({batch, cout, out_len});
  std::vector<T> col(static_cast<size_t>(ck) * out_len);
  for (int64_t i = 0; i < batch; ++i) {
    const T* xi = x.data() + i * cin * len;
    for (int64_t c = 0; c < cin; ++c)
      for (int64_t t = 0; t < k; ++t) {
        T* dst = col.data() + (c * k + t) * out_len;
        const int64_t* row = src.data() + t * out_len;
        for (int64_t l = 0; l < out_len; ++l) dst[l] = row[l] >= 0 ? xi[c * len + row[l]] : T(0);
      }
    T* yi = out.data() + i * cout * out_len;
    const T* pb = bias.data();
    for (int64_t o = 0; o < cout; ++o)
      for (int64_t l = 0; l < out_len; ++l) yi[o * out_len + l] = pb[o];
    gemm_axpy(w.data(), col.data(), yi, cout, ck, out_len);
  }
  check_finite(out, "conv1d");

  if (tracked<T>({&x, &w, &bias})) {
    out.set_requires_grad(true);
    record<T>([x, w, bias, out, src, stride, pad, mode, batch, cin, len, cout, k, out_len,
               ck]() mutable {
      const auto* g = out.grad();
      if (!g) return;
      std::vector<T> col(static_cast<size_t>(ck) * out_len);
      std::vector<T> dcol(static_cast<size_t>(ck) * out_len);
      for (int64_t i = 0; i < batch; ++i) {
        const T* gy = g->data() + i * cout * out_len;
        if (w.requires_grad()) {
          const T* xi = x.data() + i * cin * len;
          for (int64_t c = 0; c < cin; ++c)
            for (int64_t t = 0; t < k; ++t) {
              T* dst = col.data() + (c * k + t) * out_len;
              const int64_t* row = src.data() + t * out_len;
              for (int64_t l = 0; l < out_len; ++l)
                dst[l] = row[l] >= 0 ? xi[c * len + row[l]] : T(0);
            }
          // dW += dY * col^T
          gemm_dotT(gy, col.data(), w.grad_data(), cout, out_len, ck);
        }
        if (x.requires_grad()) {
          std::fill(dcol.begin(), dcol.end(), T(0));
          // dcol = W^T * dY
          gemm_atb(w.data(), gy, dcol.data(), ck, cout, out_len);
          T* gx = x.grad_data() + i * cin * len;
          for (int64_t c = 0; c < cin; ++c)
            for (int64_t t = 0; t < k; ++t) {
              const T* drow = dcol.data() + (c * k + t) * out_len;
              const int64_t* row = src.data() + t * out_len;
              for (int64_t l = 0; l < out_len; ++l)
                if (row[l] >= 0) gx[c * len + row[l]] += drow[l];
            }
        }
        if (bias.requires_grad()) {
          T* gb = bias.grad_data();
          for (int64_t o = 0; o < cout; ++o) {
            T s = 0;
            for (int64_t l = 0; l < out_len; ++l) s += gy[o * out_len + l];
            gb[o] += s;
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> conv2d(Tensor<T> x, Tensor<T> w, Tensor<T> bias, int stride,
                 int pad, PadMode mode) {
  if (x.rank() != 4 || w.rank() != 4 || x.dim(1) != w.dim(1))
    throw DimensionError("conv2d: input " + shape_str(x.shape()) + " incompatible with weight " +
                         shape_str(w.shape()));
  if (stride < 1 || pad < 0) throw ParameterError("conv2d: bad stride/pad");
  const int64_t batch = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const int64_t cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const int64_t oh = conv_out_len(h, kh, stride, pad);
  const int64_t ow = conv_out_len(wd, kw, stride, pad);
  if (oh < 1 || ow < 1)
    throw DimensionError("conv2d: input " + shape_str(x.shape()) + " too small for kernel " +
                         shape_str(w.shape()));
  if (bias.numel() != cout)
    throw DimensionError("conv2d: bias " + shape_str(bias.shape()) + " does not match weight " +
                         shape_str(w.shape()));

  const int64_t ckk = cin * kh * kw;
  const int64_t olen = oh * ow;

  // Per-tap source index over the output plane, -1 = zero pad.
  std::vector<int64_t> src(static_cast<size_t>(kh) * kw * olen);
  for (int64_t ty = 0; ty < kh; ++ty)
    for (int64_t tx = 0; tx < kw; ++tx) {
      int64_t* row = src.data() + (ty * kw + tx) * olen;
      for (int64_t oy = 0; oy < oh; ++oy) {
        const int64_t sy = conv_src_index(oy, ty, stride, pad, h, mode);
        for (int64_t ox = 0; ox < ow; ++ox) {
          const int64_t sx = conv_src_index(ox, tx, stride, pad, wd, mode);
          row[oy * ow + ox] = (sy < 0 || sx < 0) ? -1 : sy * wd + sx;
        }
      }
    }

  // Value captures keep the map alive inside the recorded backward closure.
  const auto fill_col = [src, cin, h, wd, kh, kw, olen](const T* xi, T* col) {
    for (int64_t c = 0; c < cin; ++c) {
      const T* plane = xi + c * h * wd;
      for (int64_t t = 0; t < kh * kw; ++t) {
        T* dst = col + (c * kh * kw + t) * olen;
        const int64_t* row = src.data() + t * olen;
        for (int64_t l = 0; l < olen; ++l) dst[l] = row[l] >= 0 ? plane[row[l]] : T(0);
      }
    }
  };

  Tensor<T> out = Tensor<T>::zeros({batch, cout, oh, ow});
  std::vector<T> col(static_cast<size_t>(ckk) * olen);
  for (int64_t i = 0; i < batch; ++i) {
    fill_col(x.data() + i * cin * h * wd, col.data());
    T* yi = out.data() + i * cout * olen;
    const T* pb = bias.data();
    for (int64_t o = 0; o < cout; ++o)
      for (int64_t l = 0; l < olen; ++l) yi[o * olen + l] = pb[o];
    gemm_axpy(w.data(), col.data(), yi, cout, ckk, olen);
  }
  check_finite(out, "conv2d");

  if (tracked<T>({&x, &w, &bias})) {
    out.set_requires_grad(true);
    record<T>([x, w, bias, out, src, fill_col, batch, cin, h, wd, cout, kh, kw, olen,
               ckk]() mutable {
      const auto* g = out.grad();
      if (!g) return;
      std::vector<T> col(static_cast<size_t>(ckk) * olen);
      std::vector<T> dcol(static_cast<size_t>(ckk) * olen);
      for (int64_t i = 0; i < batch; ++i) {
        const T* gy = g->data() + i * cout * olen;
        if (w.requires_grad()) {
          fill_col(x.data() + i * cin * h * wd, col.data());
          gemm_dotT(gy, col.data(), w.grad_data(), cout, olen, ckk);
        }
        if (x.requires_grad()) {
          std::fill(dcol.begin(), dcol.end(), T(0));
          gemm_atb(w.data(), gy, dcol.data(), ckk, cout, olen);
          T* gx = x.grad_data() + i * cin * h * wd;
          for (int64_t c = 0; c < cin; ++c) {
            T* plane = gx + c * h * wd;
            for (int64_t t = 0; t < kh * kw; ++t) {
              const T* drow = dcol.data() + (c * kh * kw + t) * olen;
              const int64_t* row = src.data() + t * olen;
              for (int64_t l = 0; l < olen; ++l)
                if (row[l] >= 0) plane[row[l]] += drow[l];
            }
          }
        }
        if (bias.requires_grad()) {
          T* gb = bias.grad_data();
          for (int64_t o = 0; o < cout; ++o) {
            T s = 0;
            for (int64_t l = 0; l < olen; ++l) s += gy[o * olen + l];
            gb[o] += s;
          }
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// pooling / upsampling
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> maxpool2d(Tensor<T> x) {
  if (x.rank() != 4)
    throw DimensionError("maxpool2d: expected rank-4 input, got " + shape_str(x.shape()));
  const int64_t b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int64_t oh = (h + 1) / 2, ow = (w + 1) / 2;
  Tensor<T> out = Tensor<T>::zeros({b, c, oh, ow});
  std::vector<int64_t> argmax(static_cast<size_t>(out.numel()));
  const T* px = x.data();
  T* po = out.data();
  int64_t* parg = argmax.data();
  par_elems(b * c, [=](int64_t p0, int64_t p1) {
    for (int64_t p = p0; p < p1; ++p) {
      const T* plane = px + p * h * w;
      T* oplane = po + p * oh * ow;
      int64_t* aplane = parg + p * oh * ow;
      for (int64_t oy = 0; oy < oh; ++oy)
        for (int64_t ox = 0; ox < ow; ++ox) {
          // Right/bottom replication for odd dims = clamped indices.
          const int64_t y1 = std::min<int64_t>(2 * oy + 1, h - 1);
          const int64_t x1 = std::min<int64_t>(2 * ox + 1, w - 1);
          T best = plane[2 * oy * w + 2 * ox];
          int64_t besti = 2 * oy * w + 2 * ox;
          const int64_t cand[3] = {2 * oy * w + x1, y1 * w + 2 * ox, y1 * w + x1};
          for (int64_t idx : cand)
            if (plane[idx] > best) {
              best = plane[idx];
              besti = idx;
            }
          oplane[oy * ow + ox] = best;
          aplane[oy * ow + ox] = besti;
        }
    }
  });
  check_finite(out, "maxpool2d");
  if (tracked<T>({&x})) {
    out.set_requires_grad(true);
    record<T>([x, out, argmax = std::move(argmax), b, c, h, w, oh, ow]() mutable {
      const auto* g = out.grad();
      if (!g) return;
      T* gx = x.grad_data();
      for (int64_t p = 0; p < b * c; ++p) {
        const T* gp = g->data() + p * oh * ow;
        const int64_t* ap = argmax.data() + p * oh * ow;
        T* gxp = gx + p * h * w;
        for (int64_t l = 0; l < oh * ow; ++l) gxp[ap[l]] += gp[l];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> avgpool1d(Tensor<T> x, int k) {
  if (x.rank() != 3)
    throw DimensionError("avgpool1d: expected rank-3 input, got " + shape_str(x.shape()));
  if (k < 1) throw ParameterError("avgpool1d: k must be >= 1");
  const int64_t b = x.dim(0), c = x.dim(1), len = x.dim(2);
  if (len % k != 0)
    throw DimensionError("avgpool1d: length " + std::to_string(len) + " not divisible by " +
                         std::to_string(k));
  const int64_t olen = len / k;
  Tensor<T> out = Tensor<T>::zeros({b, c, olen});
  const T* px = x.data();
  T* po = out.data();
  const T inv = T(1) / static_cast<T>(k);
  par_elems(b * c, [=](int64_t p0, int64_t p1) {
    for (int64_t p = p0; p < p1; ++p)
      for (int64_t l = 0; l < olen; ++l) {
        T s = 0;
        for (int64_t j = 0; j < k; ++j) s += px[p * len + l * k + j];
        po[p * olen + l] = s * inv;
      }
  });
  check_finite(out, "avgpool1d");
  if (tracked<T>({&x})) {
    out.set_requires_grad(true);
    record<T>([x, out, b, c, len, olen, k, inv]() mutable {
      const auto* g = out.grad();
      if (!g) return;
      T* gx = x.grad_data();
      for (int64_t p = 0; p < b * c; ++p)
        for (int64_t l = 0; l < olen; ++l) {
          const T gv = (*g)[p * olen + l] * inv;
          for (int64_t j = 0; j < k; ++j) gx[p * len + l * k + j] += gv;
        }
    });
  }
  return out;
}

template <typename T>
Tensor<T> upsample1d_nearest(Tensor<T> x, int factor) {
  if (x.rank() != 3)
    throw DimensionError("upsample1d: expected rank-3 input, got " + shape_str(x.shape()));
  if (factor < 1) throw ParameterError("upsample1d: factor must be >= 1");
  const int64_t b = x.dim(0), c = x.dim(1), len = x.dim(2);
  const int64_t olen = len * factor;
  Tensor<T> out = Tensor<T>::zeros({b, c, olen});
  const T* px = x.data();
  T* po = out.data();
  par_elems(b * c, [=](int64_t p0, int64_t p1) {
    for (int64_t p = p0; p < p1; ++p)
      for (int64_t l = 0; l < olen; ++l) po[p * olen + l] = px[p * len + l / factor];
  });
  check_finite(out, "upsample1d");
  if (tracked<T>({&x})) {
    out.set_requires_grad(true);
    record<T>([x, out, b, c, len, olen, factor]() mutable {
      const auto* g = out.grad();
      if (!g) return;
      T* gx = x.grad_data();
      for (int64_t p = 0; p < b * c; ++p)
        for (int64_t l = 0; l < olen; ++l) gx[p * len + l / factor] += (*g)[p * olen + l];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// shape ops
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> reshape(Tensor<T> x, Shape new_shape) {
  if (shape_numel(new_shape) != x.numel())
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                         shape_str(new_shape));
  Tensor<T> out = Tensor<T>::from(std::move(new_shape), x.values());
  if (tracked<T>({&x})) {
    out.set_requires_grad(true);
    record<T>([x, out]() mutable {
      const auto* g = out.grad();
      if (!g) return;
      T* gx = x.grad_data();
      for (int64_t i = 0; i < out.numel(); ++i) gx[i] += (*g)[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> concat(std::vector<Tensor<T>> xs, int axis) {
  if (xs.empty()) throw ParameterError("concat: no inputs");
  const int rank = xs[0].rank();
  if (axis < 0 || axis >= rank) throw ParameterError("concat: bad axis");
  Shape out_shape = xs[0].shape();
  int64_t axis_total = 0;
  for (const auto& x : xs) {
    if (x.rank() != rank)
      throw DimensionError("concat: rank mismatch " + shape_str(xs[0].shape()) + " vs " +
                           shape_str(x.shape()));
    for (int d = 0; d < rank; ++d)
      if (d != axis && x.dim(d) != out_shape[static_cast<size_t>(d)])
        throw DimensionError("concat: shape mismatch " + shape_str(xs[0].shape()) + " vs " +
                             shape_str(x.shape()));
    axis_total += x.dim(axis);
  }
  out_shape[static_cast<size_t>(axis)] = axis_total;
  Tensor<T> out = Tensor<T>::zeros(out_shape);

  const AxisSpan sp = axis_span(out_shape, axis);
  T* po = out.data();
  int64_t offset = 0;
  for (const auto& x : xs) {
    const int64_t ax = x.dim(axis);
    const T* px = x.data();
    for (int64_t o = 0; o < sp.outer; ++o)
      std::memcpy(po + (o * sp.axis + offset) * sp.inner, px + o * ax * sp.inner,
                  static_cast<size_t>(ax * sp.inner) * sizeof(T));
    offset += ax;
  }

  bool any = false;
  for (const auto& x : xs)
    if (x.requires_grad()) any = true;
  if (any && Graph<T>::active()) {
    out.set_requires_grad(true);
    record<T>([xs, out, sp, axis]() mutable {
      const auto* g = out.grad();
      if (!g) return;
      int64_t offset = 0;
      for (auto& x : xs) {
        const int64_t ax = x.dim(axis);
        if (x.requires_grad()) {
          T* gx = x.grad_data();
          for (int64_t o = 0; o < sp.outer; ++o) {
            const T* gsrc = g->data() + (o * sp.axis + offset) * sp.inner;
            T* gdst = gx + o * ax * sp.inner;
            for (int64_t i = 0; i < ax * sp.inner; ++i) gdst[i] += gsrc[i];
          }
        }
        offset += ax;
      }
    });
  }
  return out;
}

template <typename T>
std::vector<Tensor<T>> split(Tensor<T> x, int axis, const std::vector<int64_t>& sizes) {
  if (axis < 0 || axis >= x.rank()) throw ParameterError("split: bad axis");
  int64_t total = 0;
  for (int64_t s : sizes) total += s;
  if (total != x.dim(axis))
    throw DimensionError("split: sizes sum " + std::to_string(total) + " != axis dim " +
                         std::to_string(x.dim(axis)) + " of " + shape_str(x.shape()));
  const AxisSpan sp = axis_span(x.shape(), axis);
  std::vector<Tensor<T>> outs;
  int64_t offset = 0;
  for (int64_t s : sizes) {
    Shape shape = x.shape();
    shape[static_cast<size_t>(axis)] = s;
    Tensor<T> part = Tensor<T>::zeros(shape);
    T* pp = part.data();
    const T* px = x.data();
    for (int64_t o = 0; o < sp.outer; ++o)
      std::memcpy(pp + o * s * sp.inner, px + (o * sp.axis + offset) * sp.inner,
                  static_cast<size_t>(s * sp.inner) * sizeof(T));
    if (tracked<T>({&x})) {
      part.set_requires_grad(true);
      const int64_t off = offset;
      record<T>([x, part, sp, s, off]() mutable {
        const auto* g = part.grad();
        if (!g) return;
        T* gx = x.grad_data();
        for (int64_t o = 0; o < sp.outer; ++o) {
          const T* gsrc = g->data() + o * s * sp.inner;
          T* gdst = gx + (o * sp.axis + off) * sp.inner;
          for (int64_t i = 0; i < s * sp.inner; ++i) gdst[i] += gsrc[i];
        }
      });
    }
    outs.push_back(std::move(part));
    offset += s;
  }
  return outs;
}

// ---------------------------------------------------------------------------
// reductions / softmax / batchnorm / dropout
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> reduce_mean(Tensor<T> x, int axis) {
  if (axis < 0 || axis >= x.rank()) throw ParameterError("reduce_mean: bad axis");
  const AxisSpan sp = axis_span(x.shape(), axis);
  Shape out_shape;
  for (int d = 0; d < x.rank(); ++d)
    if (d != axis) out_shape.push_back(x.dim(d));
  if (out_shape.empty()) out_shape.push_back(1);
  Tensor<T> out = Tensor<T>::zeros(out_shape);
  const T inv = T(1) / static_cast<T>(sp.axis);
  const T* px = x.data();
  T* po = out.data();
  for (int64_t o = 0; o < sp.outer; ++o)
    for (int64_t i = 0; i < sp.inner; ++i) {
      T s = 0;
      for (int64_t a = 0; a < sp.axis; ++a) s += px[(o * sp.axis + a) * sp.inner + i];
      po[o * sp.inner + i] = s * inv;
    }
  check_finite(out, "reduce_mean");
  if (tracked<T>({&x})) {
    out.set_requires_grad(true);
    record<T>([x, out, sp, inv]() mutable {
      const auto* g = out.grad();
      if (!g) return;
      T* gx = x.grad_data();
      for (int64_t o = 0; o < sp.outer; ++o)
        for (int64_t a = 0; a < sp.axis; ++a)
          for (int64_t i = 0; i < sp.inner; ++i)
            gx[(o * sp.axis + a) * sp.inner + i] += (*g)[o * sp.inner + i] * inv;
    });
  }
  return out;
}

template <typename T>
Tensor<T> sum_all(Tensor<T> x) {
  Tensor<T> out = Tensor<T>::zeros({1});
  T s = 0;
  const T* px = x.data();
  for (int64_t i = 0; i < x.numel(); ++i) s += px[i];
  out.data()[0] = s;
  check_finite(out, "sum_all");
  if (tracked<T>({&x})) {
    out.set_requires_grad(true);
    record<T>([x, out]() mutable {
      const auto* g = out.grad();
      if (!g) return;
      T* gx = x.grad_data();
      const T gv = (*g)[0];
      for (int64_t i = 0; i < x.numel(); ++i) gx[i] += gv;
    });
  }
  return out;
}

template <typename T>
Tensor<T> softmax(Tensor<T> x, int axis) {
  if (axis < 0 || axis >= x.rank()) throw ParameterError("softmax: bad axis");
  const AxisSpan sp = axis_span(x.shape(), axis);
  Tensor<T> out = Tensor<T>::zeros(x.shape());
  const T* px = x.data();
  T* po = out.data();
  for (int64_t o = 0; o < sp.outer; ++o)
    for (int64_t i = 0; i < sp.inner; ++i) {
      T mx = px[o * sp.axis * sp.inner + i];
      for (int64_t a = 1; a < sp.axis; ++a)
        mx = std::max(mx, px[(o * sp.axis + a) * sp.inner + i]);
      T denom = 0;
      for (int64_t a = 0; a < sp.axis; ++a) {
        const T e = std::exp(px[(o * sp.axis + a) * sp.inner + i] - mx);
        po[(o * sp.axis + a) * sp.inner + i] = e;
        denom += e;
      }
      for (int64_t a = 0; a < sp.axis; ++a) po[(o * sp.axis + a) * sp.inner + i] /= denom;
    }
  check_finite(out, "softmax");
  if (tracked<T>({&x})) {
    out.set_requires_grad(true);
    record<T>([x, out, sp]() mutable {
      const auto* g = out.grad();
      if (!g) return;
      T* gx = x.grad_data();
      const T* y = out.data();
      for (int64_t o = 0; o < sp.outer; ++o)
        for (int64_t i = 0; i < sp.inner; ++i) {
          T dot = 0;
          for (int64_t a = 0; a < sp.axis; ++a) {
            const int64_t idx = (o * sp.axis + a) * sp.inner + i;
            dot += (*g)[idx] * y[idx];
          }
          for (int64_t a = 0; a < sp.axis; ++a) {
            const int64_t idx = (o * sp.axis + a) * sp.inner + i;
            gx[idx] += y[idx] * ((*g)[idx] - dot);
          }
        }
    });
  }
  return out;
}

template <typename T>
Tensor<T> batchnorm(Tensor<T> x, Tensor<T> gamma, Tensor<T> beta,
                    Tensor<T>& running_mean, Tensor<T>& running_var, bool train, T momentum,
                    T eps, bool frozen) {
  if (x.rank() != 2)
    throw DimensionError("batchnorm: expected [batch, features], got " + shape_str(x.shape()));
  const int64_t b = x.dim(0), f = x.dim(1);
  if (gamma.numel() != f || beta.numel() != f || running_mean.numel() != f ||
      running_var.numel() != f)
    throw DimensionError("batchnorm: affine/stat shape " + shape_str(gamma.shape()) +
                         " does not match features of " + shape_str(x.shape()));

  const bool use_batch_stats = train && !frozen;
  std::vector<T> mean(f), var(f);
  const T* px = x.data();
  if (use_batch_stats) {
    if (b < 2) throw DimensionError("batchnorm: train mode needs batch >= 2");
    for (int64_t j = 0; j < f; ++j) {
      T m = 0;
      for (int64_t i = 0; i < b; ++i) m += px[i * f + j];
      m /= static_cast<T>(b);
      T v = 0;
      for (int64_t i = 0; i < b; ++i) {
        const T d = px[i * f + j] - m;
        v += d * d;
      }
      v /= static_cast<T>(b);
      mean[j] = m;
      var[j] = v;
    }
    T* rm = running_mean.data();
    T* rv = running_var.data();
    for (int64_t j = 0; j < f; ++j) {
      rm[j] = (T(1) - momentum) * rm[j] + momentum * mean[j];
      rv[j] = (T(1) - momentum) * rv[j] + momentum * var[j];
    }
  } else {
    std::copy(running_mean.data(), running_mean.data() + f, mean.begin());
    std::copy(running_var.data(), running_var.data() + f, var.begin());
  }

  std::vector<T> inv_std(f);
  for (int64_t j = 0; j < f; ++j) inv_std[j] = T(1) / std::sqrt(var[j] + eps);

  Tensor<T> out = Tensor<T>::zeros(x.shape());
  std::vector<T> xhat(static_cast<size_t>(b) * f);
  T* po = out.data();
  const T* pg = gamma.data();
  const T* pb = beta.data();
  for (int64_t i = 0; i < b; ++i)
    for (int64_t j = 0; j < f; ++j) {
      const T h = (px[i * f + j] - mean[j]) * inv_std[j];
      xhat[i * f + j] = h;
      po[i * f + j] = pg[j] * h + pb[j];
    }
  check_finite(out, "batchnorm");

  if (tracked<T>({&x, &gamma, &beta})) {
    out.set_requires_grad(true);
    record<T>([x, gamma, beta, out, xhat = std::move(xhat), inv_std = std::move(inv_std), b, f,
               use_batch_stats]() mutable {
      const auto* g = out.grad();
      if (!g) return;
      const T* pg = gamma.data();
      if (gamma.requires_grad()) {
        T* gg = gamma.grad_data();
        for (int64_t i = 0; i < b; ++i)
          for (int64_t j = 0; j < f; ++j) gg[j] += (*g)[i * f + j] * xhat[i * f + j];
      }
      if (beta.requires_grad()) {
        T* gb = beta.grad_data();
        for (int64_t i = 0; i < b; ++i)
          for (int64_t j = 0; j < f; ++j) gb[j] += (*g)[i * f + j];
      }
      if (x.requires_grad()) {
        T* gx = x.grad_data();
        if (!use_batch_stats) {
          for (int64_t i = 0; i < b; ++i)
            for (int64_t j = 0; j < f; ++j) gx[i * f + j] += (*g)[i * f + j] * pg[j] * inv_std[j];
        } else {
          // d xhat = g * gamma; dx via the batch-statistics chain rule.
          for (int64_t j = 0; j < f; ++j) {
            T sum_dh = 0, sum_dh_h = 0;
            for (int64_t i = 0; i < b; ++i) {
              const T dh = (*g)[i * f + j] * pg[j];
              sum_dh += dh;
              sum_dh_h += dh * xhat[i * f + j];
            }
            const T invb = T(1) / static_cast<T>(b);
            for (int64_t i = 0; i < b; ++i) {
              const T dh = (*g)[i * f + j] * pg[j];
              gx[i * f + j] +=
                  inv_std[j] * (dh - invb * sum_dh - invb * xhat[i * f + j] * sum_dh_h);
            }
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> dropout(Tensor<T> x, double p, bool train, uint64_t seed) {
  if (!(p >= 0.0 && p < 1.0)) throw ParameterError("dropout: p must be in [0, 1)");
  if (!train || p == 0.0) {
    // Identity in eval mode; still recorded so gradients flow through.
    Tensor<T> out = Tensor<T>::from(x.shape(), x.values());
    if (tracked<T>({&x})) {
      out.set_requires_grad(true);
      record<T>([x, out]() mutable {
        const auto* g = out.grad();
        if (!g) return;
        T* gx = x.grad_data();
        for (int64_t i = 0; i < out.numel(); ++i) gx[i] += (*g)[i];
      });
    }
    return out;
  }
  const int64_t n = x.numel();
  std::vector<uint8_t> mask(static_cast<size_t>(n));
  Rng rng(seed);
  for (int64_t i = 0; i < n; ++i) mask[i] = rng.next_double() >= p ? 1 : 0;
  const T keep_scale = T(1.0 / (1.0 - p));
  Tensor<T> out = Tensor<T>::zeros(x.shape());
  const T* px = x.data();
  T* po = out.data();
  for (int64_t i = 0; i < n; ++i) po[i] = mask[i] ? px[i] * keep_scale : T(0);
  check_finite(out, "dropout");
  if (tracked<T>({&x})) {
    out.set_requires_grad(true);
    record<T>([x, out, mask = std::move(mask), keep_scale]() mutable {
      const auto* g = out.grad();
      if (!g) return;
      T* gx = x.grad_data();
      for (int64_t i = 0; i < out.numel(); ++i)
        if (mask[i]) gx[i] += (*g)[i] * keep_scale;
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// LSTM cell
// ---------------------------------------------------------------------------

template <typename T>
std::pair<Tensor<T>, Tensor<T>> lstm_cell(Tensor<T> x, Tensor<T> h_prev,
                                          Tensor<T> c_prev, Tensor<T> w_ih,
                                          Tensor<T> w_hh, Tensor<T> bias) {
  if (x.rank() != 2 || h_prev.rank() != 2 || c_prev.rank() != 2)
    throw DimensionError("lstm_cell: inputs must be rank-2, got " + shape_str(x.shape()));
  const int64_t b = x.dim(0), in = x.dim(1);
  const int64_t hidden = h_prev.dim(1);
  const int64_t gates = 4 * hidden;
  if (h_prev.dim(0) != b || c_prev.dim(0) != b || c_prev.dim(1) != hidden)
    throw DimensionError("lstm_cell: state shapes " + shape_str(h_prev.shape()) + " vs " +
                         shape_str(c_prev.shape()) + " inconsistent with input " +
                         shape_str(x.shape()));
  if (w_ih.rank() != 2 || w_ih.dim(0) != gates || w_ih.dim(1) != in || w_hh.rank() != 2 ||
      w_hh.dim(0) != gates || w_hh.dim(1) != hidden || bias.numel() != gates)
    throw DimensionError("lstm_cell: weight shapes " + shape_str(w_ih.shape()) + ", " +
                         shape_str(w_hh.shape()) + " inconsistent with state " +
                         shape_str(h_prev.shape()));

  // pre = x W_ih^T + h W_hh^T + b, gate order (i, f, g, o)
  std::vector<T> pre(static_cast<size_t>(b) * gates);
  {
    const T* pb = bias.data();
    for (int64_t i = 0; i < b; ++i)
      for (int64_t j = 0; j < gates; ++j) pre[i * gates + j] = pb[j];
    gemm_dotT(x.data(), w_ih.data(), pre.data(), b, in, gates);
    gemm_dotT(h_prev.data(), w_hh.data(), pre.data(), b, hidden, gates);
  }

  Tensor<T> h = Tensor<T>::zeros({b, hidden});
  Tensor<T> c = Tensor<T>::zeros({b, hidden});
  std::vector<T> gi(static_cast<size_t>(b) * hidden), gf(gi.size()), gg(gi.size()),
      go(gi.size()), tc(gi.size());
  {
    const T* pc = c_prev.data();
    T* ph = h.data();
    T* pcn = c.data();
    for (int64_t i = 0; i < b; ++i)
      for (int64_t j = 0; j < hidden; ++j) {
        const int64_t r = i * hidden + j;
        const T* row = pre.data() + i * gates;
        const T vi = T(1) / (T(1) + std::exp(-row[j]));
        const T vf = T(1) / (T(1) + std::exp(-row[hidden + j]));
        const T vg = std::tanh(row[2 * hidden + j]);
        const T vo = T(1) / (T(1) + std::exp(-row[3 * hidden + j]));
        const T vc = vf * pc[r] + vi * vg;
        const T vtc = std::tanh(vc);
        gi[r] = vi;
        gf[r] = vf;
        gg[r] = vg;
        go[r] = vo;
        tc[r] = vtc;
        pcn[r] = vc;
        ph[r] = vo * vtc;
      }
  }
  check_finite(h, "lstm_cell");
  check_finite(c, "lstm_cell");

  if (tracked<T>({&x, &h_prev, &c_prev, &w_ih, &w_hh, &bias})) {
    h.set_requires_grad(true);
    c.set_requires_grad(true);
    record<T>([x, h_prev, c_prev, w_ih, w_hh, bias, h, c, gi = std::move(gi), gf = std::move(gf),
               gg = std::move(gg), go = std::move(go), tc = std::move(tc), b, in, hidden,
               gates]() mutable {
      const auto* gh = h.grad();
      const auto* gc_out = c.grad();
      if (!gh && !gc_out) return;
      const T* pc_prev = c_prev.data();

      std::vector<T> dpre(static_cast<size_t>(b) * gates, T(0));
      std::vector<T> dc_prev_local(static_cast<size_t>(b) * hidden, T(0));
      for (int64_t i = 0; i < b; ++i)
        for (int64_t j = 0; j < hidden; ++j) {
          const int64_t r = i * hidden + j;
          const T dh = gh ? (*gh)[r] : T(0);
          T dc = gc_out ? (*gc_out)[r] : T(0);
          dc += dh * go[r] * (T(1) - tc[r] * tc[r]);
          const T ddo = dh * tc[r];
          const T ddf = dc * pc_prev[r];
          const T ddi = dc * gg[r];
          const T ddg = dc * gi[r];
          T* row = dpre.data() + i * gates;
          row[j] = ddi * gi[r] * (T(1) - gi[r]);
          row[hidden + j] = ddf * gf[r] * (T(1) - gf[r]);
          row[2 * hidden + j] = ddg * (T(1) - gg[r] * gg[r]);
          row[3 * hidden + j] = ddo * go[r] * (T(1) - go[r]);
          dc_prev_local[r] = dc * gf[r];
        }

      if (x.requires_grad())  // dX = dpre * W_ih
        gemm_axpy(dpre.data(), w_ih.data(), x.grad_data(), b, gates, in);
      if (h_prev.requires_grad())
        gemm_axpy(dpre.data(), w_hh.data(), h_prev.grad_data(), b, gates, hidden);
      if (c_prev.requires_grad()) {
        T* gcp = c_prev.grad_data();
        for (int64_t r = 0; r < b * hidden; ++r) gcp[r] += dc_prev_local[r];
      }
      if (w_ih.requires_grad())  // dW_ih = dpre^T * x
        gemm_atb(dpre.data(), x.data(), w_ih.grad_data(), gates, b, in);
      if (w_hh.requires_grad())
        gemm_atb(dpre.data(), h_prev.data(), w_hh.grad_data(), gates, b, hidden);
      if (bias.requires_grad()) {
        T* gb = bias.grad_data();
        for (int64_t i = 0; i < b; ++i)
          for (int64_t j = 0; j < gates; ++j) gb[j] += dpre[i * gates + j];
      }
    });
  }
  return {h, c};
}

// ---------------------------------------------------------------------------
// attention pooling
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> weighted_time_pool(Tensor<T> h, Tensor<T> a) {
  if (h.rank() != 3 || a.rank() != 2 || h.dim(0) != a.dim(0) || h.dim(1) != a.dim(1))
    throw DimensionError("weighted_time_pool: states " + shape_str(h.shape()) +
                         " incompatible with weights " + shape_str(a.shape()));
  const int64_t b = h.dim(0), f = h.dim(1), d = h.dim(2);
  Tensor<T> out = Tensor<T>::zeros({b, d});
  const T* ph = h.data();
  const T* pa = a.data();
  T* po = out.data();
  for (int64_t i = 0; i < b; ++i)
    for (int64_t t = 0; t < f; ++t) {
      const T w = pa[i * f + t];
      const T* row = ph + (i * f + t) * d;
      T* orow = po + i * d;
      for (int64_t j = 0; j < d; ++j) orow[j] += w * row[j];
    }
  check_finite(out, "weighted_time_pool");
  if (tracked<T>({&h, &a})) {
    out.set_requires_grad(true);
    record<T>([h, a, out, b, f, d]() mutable {
      const auto* g = out.grad();
      if (!g) return;
      const T* ph = h.data();
      const T* pa = a.data();
      if (h.requires_grad()) {
        T* gh = h.grad_data();
        for (int64_t i = 0; i < b; ++i)
          for (int64_t t = 0; t < f; ++t) {
            const T w = pa[i * f + t];
            const T* grow = g->data() + i * d;
            T* dst = gh + (i * f + t) * d;
            for (int64_t j = 0; j < d; ++j) dst[j] += w * grow[j];
          }
      }
      if (a.requires_grad()) {
        T* ga = a.grad_data();
        for (int64_t i = 0; i < b; ++i)
          for (int64_t t = 0; t < f; ++t) {
            const T* row = ph + (i * f + t) * d;
            const T* grow = g->data() + i * d;
            T s = 0;
            for (int64_t j = 0; j < d; ++j) s += row[j] * grow[j];
            ga[i * f + t] += s;
          }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// losses
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> cross_entropy(Tensor<T> logits, const std::vector<int>& labels) {
  if (logits.rank() != 2)
    throw DimensionError("cross_entropy: logits must be [batch, classes], got " +
                         shape_str(logits.shape()));
  const int64_t b = logits.dim(0), k = logits.dim(1);
  if (static_cast<int64_t>(labels.size()) != b)
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for batch " +
                         std::to_string(b));
  for (int label : labels)
    if (label < 0 || label >= k)
      throw DataError("cross_entropy: label " + std::to_string(label) + " out of range [0, " +
                      std::to_string(k) + ")");

  std::vector<T> probs(static_cast<size_t>(b) * k);
  const T* pl = logits.data();
  T total = 0;
  for (int64_t i = 0; i < b; ++i) {
    const T* row = pl + i * k;
    T mx = row[0];
    for (int64_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    T denom = 0;
    for (int64_t j = 0; j < k; ++j) {
      const T e = std::exp(row[j] - mx);
      probs[i * k + j] = e;
      denom += e;
    }
    for (int64_t j = 0; j < k; ++j) probs[i * k + j] /= denom;
    total += -(row[labels[static_cast<size_t>(i)]] - mx - std::log(denom));
  }
  Tensor<T> out = Tensor<T>::scalar(total / static_cast<T>(b));
  check_finite(out, "cross_entropy");
  if (tracked<T>({&logits})) {
    out.set_requires_grad(true);
    record<T>([logits, out, labels, probs = std::move(probs), b, k]() mutable {
      const auto* g = out.grad();
      if (!g) return;
      const T gv = (*g)[0] / static_cast<T>(b);
      T* gl = logits.grad_data();
      for (int64_t i = 0; i < b; ++i)
        for (int64_t j = 0; j < k; ++j)
          gl[i * k + j] +=
              gv * (probs[i * k + j] - (j == labels[static_cast<size_t>(i)] ? T(1) : T(0)));
    });
  }
  return out;
}

template <typename T>
Tensor<T> mse_loss(Tensor<T> pred, Tensor<T> target) {
  require_same_shape(pred, target, "mse_loss");
  const int64_t n = pred.numel();
  const T* pp = pred.data();
  const T* pt = target.data();
  T acc = 0;
  for (int64_t i = 0; i < n; ++i) {
    const T d = pp[i] - pt[i];
    acc += d * d;
  }
  Tensor<T> out = Tensor<T>::scalar(acc / static_cast<T>(n));
  check_finite(out, "mse_loss");
  if (tracked<T>({&pred, &target})) {
    out.set_requires_grad(true);
    record<T>([pred, target, out, n]() mutable {
      const auto* g = out.grad();
      if (!g) return;
      const T gv = (*g)[0] * T(2) / static_cast<T>(n);
      const T* pp = pred.data();
      const T* pt = target.data();
      if (pred.requires_grad()) {
        T* gp = pred.grad_data();
        for (int64_t i = 0; i < n; ++i) gp[i] += gv * (pp[i] - pt[i]);
      }
      if (target.requires_grad()) {
        T* gt = target.grad_data();
        for (int64_t i = 0; i < n; ++i) gt[i] -= gv * (pp[i] - pt[i]);
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// explicit instantiation
// ---------------------------------------------------------------------------

#define AUDRON_INSTANTIATE_OPS(T)                                                              \
  template class Tensor<T>;                                                                    \
  template class Graph<T>;                                                                     \
  template Tensor<T> add(Tensor<T>, Tensor<T>);                                  \
  template Tensor<T> mul(Tensor<T>, Tensor<T>);                                  \
  template Tensor<T> scale(Tensor<T>, T);                                               \
  template Tensor<T> relu(Tensor<T>);                                                   \
  template Tensor<T> tanh(Tensor<T>);                                                   \
  template Tensor<T> sigmoid(Tensor<T>);                                                \
  template Tensor<T> matmul(Tensor<T>, Tensor<T>);                               \
  template Tensor<T> linear(Tensor<T>, Tensor<T>, Tensor<T>);             \
  template Tensor<T> conv1d(Tensor<T>, Tensor<T>, Tensor<T>, int, int,    \
                            PadMode);                                                          \
  template Tensor<T> conv2d(Tensor<T>, Tensor<T>, Tensor<T>, int, int,    \
                            PadMode);                                                          \
  template Tensor<T> maxpool2d(Tensor<T>);                                              \
  template Tensor<T> avgpool1d(Tensor<T>, int);                                         \
  template Tensor<T> upsample1d_nearest(Tensor<T>, int);                                \
  template Tensor<T> reshape(Tensor<T>, Shape);                                         \
  template Tensor<T> concat(std::vector<Tensor<T>>, int);                               \
  template std::vector<Tensor<T>> split(Tensor<T>, int, const std::vector<int64_t>&);   \
  template Tensor<T> reduce_mean(Tensor<T>, int);                                       \
  template Tensor<T> sum_all(Tensor<T>);                                                \
  template Tensor<T> softmax(Tensor<T>, int);                                           \
  template Tensor<T> batchnorm(Tensor<T>, Tensor<T>, Tensor<T>,           \
                               Tensor<T>&, Tensor<T>&, bool, T, T, bool);                      \
  template Tensor<T> dropout(Tensor<T>, double, bool, uint64_t);                        \
  template std::pair<Tensor<T>, Tensor<T>> lstm_cell(Tensor<T>, Tensor<T>,      \
                                                     Tensor<T>, Tensor<T>,      \
                                                     Tensor<T>, Tensor<T>);     \
  template Tensor<T> weighted_time_pool(Tensor<T>, Tensor<T>);                   \
  template Tensor<T> cross_entropy(Tensor<T>, const std::vector<int>&);                 \
  template Tensor<T> mse_loss(Tensor<T>, Tensor<T>);

AUDRON_INSTANTIATE_OPS(float)
AUDRON_INSTANTIATE_OPS(double)

}  // namespace audron
