#ifndef AUDRON_TENSOR_HPP
#define AUDRON_TENSOR_HPP

#include <cstdint>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "audron/common.hpp"

namespace audron {

// N-dimensional row-major numeric array participating in a reverse-mode
// gradient graph. Copies share the payload; the gradient buffer lives next
// to the values and survives graph teardown.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value);
  static Tensor from(Shape shape, std::vector<T> values, bool requires_grad = false);
  static Tensor scalar(T value);

  bool defined() const { return static_cast<bool>(p_); }
  const Shape& shape() const { return p_->shape; }
  int rank() const { return static_cast<int>(p_->shape.size()); }
  int64_t dim(int i) const { return p_->shape[static_cast<size_t>(i)]; }
  int64_t numel() const { return static_cast<int64_t>(p_->values.size()); }

  T* data() { return p_->values.data(); }
  const T* data() const { return p_->values.data(); }
  std::vector<T>& values() { return p_->values; }
  const std::vector<T>& values() const { return p_->values; }

  bool requires_grad() const { return p_ && p_->requires_grad; }
  void set_requires_grad(bool rg) { p_->requires_grad = rg; }

  // Allocates a zero gradient on first use.
  T* grad_data();
  // nullptr when no gradient has been accumulated.
  const std::vector<T>* grad() const;
  void zero_grad();

  T item() const;  // value of a one-element tensor

  bool same_payload(const Tensor& other) const { return p_ == other.p_; }

 private:
  struct Payload {
    Shape shape;
    std::vector<T> values;
    std::vector<T> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Payload> p_;
};

// Tape of op records in execution (= topological) order. backward() seeds
// d(loss)/d(loss) = 1 and replays the tape in exact reverse order; each
// record adds into its inputs' gradient buffers, so fan-out accumulates
// additively. A graph instance is single-threaded; activate one per thread
// via Scope.
template <typename T>
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  class Scope {
   public:
    explicit Scope(Graph& g);
    ~Scope();

   private:
    Graph* prev_;
  };

  static Graph* active();

  void record(std::function<void()> backward_fn) { tape_.push_back(std::move(backward_fn)); }
  size_t node_count() const { return tape_.size(); }
  void clear() { tape_.clear(); }

  // loss must be scalar; every requires_grad tensor reachable from loss
  // ends up holding dLoss/dTensor.
  void backward(Tensor<T> loss);

 private:
  std::vector<std::function<void()>> tape_;
};

enum class PadMode { Zero, Replicate };

// ---- elementwise ----
template <typename T> Tensor<T> add(Tensor<T> a, Tensor<T> b);
template <typename T> Tensor<T> mul(Tensor<T> a, Tensor<T> b);
template <typename T> Tensor<T> scale(Tensor<T> a, T c);
template <typename T> Tensor<T> relu(Tensor<T> a);
template <typename T> Tensor<T> tanh(Tensor<T> a);
template <typename T> Tensor<T> sigmoid(Tensor<T> a);

// ---- linear algebra ----
template <typename T> Tensor<T> matmul(Tensor<T> a, Tensor<T> b);
// x [B,I] * W^T [I,O] + bias [O] -> [B,O]
template <typename T>
Tensor<T> linear(Tensor<T> x, Tensor<T> w, Tensor<T> bias);

// ---- convolution / pooling ----
// x [B,Cin,L], w [Cout,Cin,k], bias [Cout]
template <typename T>
Tensor<T> conv1d(Tensor<T> x, Tensor<T> w, Tensor<T> bias, int stride,
                 int pad, PadMode mode = PadMode::Zero);
// x [B,Cin,H,W], w [Cout,Cin,kh,kw], bias [Cout]
template <typename T>
Tensor<T> conv2d(Tensor<T> x, Tensor<T> w, Tensor<T> bias, int stride,
                 int pad, PadMode mode = PadMode::Zero);
// 2x2/stride-2; odd spatial dims are padded right by replication first.
template <typename T> Tensor<T> maxpool2d(Tensor<T> x);
// non-overlapping windows; L must be divisible by k.
template <typename T> Tensor<T> avgpool1d(Tensor<T> x, int k);
template <typename T> Tensor<T> upsample1d_nearest(Tensor<T> x, int factor);

// ---- shape ----
template <typename T> Tensor<T> reshape(Tensor<T> x, Shape new_shape);
template <typename T> Tensor<T> concat(std::vector<Tensor<T>> xs, int axis);
template <typename T>
std::vector<Tensor<T>> split(Tensor<T> x, int axis, const std::vector<int64_t>& sizes);

// ---- reductions / normalization ----
template <typename T> Tensor<T> reduce_mean(Tensor<T> x, int axis);
template <typename T> Tensor<T> sum_all(Tensor<T> x);
template <typename T> Tensor<T> softmax(Tensor<T> x, int axis);

// x [B,F]; gamma/beta [F]; running stats updated in place in train mode.
// frozen forces running statistics even in train mode.
template <typename T>
Tensor<T> batchnorm(Tensor<T> x, Tensor<T> gamma, Tensor<T> beta,
                    Tensor<T>& running_mean, Tensor<T>& running_var, bool train,
                    T momentum = T(0.1), T eps = T(1e-5), bool frozen = false);

// Seeded mask, scaled by 1/(1-p) in train mode; identity in eval mode.
template <typename T>
Tensor<T> dropout(Tensor<T> x, double p, bool train, uint64_t seed);

// ---- recurrent ----
// Gate order (input, forget, cell, output). x [B,I], h/c [B,H],
// w_ih [4H,I], w_hh [4H,H], bias [4H]. Returns (h, c).
template <typename T>
std::pair<Tensor<T>, Tensor<T>> lstm_cell(Tensor<T> x, Tensor<T> h_prev,
                                          Tensor<T> c_prev, Tensor<T> w_ih,
                                          Tensor<T> w_hh, Tensor<T> bias);

// h [B,F,D], a [B,F] -> sum_f a[b,f] * h[b,f,:] in [B,D]
template <typename T>
Tensor<T> weighted_time_pool(Tensor<T> h, Tensor<T> a);

// ---- losses ----
// Mean over the batch of -log softmax(logits)[label]; log-softmax uses
// max-subtraction stabilization.
template <typename T>
Tensor<T> cross_entropy(Tensor<T> logits, const std::vector<int>& labels);
template <typename T>
Tensor<T> mse_loss(Tensor<T> pred, Tensor<T> target);

}  // namespace audron

#endif  // AUDRON_TENSOR_HPP
