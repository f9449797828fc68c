#ifndef AUDRON_NN_HPP
#define AUDRON_NN_HPP

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "audron/checkpoint.hpp"
#include "audron/tensor.hpp"

namespace audron {

enum class InitSpec { UniformFanIn, Zeros, Ones };

// Named model state. Trainable entries get gradients and optimizer updates;
// buffers (batchnorm running stats) are saved/loaded but never optimized.
template <typename T>
struct ParamEntry {
  std::string name;
  Tensor<T> tensor;
  InitSpec init = InitSpec::UniformFanIn;
  bool trainable = true;
};

// Registry with unique names and deterministic per-name initialization:
// each parameter draws from its own stream keyed by (seed, fnv1a(name)), so
// init does not depend on registration order and shared branches init
// identically across ablation configs.
template <typename T>
class ParamStore {
 public:
  explicit ParamStore(uint64_t seed) : seed_(seed) {}

  // fan_in <= 0 derives it from the shape (all dims but the first).
  Tensor<T> add(const std::string& name, Shape shape, InitSpec init, int64_t fan_in = 0);
  Tensor<T> add_buffer(const std::string& name, Shape shape, T fill);

  std::vector<ParamEntry<T>>& entries() { return entries_; }
  const std::vector<ParamEntry<T>>& entries() const { return entries_; }
  Tensor<T> find(const std::string& name) const;

  std::vector<std::pair<std::string, Tensor<T>>> named_trainable() const;
  void zero_grad();
  int64_t trainable_count() const;

  std::vector<CheckpointEntry> to_checkpoint() const;
  // Strict by-name load; missing or extra names and shape mismatches throw.
  void from_checkpoint(const std::vector<CheckpointEntry>& entries);

  uint64_t seed() const { return seed_; }

 private:
  uint64_t seed_;
  std::vector<ParamEntry<T>> entries_;
  std::map<std::string, size_t> index_;
};

// Thin layer wrappers owning their parameters.

template <typename T>
struct LinearLayer {
  Tensor<T> w, b;
  LinearLayer() = default;
  LinearLayer(ParamStore<T>& ps, const std::string& name, int64_t in, int64_t out);
  Tensor<T> forward(const Tensor<T>& x) const { return linear(x, w, b); }
};

template <typename T>
struct Conv1dLayer {
  Tensor<T> w, b;
  int stride = 1, pad = 0;
  PadMode mode = PadMode::Zero;
  Conv1dLayer() = default;
  Conv1dLayer(ParamStore<T>& ps, const std::string& name, int64_t cin, int64_t cout, int64_t k,
              int stride, int pad, PadMode mode = PadMode::Zero);
  Tensor<T> forward(const Tensor<T>& x) const { return conv1d(x, w, b, stride, pad, mode); }
};

template <typename T>
struct Conv2dLayer {
  Tensor<T> w, b;
  int stride = 1, pad = 0;
  Conv2dLayer() = default;
  Conv2dLayer(ParamStore<T>& ps, const std::string& name, int64_t cin, int64_t cout, int64_t k,
              int stride, int pad);
  Tensor<T> forward(const Tensor<T>& x) const { return conv2d(x, w, b, stride, pad); }
};

template <typename T>
struct BatchNormLayer {
  Tensor<T> gamma, beta, running_mean, running_var;
  T momentum = T(0.1);
  bool frozen = false;  // forces running stats even in train mode
  BatchNormLayer() = default;
  BatchNormLayer(ParamStore<T>& ps, const std::string& name, int64_t features);
  Tensor<T> forward(const Tensor<T>& x, bool train) {
    return batchnorm(x, gamma, beta, running_mean, running_var, train, momentum, T(1e-5),
                     frozen);
  }
};

// One direction of an LSTM; gate order (i, f, g, o), forget bias +1.
template <typename T>
struct LstmLayer {
  Tensor<T> w_ih, w_hh, b;
  int64_t hidden = 0;
  LstmLayer() = default;
  LstmLayer(ParamStore<T>& ps, const std::string& name, int64_t input, int64_t hidden);
  // xs: one [batch, input] tensor per timestep; returns per-step h.
  std::vector<Tensor<T>> run(const std::vector<Tensor<T>>& xs, bool backwards) const;
};

}  // namespace audron

#endif  // AUDRON_NN_HPP
