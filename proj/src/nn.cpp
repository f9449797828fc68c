#include "audron/nn.hpp"

#include <algorithm>
#include <cmath>

#include "audron/rng.hpp"

namespace audron {

template <typename T>
Tensor<T> ParamStore<T>::add(const std::string& name, Shape shape, InitSpec init,
                             int64_t fan_in) {
  if (index_.count(name)) throw ParameterError("param '" + name + "' registered twice");
  Tensor<T> t = Tensor<T>::zeros(shape, /*requires_grad=*/true);
  switch (init) {
    case InitSpec::Zeros:
      break;
    case InitSpec::Ones:
      std::fill(t.values().begin(), t.values().end(), T(1));
      break;
    case InitSpec::UniformFanIn: {
      if (fan_in <= 0) {
        fan_in = 1;
        for (size_t d = 1; d < shape.size(); ++d) fan_in *= shape[d];
      }
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      Rng rng(split_stream(seed_, fnv1a64(name)));
      for (auto& v : t.values()) v = static_cast<T>(rng.uniform(-bound, bound));
      break;
    }
  }
  index_[name] = entries_.size();
  entries_.push_back({name, t, init, /*trainable=*/true});
  return t;
}

template <typename T>
Tensor<T> ParamStore<T>::add_buffer(const std::string& name, Shape shape, T fill) {
  if (index_.count(name)) throw ParameterError("param '" + name + "' registered twice");
  Tensor<T> t = Tensor<T>::full(shape, fill);
  index_[name] = entries_.size();
  entries_.push_back({name, t, InitSpec::Zeros, /*trainable=*/false});
  return t;
}

template <typename T>
Tensor<T> ParamStore<T>::find(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ParameterError("param '" + name + "' not found");
  return entries_[it->second].tensor;
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>>> ParamStore<T>::named_trainable() const {
  std::vector<std::pair<std::string, Tensor<T>>> out;
  for (const auto& e : entries_)
    if (e.trainable) out.emplace_back(e.name, e.tensor);
  return out;
}

template <typename T>
void ParamStore<T>::zero_grad() {
  for (auto& e : entries_) e.tensor.zero_grad();
}

template <typename T>
int64_t ParamStore<T>::trainable_count() const {
  int64_t n = 0;
  for (const auto& e : entries_)
    if (e.trainable) n += e.tensor.numel();
  return n;
}

template <typename T>
std::vector<CheckpointEntry> ParamStore<T>::to_checkpoint() const {
  std::vector<CheckpointEntry> out;
  for (const auto& e : entries_) {
    CheckpointEntry ce;
    ce.name = e.name;
    ce.shape = e.tensor.shape();
    ce.values.reserve(static_cast<size_t>(e.tensor.numel()));
    for (const T v : e.tensor.values()) ce.values.push_back(static_cast<float>(v));
    out.push_back(std::move(ce));
  }
  return out;
}

template <typename T>
void ParamStore<T>::from_checkpoint(const std::vector<CheckpointEntry>& entries) {
  std::map<std::string, const CheckpointEntry*> by_name;
  for (const auto& e : entries) by_name[e.name] = &e;
  for (auto& e : entries_) {
    auto it = by_name.find(e.name);
    if (it == by_name.end())
      throw FormatError("checkpoint is missing parameter '" + e.name + "'");
    const CheckpointEntry& ce = *it->second;
    if (ce.shape != e.tensor.shape())
      throw FormatError("checkpoint parameter '" + e.name + "' has shape " +
                        shape_str(ce.shape) + ", model expects " +
                        shape_str(e.tensor.shape()));
    for (size_t i = 0; i < ce.values.size(); ++i)
      e.tensor.values()[i] = static_cast<T>(ce.values[i]);
    by_name.erase(it);
  }
  if (!by_name.empty())
    throw FormatError("checkpoint has unknown parameter '" + by_name.begin()->first + "'");
}

template <typename T>
LinearLayer<T>::LinearLayer(ParamStore<T>& ps, const std::string& name, int64_t in,
                            int64_t out) {
  w = ps.add(name + ".w", {out, in}, InitSpec::UniformFanIn, in);
  b = ps.add(name + ".b", {out}, InitSpec::Zeros);
}

template <typename T>
Conv1dLayer<T>::Conv1dLayer(ParamStore<T>& ps, const std::string& name, int64_t cin,
                            int64_t cout, int64_t k, int stride_, int pad_, PadMode mode_) {
  w = ps.add(name + ".w", {cout, cin, k}, InitSpec::UniformFanIn, cin * k);
  b = ps.add(name + ".b", {cout}, InitSpec::Zeros);
  stride = stride_;
  pad = pad_;
  mode = mode_;
}

template <typename T>
Conv2dLayer<T>::Conv2dLayer(ParamStore<T>& ps, const std::string& name, int64_t cin,
                            int64_t cout, int64_t k, int stride_, int pad_) {
  w = ps.add(name + ".w", {cout, cin, k, k}, InitSpec::UniformFanIn, cin * k * k);
  b = ps.add(name + ".b", {cout}, InitSpec::Zeros);
  stride = stride_;
  pad = pad_;
}

template <typename T>
BatchNormLayer<T>::BatchNormLayer(ParamStore<T>& ps, const std::string& name,
                                  int64_t features) {
  gamma = ps.add(name + ".gamma", {features}, InitSpec::Ones);
  beta = ps.add(name + ".beta", {features}, InitSpec::Zeros);
  running_mean = ps.add_buffer(name + ".running_mean", {features}, T(0));
  running_var = ps.add_buffer(name + ".running_var", {features}, T(1));
}

template <typename T>
LstmLayer<T>::LstmLayer(ParamStore<T>& ps, const std::string& name, int64_t input,
                        int64_t hidden_) {
  hidden = hidden_;
  w_ih = ps.add(name + ".w_ih", {4 * hidden, input}, InitSpec::UniformFanIn, input);
  w_hh = ps.add(name + ".w_hh", {4 * hidden, hidden}, InitSpec::UniformFanIn, hidden);
  b = ps.add(name + ".b", {4 * hidden}, InitSpec::Zeros);
  // forget-gate bias offset keeps early gradients alive
  for (int64_t j = 0; j < hidden; ++j) b.values()[static_cast<size_t>(hidden + j)] += T(1);
}

template <typename T>
std::vector<Tensor<T>> LstmLayer<T>::run(const std::vector<Tensor<T>>& xs,
                                         bool backwards) const {
  if (xs.empty()) throw DimensionError("lstm: need at least one timestep");
  const int64_t batch = xs[0].dim(0);
  Tensor<T> h = Tensor<T>::zeros({batch, hidden});
  Tensor<T> c = Tensor<T>::zeros({batch, hidden});
  std::vector<Tensor<T>> out(xs.size());
  for (size_t s = 0; s < xs.size(); ++s) {
    const size_t t = backwards ? xs.size() - 1 - s : s;
    auto [h2, c2] = lstm_cell(xs[t], h, c, w_ih, w_hh, b);
    h = h2;
    c = c2;
    out[t] = h;
  }
  return out;
}

#define AUDRON_INSTANTIATE_NN(T)    \
  template class ParamStore<T>;     \
  template struct LinearLayer<T>;   \
  template struct Conv1dLayer<T>;   \
  template struct Conv2dLayer<T>;   \
  template struct BatchNormLayer<T>; \
  template struct LstmLayer<T>;

AUDRON_INSTANTIATE_NN(float)
AUDRON_INSTANTIATE_NN(double)

}  // namespace audron
