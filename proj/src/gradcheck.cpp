#include "audron/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "audron/rng.hpp"

namespace audron {

std::string GradCheckReport::summary() const {
  std::string out;
  char buf[160];
  for (const auto& e : entries) {
    std::snprintf(buf, sizeof(buf), "%-32s max_rel_err=%.3e\n", e.name.c_str(), e.max_rel_err);
    out += buf;
  }
  return out;
}

double grad_rel_err(double analytic, double numeric) {
  const double m = std::max(std::fabs(analytic), std::fabs(numeric));
  if (m < 1e-7) return 0.0;
  return std::fabs(analytic - numeric) / m;
}

template <typename T>
GradCheckReport gradcheck(const std::function<Tensor<T>()>& loss_fn,
                          const std::vector<std::pair<std::string, Tensor<T>>>& params,
                          double h, int max_elems_per_param, uint64_t seed) {
  // Analytic pass.
  for (const auto& [name, t] : params) {
    (void)name;
    Tensor<T>(t).zero_grad();  // copies share the payload
  }
  std::vector<std::vector<T>> analytic;
  {
    Graph<T> g;
    typename Graph<T>::Scope scope(g);
    Tensor<T> loss = loss_fn();
    g.backward(loss);
  }
  for (const auto& [name, t] : params) {
    (void)name;
    const auto* g = t.grad();
    analytic.push_back(g ? *g : std::vector<T>(static_cast<size_t>(t.numel()), T(0)));
  }

  GradCheckReport report;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Tensor<T> t = params[pi].second;
    const int64_t n = t.numel();
    std::vector<int64_t> idx;
    if (max_elems_per_param < 0 || n <= max_elems_per_param) {
      idx.resize(static_cast<size_t>(n));
      for (int64_t i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
    } else {
      Rng rng(split_stream(seed, pi));
      for (int i = 0; i < max_elems_per_param; ++i)
        idx.push_back(static_cast<int64_t>(rng.uniform_int(static_cast<uint64_t>(n))));
      std::sort(idx.begin(), idx.end());
      idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
    }

    double worst = 0.0;
    for (int64_t i : idx) {
      T* v = t.data() + i;
      const T saved = *v;
      *v = saved + static_cast<T>(h);
      const double f_plus = static_cast<double>(loss_fn().item());
      *v = saved - static_cast<T>(h);
      const double f_minus = static_cast<double>(loss_fn().item());
      *v = saved;
      const double numeric = (f_plus - f_minus) / (2.0 * h);
      worst = std::max(worst,
                       grad_rel_err(static_cast<double>(analytic[pi][static_cast<size_t>(i)]),
                                    numeric));
    }
    report.entries.push_back({params[pi].first, worst});
    report.max_rel_err = std::max(report.max_rel_err, worst);
  }
  return report;
}

template GradCheckReport gradcheck(const std::function<Tensor<float>()>&,
                                   const std::vector<std::pair<std::string, Tensor<float>>>&,
                                   double, int, uint64_t);
template GradCheckReport gradcheck(const std::function<Tensor<double>()>&,
                                   const std::vector<std::pair<std::string, Tensor<double>>>&,
                                   double, int, uint64_t);

}  // namespace audron
