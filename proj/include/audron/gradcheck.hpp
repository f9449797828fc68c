#ifndef AUDRON_GRADCHECK_HPP
#define AUDRON_GRADCHECK_HPP

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "audron/tensor.hpp"

namespace audron {

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_err = 0.0;

  bool pass(double tol) const { return max_rel_err <= tol; }
  std::string summary() const;
};

// Relative error between an analytic and a finite-difference gradient
// element. Pairs below the noise floor count as exact so true-zero
// gradients do not trip on fd round-off.
double grad_rel_err(double analytic, double numeric);

// Central-difference check of d(loss)/d(param) for every named parameter.
// loss_fn must rebuild the scalar loss from the current parameter values and
// be deterministic (freeze dropout seeds). Analytic gradients come from one
// taped backward pass; numeric ones from (f(x+h) - f(x-h)) / 2h evaluated
// without a graph. max_elems_per_param < 0 checks every element, otherwise a
// seeded subsample of that size per tensor.
template <typename T>
GradCheckReport gradcheck(const std::function<Tensor<T>()>& loss_fn,
                          const std::vector<std::pair<std::string, Tensor<T>>>& params,
                          double h = 1e-5, int max_elems_per_param = -1, uint64_t seed = 0);

}  // namespace audron

#endif  // AUDRON_GRADCHECK_HPP
