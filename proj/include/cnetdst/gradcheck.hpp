#pragma once

#include <functional>
#include <string>
#include <vector>

#include "cnetdst/adam.hpp"
#include "cnetdst/tensor.hpp"

namespace cnetdst {

// The loss callable evaluates the objective at the current parameter values.
// When grads_out is non-null it must also fill one gradient tensor per
// registered parameter, in registration order.
using LossFn = std::function<double(std::vector<Tensor>* grads_out)>;

struct GradCheckGroup {
  std::string name;
  double max_rel_error = 0.0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::vector<GradCheckGroup> groups;
};

// Central-difference check of the tape gradients: for every coordinate of
// every parameter, compares dL/dp against (f(p+h) - f(p-h)) / 2h with the
// relative error |a-b| / max(|a|, |b|, 1e-8). The loss must be deterministic;
// this is enforced by evaluating it twice up front and requiring identical
// results.
GradCheckReport grad_check(const LossFn& loss_fn,
                           const std::vector<NamedParam>& params, double step);

}  // namespace cnetdst
