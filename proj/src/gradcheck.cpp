#include "cnetdst/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "cnetdst/errors.hpp"

namespace cnetdst {

GradCheckReport grad_check(const LossFn& loss_fn,
                           const std::vector<NamedParam>& params,
                           double step) {
  if (step <= 0.0) throw ConfigError("grad_check: step must be > 0");

  std::vector<Tensor> grads;
  const double base = loss_fn(&grads);
  const double repeat = loss_fn(nullptr);
  if (base != repeat) {
    throw TrainError("grad_check: loss function is not deterministic (" +
                     std::to_string(base) + " vs " + std::to_string(repeat) +
                     ")");
  }
  if (grads.size() != params.size()) {
    throw DataError("grad_check: expected " + std::to_string(params.size()) +
                    " gradient tensors, got " + std::to_string(grads.size()));
  }

  GradCheckReport report;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = *params[k].tensor;
    if (!p.same_shape(grads[k])) {
      throw DataError("grad_check: gradient shape mismatch for " +
                      params[k].name);
    }
    GradCheckGroup group{params[k].name, 0.0};
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double saved = p[i];
      p[i] = saved + step;
      const double plus = loss_fn(nullptr);
      p[i] = saved - step;
      const double minus = loss_fn(nullptr);
      p[i] = saved;
      const double fd = (plus - minus) / (2.0 * step);
      const double analytic = grads[k][i];
      const double denom =
          std::max({std::abs(fd), std::abs(analytic), 1e-8});
      const double rel = std::abs(fd - analytic) / denom;
      if (rel > group.max_rel_error) group.max_rel_error = rel;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param = params[k].name;
      }
    }
    report.groups.push_back(std::move(group));
  }
  return report;
}

}  // namespace cnetdst
