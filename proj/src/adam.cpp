#include "cnetdst/adam.hpp"

#include <cmath>

namespace cnetdst {

AdamState AdamState::init(const std::vector<NamedParam>& params,
                          const AdamConfig& config) {
  AdamState state;
  state.config = config;
  state.first_moment.reserve(params.size());
  state.second_moment.reserve(params.size());
  for (const NamedParam& p : params) {
    state.first_moment.push_back(p.tensor->zeros_like());
    state.second_moment.push_back(p.tensor->zeros_like());
  }
  return state;
}

void adam_step(const std::vector<NamedParam>& params,
               const std::vector<Tensor>& grads, AdamState& state) {
  if (params.size() != grads.size() ||
      params.size() != state.first_moment.size()) {
    throw DataError("adam_step: parameter/gradient/state count mismatch");
  }
  state.step_count += 1;
  const AdamConfig& c = state.config;
  const double bias1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step_count));
  const double bias2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step_count));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = *params[k].tensor;
    const Tensor& g = grads[k];
    if (!p.same_shape(g)) {
      throw DataError("adam_step: gradient shape mismatch for " +
                      params[k].name);
    }
    Tensor& m = state.first_moment[k];
    Tensor& v = state.second_moment[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g[i];
      if (!std::isfinite(gi)) {
        throw TrainError("adam_step: non-finite gradient in parameter " +
                         params[k].name);
      }
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * gi;
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * gi * gi;
      const double m_hat = m[i] / bias1;
      const double v_hat = v[i] / bias2;
      p[i] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
    }
  }
}

}  // namespace cnetdst
