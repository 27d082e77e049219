#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "cnetdst/errors.hpp"
#include "cnetdst/tensor.hpp"

namespace cnetdst {

// A parameter tensor with a stable name, used for optimizer state, gradient
// reports and checkpoint records.
struct NamedParam {
  std::string name;
  Tensor* tensor = nullptr;
  // Weight matrices participate in the l2 penalty; biases and embeddings do not.
  bool is_weight_matrix = false;
};

struct AdamConfig {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Per-parameter first/second moment estimates plus the shared step counter.
struct AdamState {
  AdamConfig config;
  std::size_t step_count = 0;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;

  static AdamState init(const std::vector<NamedParam>& params,
                        const AdamConfig& config);
};

// One bias-corrected Adam update, in place. grads is parallel to params.
// A non-finite gradient raises TrainError naming the offending parameter.
void adam_step(const std::vector<NamedParam>& params,
               const std::vector<Tensor>& grads, AdamState& state);

}  // namespace cnetdst
