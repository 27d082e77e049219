#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "cnetdst/errors.hpp"
#include "cnetdst/rng.hpp"
#include "cnetdst/tensor.hpp"

namespace cnetdst {

// Test-only negative control: when set, the tanh backward rule is wrong by a
// factor, so gradient checks must fail. Exercised by `gradcheck --corrupt-backward`.
namespace test_hooks {
inline bool corrupt_tanh_backward = false;
}

enum class Activation { kSigmoid, kTanh, kRelu };

// Node handle on a GradientTape. Valid only for the tape that produced it.
using ValueId = std::int32_t;

// Reverse-mode differentiation over dense tensors. Nodes are recorded in
// creation order, which is a topological order by construction; backward()
// walks that order once in reverse. A tape is confined to one thread.
class Tape {
 public:
  Tape() = default;

  void reserve(std::size_t nodes) { nodes_.reserve(nodes); }
  std::size_t size() const { return nodes_.size(); }

  const Tensor& value(ValueId id) const { return nodes_[id].value; }
  const Tensor& grad(ValueId id) const { return nodes_[id].grad; }

  // Inputs and parameters. No backward rule; gradients accumulate here.
  ValueId leaf(Tensor value);

  // w (m,n) times x (n) -> (m).
  ValueId matvec(ValueId w, ValueId x);

  // w*x + b.
  ValueId affine(ValueId w, ValueId x, ValueId b);

  // w*x + u*h + b. The preactivation shape shared by the GRU gates and the
  // turn combiner.
  ValueId affine2(ValueId w, ValueId x, ValueId u, ValueId h, ValueId b);

  ValueId add(ValueId a, ValueId b);
  ValueId mul(ValueId a, ValueId b);   // element-wise
  ValueId one_minus(ValueId a);        // 1 - a, element-wise
  ValueId scale(ValueId a, double c);

  ValueId activation(ValueId x, Activation kind);

  // Max-subtracted stable softmax over a vector.
  ValueId softmax(ValueId x);

  // -log(probs[gold] + 1e-12). probs is expected to come from softmax.
  ValueId cross_entropy(ValueId probs, std::size_t gold_index);

  // Binary cross-entropy on a length-1 logit against target in {0,1},
  // computed in the numerically stable softplus form.
  ValueId bce_with_logit(ValueId logit, double target);

  // Row r of a matrix node as a vector; the gradient scatters back into the
  // row (embedding lookup).
  ValueId row(ValueId matrix, std::size_t r);

  // Inverted dropout: zero with probability rate, survivors scaled by
  // 1/(1-rate). Identity when training is false or rate is 0.
  ValueId dropout(ValueId x, double rate, Rng& rng, bool training);

  // Mean of same-shaped vectors.
  ValueId average(const std::vector<ValueId>& xs);

  // Sum of w[i] * xs[i] with constant weights.
  ValueId weighted_sum(const std::vector<ValueId>& xs,
                       const std::vector<double>& weights);

  ValueId sum_scalars(const std::vector<ValueId>& xs);

  // lambda * sum of squared entries over the given (weight-matrix) nodes.
  ValueId l2_penalty(const std::vector<ValueId>& weights, double lambda);

  // Seeds d(loss)/d(loss) = 1 and accumulates gradients into every node
  // reachable from loss. loss must be a scalar (size 1).
  void backward(ValueId loss);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    // Receives the node's accumulated output gradient; adds contributions to
    // parents. Null for leaves.
    std::function<void(Tape&, const Tensor&)> backward;
  };

  ValueId push(Tensor value, std::function<void(Tape&, const Tensor&)> bw);
  Tensor& grad_ref(ValueId id) { return nodes_[id].grad; }

  std::vector<Node> nodes_;
};

// Free-function spellings used throughout the model code.
inline ValueId apply_activation(Tape& t, ValueId x, Activation kind) {
  return t.activation(x, kind);
}

}  // namespace cnetdst
