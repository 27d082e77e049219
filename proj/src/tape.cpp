#include "cnetdst/tape.hpp"

#include <algorithm>
#include <cmath>

namespace cnetdst {

namespace {

void check_vector(const Tensor& t, const char* what) {
  if (!t.is_vector()) throw DataError(std::string(what) + ": expected a vector");
}

double stable_sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

ValueId Tape::push(Tensor value, std::function<void(Tape&, const Tensor&)> bw) {
  Node node;
  node.grad = value.zeros_like();
  node.value = std::move(value);
  node.backward = std::move(bw);
  nodes_.push_back(std::move(node));
  return static_cast<ValueId>(nodes_.size() - 1);
}

ValueId Tape::leaf(Tensor value) { return push(std::move(value), nullptr); }

ValueId Tape::matvec(ValueId w, ValueId x) {
  const Tensor& wv = value(w);
  const Tensor& xv = value(x);
  if (!wv.is_matrix() || !xv.is_vector() || wv.cols() != xv.size()) {
    throw DataError("matvec: shape mismatch " + shape_string(wv) + " * " +
                    shape_string(xv));
  }
  const std::size_t m = wv.rows(), n = wv.cols();
  Tensor out = Tensor::zeros_vector(m);
  for (std::size_t r = 0; r < m; ++r) {
    double acc = 0.0;
    const double* wr = wv.data.data() + r * n;
    for (std::size_t c = 0; c < n; ++c) acc += wr[c] * xv[c];
    out[r] = acc;
  }
  return push(std::move(out), [w, x, m, n](Tape& t, const Tensor& g) {
    const Tensor& wv = t.value(w);
    const Tensor& xv = t.value(x);
    Tensor& gw = t.grad_ref(w);
    Tensor& gx = t.grad_ref(x);
    for (std::size_t r = 0; r < m; ++r) {
      const double gr = g[r];
      double* gwr = gw.data.data() + r * n;
      const double* wr = wv.data.data() + r * n;
      for (std::size_t c = 0; c < n; ++c) {
        gwr[c] += gr * xv[c];
        gx[c] += gr * wr[c];
      }
    }
  });
}

ValueId Tape::affine(ValueId w, ValueId x, ValueId b) {
  const Tensor& wv = value(w);
  const Tensor& xv = value(x);
  const Tensor& bv = value(b);
  if (!wv.is_matrix() || wv.cols() != xv.size() || bv.size() != wv.rows()) {
    throw DataError("affine: shape mismatch");
  }
  const std::size_t m = wv.rows(), n = wv.cols();
  Tensor out = Tensor::zeros_vector(m);
  for (std::size_t r = 0; r < m; ++r) {
    double acc = bv[r];
    const double* wr = wv.data.data() + r * n;
    for (std::size_t c = 0; c < n; ++c) acc += wr[c] * xv[c];
    out[r] = acc;
  }
  return push(std::move(out), [w, x, b, m, n](Tape& t, const Tensor& g) {
    const Tensor& wv = t.value(w);
    const Tensor& xv = t.value(x);
    Tensor& gw = t.grad_ref(w);
    Tensor& gx = t.grad_ref(x);
    Tensor& gb = t.grad_ref(b);
    for (std::size_t r = 0; r < m; ++r) {
      const double gr = g[r];
      gb[r] += gr;
      double* gwr = gw.data.data() + r * n;
      const double* wr = wv.data.data() + r * n;
      for (std::size_t c = 0; c < n; ++c) {
        gwr[c] += gr * xv[c];
        gx[c] += gr * wr[c];
      }
    }
  });
}

ValueId Tape::affine2(ValueId w, ValueId x, ValueId u, ValueId h, ValueId b) {
  const Tensor& wv = value(w);
  const Tensor& xv = value(x);
  const Tensor& uv = value(u);
  const Tensor& hv = value(h);
  const Tensor& bv = value(b);
  if (!wv.is_matrix() || !uv.is_matrix() || wv.rows() != uv.rows() ||
      wv.cols() != xv.size() || uv.cols() != hv.size() ||
      bv.size() != wv.rows()) {
    throw DataError("affine2: shape mismatch");
  }
  const std::size_t m = wv.rows(), n = wv.cols(), p = uv.cols();
  Tensor out = Tensor::zeros_vector(m);
  for (std::size_t r = 0; r < m; ++r) {
    double acc = bv[r];
    const double* wr = wv.data.data() + r * n;
    for (std::size_t c = 0; c < n; ++c) acc += wr[c] * xv[c];
    const double* ur = uv.data.data() + r * p;
    for (std::size_t c = 0; c < p; ++c) acc += ur[c] * hv[c];
    out[r] = acc;
  }
  return push(std::move(out),
              [w, x, u, h, b, m, n, p](Tape& t, const Tensor& g) {
                const Tensor& wv = t.value(w);
                const Tensor& xv = t.value(x);
                const Tensor& uv = t.value(u);
                const Tensor& hv = t.value(h);
                Tensor& gw = t.grad_ref(w);
                Tensor& gx = t.grad_ref(x);
                Tensor& gu = t.grad_ref(u);
                Tensor& gh = t.grad_ref(h);
                Tensor& gb = t.grad_ref(b);
                for (std::size_t r = 0; r < m; ++r) {
                  const double gr = g[r];
                  gb[r] += gr;
                  double* gwr = gw.data.data() + r * n;
                  const double* wr = wv.data.data() + r * n;
                  for (std::size_t c = 0; c < n; ++c) {
                    gwr[c] += gr * xv[c];
                    gx[c] += gr * wr[c];
                  }
                  double* gur = gu.data.data() + r * p;
                  const double* ur = uv.data.data() + r * p;
                  for (std::size_t c = 0; c < p; ++c) {
                    gur[c] += gr * hv[c];
                    gh[c] += gr * ur[c];
                  }
                }
              });
}

ValueId Tape::add(ValueId a, ValueId b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  if (!av.same_shape(bv)) throw DataError("add: shape mismatch");
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return push(std::move(out), [a, b](Tape& t, const Tensor& g) {
    Tensor& ga = t.grad_ref(a);
    Tensor& gb = t.grad_ref(b);
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga[i] += g[i];
      gb[i] += g[i];
    }
  });
}

ValueId Tape::mul(ValueId a, ValueId b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  if (!av.same_shape(bv)) throw DataError("mul: shape mismatch");
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return push(std::move(out), [a, b](Tape& t, const Tensor& g) {
    const Tensor& av = t.value(a);
    const Tensor& bv = t.value(b);
    Tensor& ga = t.grad_ref(a);
    Tensor& gb = t.grad_ref(b);
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga[i] += g[i] * bv[i];
      gb[i] += g[i] * av[i];
    }
  });
}

ValueId Tape::one_minus(ValueId a) {
  Tensor out = value(a);
  for (double& v : out.data) v = 1.0 - v;
  return push(std::move(out), [a](Tape& t, const Tensor& g) {
    Tensor& ga = t.grad_ref(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] -= g[i];
  });
}

ValueId Tape::scale(ValueId a, double c) {
  Tensor out = value(a);
  for (double& v : out.data) v *= c;
  return push(std::move(out), [a, c](Tape& t, const Tensor& g) {
    Tensor& ga = t.grad_ref(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += c * g[i];
  });
}

ValueId Tape::activation(ValueId x, Activation kind) {
  Tensor out = value(x);
  switch (kind) {
    case Activation::kSigmoid:
      for (double& v : out.data) v = stable_sigmoid(v);
      break;
    case Activation::kTanh:
      for (double& v : out.data) v = std::tanh(v);
      break;
    case Activation::kRelu:
      for (double& v : out.data) v = v > 0.0 ? v : 0.0;
      break;
  }
  // Backward uses the activation output, saved by value.
  Tensor saved = out;
  return push(std::move(out),
              [x, kind, saved = std::move(saved)](Tape& t, const Tensor& g) {
                Tensor& gx = t.grad_ref(x);
                switch (kind) {
                  case Activation::kSigmoid:
                    for (std::size_t i = 0; i < g.size(); ++i)
                      gx[i] += g[i] * saved[i] * (1.0 - saved[i]);
                    break;
                  case Activation::kTanh: {
                    const double fudge =
                        test_hooks::corrupt_tanh_backward ? 1.01 : 1.0;
                    for (std::size_t i = 0; i < g.size(); ++i)
                      gx[i] += fudge * g[i] * (1.0 - saved[i] * saved[i]);
                    break;
                  }
                  case Activation::kRelu:
                    for (std::size_t i = 0; i < g.size(); ++i)
                      gx[i] += saved[i] > 0.0 ? g[i] : 0.0;
                    break;
                }
              });
}

ValueId Tape::softmax(ValueId x) {
  const Tensor& xv = value(x);
  check_vector(xv, "softmax");
  Tensor out = xv;
  const double mx = *std::max_element(out.data.begin(), out.data.end());
  double total = 0.0;
  for (double& v : out.data) {
    v = std::exp(v - mx);
    total += v;
  }
  for (double& v : out.data) v /= total;
  Tensor saved = out;
  return push(std::move(out),
              [x, saved = std::move(saved)](Tape& t, const Tensor& g) {
                Tensor& gx = t.grad_ref(x);
                double dot = 0.0;
                for (std::size_t i = 0; i < g.size(); ++i) dot += g[i] * saved[i];
                for (std::size_t i = 0; i < g.size(); ++i)
                  gx[i] += saved[i] * (g[i] - dot);
              });
}

ValueId Tape::cross_entropy(ValueId probs, std::size_t gold_index) {
  const Tensor& pv = value(probs);
  check_vector(pv, "cross_entropy");
  if (gold_index >= pv.size()) {
    throw DataError("cross_entropy: gold index " + std::to_string(gold_index) +
                    " out of range for " + std::to_string(pv.size()) +
                    " classes");
  }
  Tensor out = Tensor::zeros_vector(1);
  out[0] = -std::log(pv[gold_index] + 1e-12);
  return push(std::move(out), [probs, gold_index](Tape& t, const Tensor& g) {
    const double p = t.value(probs)[gold_index];
    t.grad_ref(probs)[gold_index] += -g[0] / (p + 1e-12);
  });
}

ValueId Tape::bce_with_logit(ValueId logit, double target) {
  const Tensor& lv = value(logit);
  if (lv.size() != 1) throw DataError("bce_with_logit: expected a scalar logit");
  const double l = lv[0];
  Tensor out = Tensor::zeros_vector(1);
  out[0] = std::max(l, 0.0) - l * target + std::log1p(std::exp(-std::abs(l)));
  return push(std::move(out), [logit, target](Tape& t, const Tensor& g) {
    const double l = t.value(logit)[0];
    t.grad_ref(logit)[0] += g[0] * (stable_sigmoid(l) - target);
  });
}

ValueId Tape::row(ValueId matrix, std::size_t r) {
  const Tensor& mv = value(matrix);
  if (!mv.is_matrix() || r >= mv.rows()) {
    throw DataError("row: index " + std::to_string(r) + " out of range for " +
                    shape_string(mv));
  }
  const std::size_t n = mv.cols();
  Tensor out = Tensor::zeros_vector(n);
  std::copy_n(mv.data.data() + r * n, n, out.data.data());
  return push(std::move(out), [matrix, r, n](Tape& t, const Tensor& g) {
    double* gr = t.grad_ref(matrix).data.data() + r * n;
    for (std::size_t i = 0; i < n; ++i) gr[i] += g[i];
  });
}

ValueId Tape::dropout(ValueId x, double rate, Rng& rng, bool training) {
  if (rate < 0.0 || rate >= 1.0) {
    throw ConfigError("dropout rate must lie in [0, 1)");
  }
  if (!training || rate == 0.0) return x;
  const Tensor& xv = value(x);
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(xv.size());
  for (double& m : mask) m = rng.uniform() < rate ? 0.0 : keep_scale;
  Tensor out = xv;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  return push(std::move(out),
              [x, mask = std::move(mask)](Tape& t, const Tensor& g) {
                Tensor& gx = t.grad_ref(x);
                for (std::size_t i = 0; i < g.size(); ++i)
                  gx[i] += g[i] * mask[i];
              });
}

ValueId Tape::average(const std::vector<ValueId>& xs) {
  if (xs.empty()) throw DataError("average: no inputs");
  const Tensor& first = value(xs[0]);
  Tensor out = first.zeros_like();
  for (ValueId id : xs) {
    const Tensor& v = value(id);
    if (!v.same_shape(first)) throw DataError("average: shape mismatch");
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += v[i];
  }
  const double inv = 1.0 / static_cast<double>(xs.size());
  for (double& v : out.data) v *= inv;
  return push(std::move(out), [xs, inv](Tape& t, const Tensor& g) {
    for (ValueId id : xs) {
      Tensor& gx = t.grad_ref(id);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += inv * g[i];
    }
  });
}

ValueId Tape::weighted_sum(const std::vector<ValueId>& xs,
                           const std::vector<double>& weights) {
  if (xs.empty()) throw DataError("weighted_sum: no inputs");
  if (xs.size() != weights.size()) {
    throw DataError("weighted_sum: weight count mismatch");
  }
  const Tensor& first = value(xs[0]);
  Tensor out = first.zeros_like();
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const Tensor& v = value(xs[k]);
    if (!v.same_shape(first)) throw DataError("weighted_sum: shape mismatch");
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += weights[k] * v[i];
  }
  return push(std::move(out), [xs, weights](Tape& t, const Tensor& g) {
    for (std::size_t k = 0; k < xs.size(); ++k) {
      Tensor& gx = t.grad_ref(xs[k]);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += weights[k] * g[i];
    }
  });
}

ValueId Tape::sum_scalars(const std::vector<ValueId>& xs) {
  if (xs.empty()) throw DataError("sum_scalars: no inputs");
  Tensor out = Tensor::zeros_vector(1);
  for (ValueId id : xs) {
    const Tensor& v = value(id);
    if (v.size() != 1) throw DataError("sum_scalars: non-scalar input");
    out[0] += v[0];
  }
  return push(std::move(out), [xs](Tape& t, const Tensor& g) {
    for (ValueId id : xs) t.grad_ref(id)[0] += g[0];
  });
}

ValueId Tape::l2_penalty(const std::vector<ValueId>& weights, double lambda) {
  if (lambda < 0.0) throw ConfigError("l2 lambda must be >= 0");
  Tensor out = Tensor::zeros_vector(1);
  double acc = 0.0;
  for (ValueId id : weights) {
    for (double v : value(id).data) acc += v * v;
  }
  out[0] = lambda * acc;
  return push(std::move(out), [weights, lambda](Tape& t, const Tensor& g) {
    for (ValueId id : weights) {
      const Tensor& wv = t.value(id);
      Tensor& gw = t.grad_ref(id);
      for (std::size_t i = 0; i < wv.size(); ++i)
        gw[i] += g[0] * 2.0 * lambda * wv[i];
    }
  });
}

void Tape::backward(ValueId loss) {
  if (loss < 0 || static_cast<std::size_t>(loss) >= nodes_.size()) {
    throw DataError("backward: invalid loss node");
  }
  if (nodes_[loss].value.size() != 1) {
    throw DataError("backward: loss must be a scalar");
  }
  nodes_[loss].grad[0] = 1.0;
  for (ValueId id = loss; id >= 0; --id) {
    Node& node = nodes_[id];
    if (node.backward) node.backward(*this, node.grad);
  }
}

}  // namespace cnetdst
