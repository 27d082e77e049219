#include "cnetdst/gru.hpp"

#include <cmath>

#include "cnetdst/errors.hpp"

namespace cnetdst::encoder {

GruParams GruParams::init(std::size_t input_dim, std::size_t hidden_dim,
                          Rng& rng) {
  GruParams p = zeros(input_dim, hidden_dim);
  p.w_update = Tensor::glorot_matrix(hidden_dim, input_dim, rng);
  p.u_update = Tensor::glorot_matrix(hidden_dim, hidden_dim, rng);
  p.w_reset = Tensor::glorot_matrix(hidden_dim, input_dim, rng);
  p.u_reset = Tensor::glorot_matrix(hidden_dim, hidden_dim, rng);
  p.w_cand = Tensor::glorot_matrix(hidden_dim, input_dim, rng);
  p.u_cand = Tensor::glorot_matrix(hidden_dim, hidden_dim, rng);
  return p;
}

GruParams GruParams::zeros(std::size_t input_dim, std::size_t hidden_dim) {
  GruParams p;
  p.input_dim = input_dim;
  p.hidden_dim = hidden_dim;
  p.w_update = Tensor::zeros_matrix(hidden_dim, input_dim);
  p.u_update = Tensor::zeros_matrix(hidden_dim, hidden_dim);
  p.b_update = Tensor::zeros_vector(hidden_dim);
  p.w_reset = Tensor::zeros_matrix(hidden_dim, input_dim);
  p.u_reset = Tensor::zeros_matrix(hidden_dim, hidden_dim);
  p.b_reset = Tensor::zeros_vector(hidden_dim);
  p.w_cand = Tensor::zeros_matrix(hidden_dim, input_dim);
  p.u_cand = Tensor::zeros_matrix(hidden_dim, hidden_dim);
  p.b_cand = Tensor::zeros_vector(hidden_dim);
  return p;
}

GruParamIds register_gru(Tape& tape, const GruParams& params) {
  GruParamIds ids;
  ids.w_update = tape.leaf(params.w_update);
  ids.u_update = tape.leaf(params.u_update);
  ids.b_update = tape.leaf(params.b_update);
  ids.w_reset = tape.leaf(params.w_reset);
  ids.u_reset = tape.leaf(params.u_reset);
  ids.b_reset = tape.leaf(params.b_reset);
  ids.w_cand = tape.leaf(params.w_cand);
  ids.u_cand = tape.leaf(params.u_cand);
  ids.b_cand = tape.leaf(params.b_cand);
  return ids;
}

PoolingMode parse_pooling_mode(const std::string& name) {
  if (name == "average") return PoolingMode::kAverage;
  if (name == "weighted") return PoolingMode::kWeighted;
  throw ConfigError("unknown pooling mode: " + name);
}

std::string pooling_mode_name(PoolingMode mode) {
  return mode == PoolingMode::kAverage ? "average" : "weighted";
}

ValueId gru_step(Tape& tape, ValueId x, ValueId h_prev, const GruParamIds& p) {
  const ValueId z = tape.activation(
      tape.affine2(p.w_update, x, p.u_update, h_prev, p.b_update),
      Activation::kSigmoid);
  const ValueId r = tape.activation(
      tape.affine2(p.w_reset, x, p.u_reset, h_prev, p.b_reset),
      Activation::kSigmoid);
  const ValueId gated_prev = tape.mul(r, h_prev);
  const ValueId cand = tape.activation(
      tape.affine2(p.w_cand, x, p.u_cand, gated_prev, p.b_cand),
      Activation::kTanh);
  return tape.add(tape.mul(z, h_prev), tape.mul(tape.one_minus(z), cand));
}

ValueId encode_timestep(Tape& tape, const std::vector<ScoredInput>& hypotheses,
                        ValueId h_prev, const GruParamIds& params,
                        const PoolingOptions& pooling) {
  if (hypotheses.empty()) {
    throw DataError("encode_timestep: timestep has no hypotheses");
  }
  std::vector<ValueId> states;
  states.reserve(hypotheses.size());
  for (const ScoredInput& hyp : hypotheses) {
    if (hyp.score < 0.0) {
      throw DataError("encode_timestep: negative confidence score");
    }
    states.push_back(gru_step(tape, hyp.embedding, h_prev, params));
  }
  if (pooling.mode == PoolingMode::kAverage) {
    return tape.average(states);
  }
  std::vector<double> weights;
  weights.reserve(hypotheses.size());
  double total = 0.0;
  for (const ScoredInput& hyp : hypotheses) {
    weights.push_back(hyp.score);
    total += hyp.score;
  }
  if (total <= 0.0) {
    throw DataError("encode_timestep: weighted pooling with all-zero scores");
  }
  if (pooling.renormalize) {
    for (double& w : weights) w /= total;
  }
  return tape.weighted_sum(states, weights);
}

ValueId encode_cnet(Tape& tape, const cnet::ConfusionNetwork& net,
                    const EmbedFn& embed, ValueId h0, const GruParamIds& params,
                    const PoolingOptions& pooling,
                    std::vector<ValueId>* per_timestep) {
  if (per_timestep) per_timestep->clear();
  ValueId h = h0;
  for (const cnet::Timestep& step : net.timesteps) {
    std::vector<ScoredInput> inputs;
    inputs.reserve(step.hypotheses.size());
    for (const cnet::Hypothesis& hyp : step.hypotheses) {
      inputs.push_back({embed(hyp.token), std::exp(hyp.log_score)});
    }
    h = encode_timestep(tape, inputs, h, params, pooling);
    if (per_timestep) per_timestep->push_back(h);
  }
  return h;
}

TurnCombinerParams TurnCombinerParams::init(std::size_t hidden_dim,
                                            std::size_t combined_dim,
                                            Rng& rng) {
  TurnCombinerParams p;
  p.hidden_dim = hidden_dim;
  p.combined_dim = combined_dim;
  p.w_system = Tensor::glorot_matrix(combined_dim, hidden_dim, rng);
  p.w_user = Tensor::glorot_matrix(combined_dim, hidden_dim, rng);
  p.bias = Tensor::zeros_vector(combined_dim);
  return p;
}

TurnCombinerIds register_combiner(Tape& tape,
                                  const TurnCombinerParams& params) {
  return {tape.leaf(params.w_system), tape.leaf(params.w_user),
          tape.leaf(params.bias)};
}

ValueId combine_turn(Tape& tape, ValueId system_vec, ValueId user_vec,
                     const TurnCombinerIds& p) {
  return tape.affine2(p.w_system, system_vec, p.w_user, user_vec, p.bias);
}

}  // namespace cnetdst::encoder
