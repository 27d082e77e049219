#pragma once

#include <functional>
#include <string>
#include <vector>

#include "cnetdst/cnet.hpp"
#include "cnetdst/rng.hpp"
#include "cnetdst/tape.hpp"
#include "cnetdst/tensor.hpp"

namespace cnetdst::encoder {

// Learned parameters of one GRU cell: update gate z, reset gate r and
// candidate state, each with input weights (hidden x input), recurrent
// weights (hidden x hidden) and a bias.
struct GruParams {
  Tensor w_update, u_update, b_update;
  Tensor w_reset, u_reset, b_reset;
  Tensor w_cand, u_cand, b_cand;
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;

  static GruParams init(std::size_t input_dim, std::size_t hidden_dim,
                        Rng& rng);
  static GruParams zeros(std::size_t input_dim, std::size_t hidden_dim);
};

// Tape handles for a registered GruParams.
struct GruParamIds {
  ValueId w_update, u_update, b_update;
  ValueId w_reset, u_reset, b_reset;
  ValueId w_cand, u_cand, b_cand;
};

GruParamIds register_gru(Tape& tape, const GruParams& params);

// How the k hypothesis-specific hidden states of a timestep collapse into one.
enum class PoolingMode { kAverage, kWeighted };

struct PoolingOptions {
  PoolingMode mode = PoolingMode::kWeighted;
  // Weighted pooling uses raw confidence scores by default; when set, the
  // weights are divided by their sum first.
  bool renormalize = false;
};

PoolingMode parse_pooling_mode(const std::string& name);
std::string pooling_mode_name(PoolingMode mode);

// One standard GRU transition:
//   z = sigmoid(Wz x + Uz h + bz)
//   r = sigmoid(Wr x + Ur h + br)
//   cand = tanh(Wh x + Uh (r*h) + bh)
//   h' = z*h + (1-z)*cand
ValueId gru_step(Tape& tape, ValueId x, ValueId h_prev, const GruParamIds& p);

// One scored hypothesis input: an already-embedded vector plus its posterior
// confidence.
struct ScoredInput {
  ValueId embedding;
  double score = 1.0;
};

// Runs every hypothesis of a timestep through the GRU against the same
// previous hidden state, then pools the k results.
ValueId encode_timestep(Tape& tape, const std::vector<ScoredInput>& hypotheses,
                        ValueId h_prev, const GruParamIds& params,
                        const PoolingOptions& pooling);

// Maps a hypothesis token to its (embedded, projected) input vector on the tape.
using EmbedFn = std::function<ValueId(const std::string& token)>;

// Left fold of encode_timestep over the cnet. Hypothesis confidences are
// exp(log_score). An empty cnet returns h0 unchanged with an empty trace.
ValueId encode_cnet(Tape& tape, const cnet::ConfusionNetwork& net,
                    const EmbedFn& embed, ValueId h0, const GruParamIds& params,
                    const PoolingOptions& pooling,
                    std::vector<ValueId>* per_timestep = nullptr);

// Affine combination of the system and user encodings:
//   c = Ws * s + Wu * u + b.
struct TurnCombinerParams {
  Tensor w_system, w_user, bias;
  std::size_t hidden_dim = 0;
  std::size_t combined_dim = 0;

  static TurnCombinerParams init(std::size_t hidden_dim,
                                 std::size_t combined_dim, Rng& rng);
};

struct TurnCombinerIds {
  ValueId w_system, w_user, bias;
};

TurnCombinerIds register_combiner(Tape& tape, const TurnCombinerParams& params);

ValueId combine_turn(Tape& tape, ValueId system_vec, ValueId user_vec,
                     const TurnCombinerIds& p);

}  // namespace cnetdst::encoder
