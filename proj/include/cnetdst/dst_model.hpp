#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cnetdst/adam.hpp"
#include "cnetdst/corpus.hpp"
#include "cnetdst/gru.hpp"
#include "cnetdst/ontology.hpp"
#include "cnetdst/rng.hpp"
#include "cnetdst/tensor.hpp"
#include "cnetdst/vocab.hpp"

namespace cnetdst::model {

// Which representation of the user utterance feeds the encoder.
enum class UtteranceView { kTranscript, kCnet, kOneBest };

UtteranceView parse_view(const std::string& name);
std::string view_name(UtteranceView view);

struct ModelConfig {
  std::size_t embed_dim = 32;
  std::size_t dense_dim = 64;
  std::size_t gru_dim = 32;
  std::size_t combine_dim = 16;
  encoder::PoolingOptions pooling;
  double dropout_rate = 0.5;
  std::uint64_t seed = 1;
  // "all", "requests", or the name of a single goal slot. Decides which
  // output heads the instance carries; the encoder stack is always complete.
  std::string head_group = "all";

  bool same_architecture(const ModelConfig& o) const {
    return embed_dim == o.embed_dim && dense_dim == o.dense_dim &&
           gru_dim == o.gru_dim && combine_dim == o.combine_dim &&
           head_group == o.head_group;
  }
};

struct GoalHead {
  Tensor weight;  // |output space| x combine_dim
  Tensor bias;    // |output space|
};

struct RequestHead {
  Tensor weight;  // 1 x combine_dim
  Tensor bias;    // 1
};

// Embeddings -> dense ReLU -> cnet GRU threaded through the dialog -> turn
// combiner -> softmax goal heads and sigmoid request heads.
struct DstModel {
  ModelConfig config;
  Ontology ontology;
  Vocabulary vocab;

  Tensor embeddings;  // vocab x embed_dim
  Tensor dense_weight, dense_bias;
  encoder::GruParams gru;
  encoder::TurnCombinerParams combiner;
  std::vector<std::pair<std::string, GoalHead>> goal_heads;
  std::vector<std::pair<std::string, RequestHead>> request_heads;

  static DstModel init(const ModelConfig& config, const Ontology& ontology,
                       const Vocabulary& vocab);

  // Goal slots covered by this instance's heads, in ontology order.
  std::vector<std::string> active_goal_slots() const;
  bool has_request_heads() const;

  // Every parameter with a stable name, in a fixed order shared by the
  // optimizer, gradient checks and checkpoints.
  std::vector<NamedParam> named_params();

  bool architecture_matches(const DstModel& o) const;
};

// The head groups trained as independent model instances: one per goal slot
// plus one for the requestable slots.
std::vector<std::string> head_groups(const Ontology& ontology);

// Defaults: 20 epochs for requests, 100 for food, 50 otherwise.
std::size_t default_epochs_for_group(const std::string& group);

struct TurnPrediction {
  std::map<std::string, std::vector<double>> goal_probs;
  std::map<std::string, double> request_probs;
  // Argmax per goal slot; requested = probability > 0.5.
  DialogState decision;
};

struct PreparedTurn {
  std::vector<std::string> system_tokens;
  cnet::ConfusionNetwork user_input;
  DialogState gold;
};

struct PreparedDialog {
  std::string id;
  std::vector<PreparedTurn> turns;
};

struct PrepareOptions {
  UtteranceView view = UtteranceView::kCnet;
  // Applied to the cnet view only. A negative threshold disables pruning.
  double prune_threshold = 0.001;
  std::set<std::string> interjections = cnet::default_interjections();
  bool renormalize_scores = false;
};

// Maps system acts to tokens and selects/derives the user-side input.
PreparedDialog prepare_dialog(const corpus::Dialog& dialog,
                              const corpus::ActWordMap& act_map,
                              const PrepareOptions& options);

std::vector<PreparedDialog> prepare_corpus(
    const std::vector<corpus::Dialog>& dialogs,
    const corpus::ActWordMap& act_map, const PrepareOptions& options);

// The shared input pipeline for system-act tokens and cnet hypothesis
// tokens alike: relu(Wd * embedding(token) + bd). Unknown tokens use the UNK
// row. Inference form; the training path adds dropout on top of this.
Tensor project_token(const DstModel& model, const std::string& token);

// One hidden state threads through the whole dialog: system tokens are
// encoded as single-hypothesis timesteps, the snapshot after the system
// utterance and after the user utterance feed the turn combiner, and the
// heads read the combined vector. One prediction per turn.
std::vector<TurnPrediction> forward_dialog(const PreparedDialog& dialog,
                                           const DstModel& model,
                                           bool training = false,
                                           Rng* dropout_rng = nullptr);

// Sum over turns of goal cross-entropies and request binary cross-entropies,
// plus the l2 penalty over weight matrices. gold must align with the turns.
double dialog_loss(const PreparedDialog& dialog,
                   const std::vector<DialogState>& gold, const DstModel& model,
                   double l2_lambda);

// Loss over a list of prepared instances: instance_scale * sum of per-turn
// losses + l2 penalty. When grads_out is non-null it receives d(loss)/d(param)
// in named_params order. Dropout applies only when training.
double corpus_loss(const std::vector<const PreparedDialog*>& instances,
                   DstModel& model, double l2_lambda, double instance_scale,
                   bool training, Rng* dropout_rng,
                   std::vector<Tensor>* grads_out);

// Smallest |dense pre-activation| over the tokens appearing in the dialog.
// Finite-difference gradient checks are only a valid oracle away from the
// ReLU kink; instances are re-drawn until this margin clears the step size.
double min_relu_preactivation_gap(const DstModel& model,
                                  const PreparedDialog& dialog);

struct TrainConfig {
  ModelConfig model;
  AdamConfig adam;
  double l2_lambda = 0.001;
  std::size_t batch_dialogs = 10;
  std::size_t epochs = 50;
  // Every dialog contributes a transcript instance plus one in this view.
  UtteranceView noisy_view = UtteranceView::kCnet;
  PrepareOptions prepare;
  // Optional word2vec-style text file; matching vocabulary rows replace the
  // random embedding initialization before training starts.
  std::string embeddings_file;
};

struct TrainResult {
  DstModel model;
  std::vector<double> epoch_losses;  // mean batch loss per epoch
};

TrainResult train_model(const std::vector<corpus::Dialog>& dialogs,
                        const Ontology& ontology, const Vocabulary& vocab,
                        const corpus::ActWordMap& act_map,
                        const TrainConfig& config);

// Joint goals: % of turns where every goal slot matches gold. Joint
// requests: % of turns where the predicted request set equals gold exactly.
std::pair<double, double> joint_accuracy(
    const std::vector<TurnPrediction>& predictions,
    const std::vector<DialogState>& gold, const Ontology& ontology);

// Runs several head-group instances over the same dialog and merges their
// heads into complete predictions. The instances must cover disjoint heads.
std::vector<TurnPrediction> predict_with_models(
    const std::vector<const DstModel*>& models, const PreparedDialog& dialog);

// Combines per-head outputs of disjoint partial predictions into one and
// re-derives the decision.
TurnPrediction merge_predictions(const std::vector<const TurnPrediction*>& parts,
                                 const Ontology& ontology);

// Averages per-head probabilities across architecturally identical models
// (different seeds), then re-derives the decisions.
std::vector<TurnPrediction> ensemble_predict(
    const std::vector<const DstModel*>& models, const PreparedDialog& dialog);

// Versioned text format: header, ontology hash, config, vocabulary, named
// tensors as base64 little-endian doubles, trailing fnv1a checksum.
void save_checkpoint(const DstModel& model, const std::string& path);
DstModel load_checkpoint(const std::string& path,
                         const Ontology& expected_ontology);

}  // namespace cnetdst::model
