#include "cnetdst/dst_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cnetdst/tape.hpp"

namespace cnetdst::model {

using encoder::GruParamIds;
using encoder::PoolingOptions;
using encoder::TurnCombinerIds;

UtteranceView parse_view(const std::string& name) {
  if (name == "transcript") return UtteranceView::kTranscript;
  if (name == "cnet") return UtteranceView::kCnet;
  if (name == "onebest" || name == "1best") return UtteranceView::kOneBest;
  throw ConfigError("unknown utterance view: " + name);
}

std::string view_name(UtteranceView view) {
  switch (view) {
    case UtteranceView::kTranscript: return "transcript";
    case UtteranceView::kCnet: return "cnet";
    case UtteranceView::kOneBest: return "onebest";
  }
  return "?";
}

DstModel DstModel::init(const ModelConfig& config, const Ontology& ontology,
                        const Vocabulary& vocab) {
  ontology.validate();
  if (config.head_group != "all" && config.head_group != "requests" &&
      !ontology.has_goal_slot(config.head_group)) {
    throw ConfigError("head group '" + config.head_group +
                      "' is neither 'all', 'requests' nor a goal slot");
  }
  if (config.embed_dim == 0 || config.dense_dim == 0 || config.gru_dim == 0 ||
      config.combine_dim == 0) {
    throw ConfigError("model dimensions must be positive");
  }
  DstModel m;
  m.config = config;
  m.ontology = ontology;
  m.vocab = vocab;
  Rng rng(config.seed);
  m.embeddings = Tensor::glorot_matrix(vocab.size(), config.embed_dim, rng);
  m.dense_weight = Tensor::glorot_matrix(config.dense_dim, config.embed_dim, rng);
  m.dense_bias = Tensor::zeros_vector(config.dense_dim);
  m.gru = encoder::GruParams::init(config.dense_dim, config.gru_dim, rng);
  m.combiner =
      encoder::TurnCombinerParams::init(config.gru_dim, config.combine_dim, rng);
  for (const std::string& slot : m.active_goal_slots()) {
    GoalHead head;
    head.weight = Tensor::glorot_matrix(ontology.output_size(slot),
                                        config.combine_dim, rng);
    head.bias = Tensor::zeros_vector(ontology.output_size(slot));
    m.goal_heads.emplace_back(slot, std::move(head));
  }
  if (m.has_request_heads()) {
    for (const std::string& slot : ontology.requestable_slots) {
      RequestHead head;
      head.weight = Tensor::glorot_matrix(1, config.combine_dim, rng);
      head.bias = Tensor::zeros_vector(1);
      m.request_heads.emplace_back(slot, std::move(head));
    }
  }
  return m;
}

std::vector<std::string> DstModel::active_goal_slots() const {
  std::vector<std::string> slots;
  if (config.head_group == "requests") return slots;
  for (const auto& [slot, values] : ontology.goal_slots) {
    if (config.head_group == "all" || config.head_group == slot) {
      slots.push_back(slot);
    }
  }
  return slots;
}

bool DstModel::has_request_heads() const {
  return config.head_group == "all" || config.head_group == "requests";
}

std::vector<NamedParam> DstModel::named_params() {
  std::vector<NamedParam> params;
  params.push_back({"embeddings", &embeddings, false});
  params.push_back({"dense_weight", &dense_weight, true});
  params.push_back({"dense_bias", &dense_bias, false});
  params.push_back({"gru.w_update", &gru.w_update, true});
  params.push_back({"gru.u_update", &gru.u_update, true});
  params.push_back({"gru.b_update", &gru.b_update, false});
  params.push_back({"gru.w_reset", &gru.w_reset, true});
  params.push_back({"gru.u_reset", &gru.u_reset, true});
  params.push_back({"gru.b_reset", &gru.b_reset, false});
  params.push_back({"gru.w_cand", &gru.w_cand, true});
  params.push_back({"gru.u_cand", &gru.u_cand, true});
  params.push_back({"gru.b_cand", &gru.b_cand, false});
  params.push_back({"combiner.w_system", &combiner.w_system, true});
  params.push_back({"combiner.w_user", &combiner.w_user, true});
  params.push_back({"combiner.bias", &combiner.bias, false});
  for (auto& [slot, head] : goal_heads) {
    params.push_back({"goal_head." + slot + ".weight", &head.weight, true});
    params.push_back({"goal_head." + slot + ".bias", &head.bias, false});
  }
  for (auto& [slot, head] : request_heads) {
    params.push_back({"request_head." + slot + ".weight", &head.weight, true});
    params.push_back({"request_head." + slot + ".bias", &head.bias, false});
  }
  return params;
}

bool DstModel::architecture_matches(const DstModel& o) const {
  return config.same_architecture(o.config) &&
         ontology.hash() == o.ontology.hash() && vocab == o.vocab;
}

std::vector<std::string> head_groups(const Ontology& ontology) {
  std::vector<std::string> groups;
  for (const auto& [slot, values] : ontology.goal_slots) groups.push_back(slot);
  groups.push_back("requests");
  return groups;
}

std::size_t default_epochs_for_group(const std::string& group) {
  if (group == "requests") return 20;
  if (group == "food") return 100;
  return 50;
}

PreparedDialog prepare_dialog(const corpus::Dialog& dialog,
                              const corpus::ActWordMap& act_map,
                              const PrepareOptions& options) {
  PreparedDialog out;
  out.id = dialog.id;
  out.turns.reserve(dialog.turns.size());
  for (const corpus::DialogTurn& turn : dialog.turns) {
    PreparedTurn prepared;
    prepared.system_tokens = corpus::acts_to_tokens(turn.system_acts, act_map);
    switch (options.view) {
      case UtteranceView::kTranscript:
        if (!turn.user_transcript.empty()) {
          prepared.user_input = cnet::degenerate_cnet(turn.user_transcript);
        }
        break;
      case UtteranceView::kCnet:
        if (options.prune_threshold >= 0.0) {
          prepared.user_input =
              cnet::prune_cnet(turn.user_cnet, options.interjections,
                               options.prune_threshold,
                               options.renormalize_scores);
        } else {
          prepared.user_input = turn.user_cnet;
        }
        break;
      case UtteranceView::kOneBest: {
        const std::vector<std::string> best = cnet::one_best_tokens(turn.user_cnet);
        if (!best.empty()) prepared.user_input = cnet::degenerate_cnet(best);
        break;
      }
    }
    prepared.gold = turn.gold_state;
    out.turns.push_back(std::move(prepared));
  }
  return out;
}

std::vector<PreparedDialog> prepare_corpus(
    const std::vector<corpus::Dialog>& dialogs,
    const corpus::ActWordMap& act_map, const PrepareOptions& options) {
  std::vector<PreparedDialog> out;
  out.reserve(dialogs.size());
  for (const corpus::Dialog& d : dialogs) {
    out.push_back(prepare_dialog(d, act_map, options));
  }
  return out;
}

namespace {

struct ModelTapeIds {
  ValueId embeddings, dense_weight, dense_bias;
  GruParamIds gru;
  TurnCombinerIds combiner;
  std::vector<std::pair<std::string, std::pair<ValueId, ValueId>>> goal_heads;
  std::vector<std::pair<std::string, std::pair<ValueId, ValueId>>> request_heads;
  std::vector<ValueId> param_order;      // parallel to named_params()
  std::vector<ValueId> weight_matrices;  // l2 scope
};

ModelTapeIds register_model(Tape& tape, DstModel& model) {
  ModelTapeIds ids{};
  std::map<std::string, ValueId> by_name;
  for (const NamedParam& p : model.named_params()) {
    const ValueId id = tape.leaf(*p.tensor);
    by_name[p.name] = id;
    ids.param_order.push_back(id);
    if (p.is_weight_matrix) ids.weight_matrices.push_back(id);
  }
  ids.embeddings = by_name.at("embeddings");
  ids.dense_weight = by_name.at("dense_weight");
  ids.dense_bias = by_name.at("dense_bias");
  ids.gru = {by_name.at("gru.w_update"), by_name.at("gru.u_update"),
             by_name.at("gru.b_update"), by_name.at("gru.w_reset"),
             by_name.at("gru.u_reset"),  by_name.at("gru.b_reset"),
             by_name.at("gru.w_cand"),   by_name.at("gru.u_cand"),
             by_name.at("gru.b_cand")};
  ids.combiner = {by_name.at("combiner.w_system"), by_name.at("combiner.w_user"),
                  by_name.at("combiner.bias")};
  for (auto& [slot, head] : model.goal_heads) {
    ids.goal_heads.emplace_back(
        slot, std::make_pair(by_name.at("goal_head." + slot + ".weight"),
                             by_name.at("goal_head." + slot + ".bias")));
  }
  for (auto& [slot, head] : model.request_heads) {
    ids.request_heads.emplace_back(
        slot, std::make_pair(by_name.at("request_head." + slot + ".weight"),
                             by_name.at("request_head." + slot + ".bias")));
  }
  return ids;
}

// Per-turn output nodes.
struct TurnNodes {
  std::vector<std::pair<std::string, ValueId>> goal_probs;
  std::vector<std::pair<std::string, ValueId>> request_logits;
};

// x = dropout(relu(Wd * embedding(token) + bd)); identical for system-act
// tokens and cnet hypothesis tokens.
ValueId embed_and_project(Tape& tape, const ModelTapeIds& ids,
                          const DstModel& model, const std::string& token,
                          bool training, Rng* dropout_rng) {
  const std::size_t row = model.vocab.lookup(token);
  ValueId x = tape.affine(ids.dense_weight, tape.row(ids.embeddings, row),
                          ids.dense_bias);
  x = tape.activation(x, Activation::kRelu);
  if (training && model.config.dropout_rate > 0.0 && dropout_rng) {
    x = tape.dropout(x, model.config.dropout_rate, *dropout_rng, true);
  }
  return x;
}

std::vector<TurnNodes> run_dialog(Tape& tape, const ModelTapeIds& ids,
                                  const DstModel& model,
                                  const PreparedDialog& dialog, bool training,
                                  Rng* dropout_rng) {
  if (dialog.turns.empty()) {
    throw DataError("forward_dialog: dialog '" + dialog.id + "' has no turns");
  }
  const PoolingOptions& pooling = model.config.pooling;
  auto embed = [&](const std::string& token) {
    return embed_and_project(tape, ids, model, token, training, dropout_rng);
  };

  std::vector<TurnNodes> turns;
  turns.reserve(dialog.turns.size());
  ValueId h = tape.leaf(Tensor::zeros_vector(model.config.gru_dim));
  for (const PreparedTurn& turn : dialog.turns) {
    // System dialog act, one single-hypothesis timestep per token.
    for (const std::string& token : turn.system_tokens) {
      h = encoder::encode_timestep(tape, {{embed(token), 1.0}}, h, ids.gru,
                                   pooling);
    }
    const ValueId system_vec = h;
    h = encoder::encode_cnet(tape, turn.user_input, embed, h, ids.gru, pooling);
    const ValueId user_vec = h;
    const ValueId combined =
        encoder::combine_turn(tape, system_vec, user_vec, ids.combiner);

    TurnNodes nodes;
    for (const auto& [slot, head] : ids.goal_heads) {
      const ValueId logits = tape.affine(head.first, combined, head.second);
      nodes.goal_probs.emplace_back(slot, tape.softmax(logits));
    }
    for (const auto& [slot, head] : ids.request_heads) {
      nodes.request_logits.emplace_back(
          slot, tape.affine(head.first, combined, head.second));
    }
    turns.push_back(std::move(nodes));
  }
  return turns;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

TurnPrediction extract_prediction(const Tape& tape, const TurnNodes& nodes,
                                  const Ontology& ontology) {
  TurnPrediction pred;
  for (const auto& [slot, id] : nodes.goal_probs) {
    const Tensor& probs = tape.value(id);
    pred.goal_probs[slot] = probs.data;
    const std::size_t best = static_cast<std::size_t>(
        std::max_element(probs.data.begin(), probs.data.end()) -
        probs.data.begin());
    pred.decision.goals[slot] = ontology.value_at(slot, best);
  }
  for (const auto& [slot, id] : nodes.request_logits) {
    const double p = sigmoid(tape.value(id)[0]);
    pred.request_probs[slot] = p;
    if (p > 0.5) pred.decision.requests.insert(slot);
  }
  return pred;
}

void derive_decision(TurnPrediction& pred, const Ontology& ontology) {
  pred.decision = DialogState{};
  for (const auto& [slot, probs] : pred.goal_probs) {
    const std::size_t best = static_cast<std::size_t>(
        std::max_element(probs.begin(), probs.end()) - probs.begin());
    pred.decision.goals[slot] = ontology.value_at(slot, best);
  }
  for (const auto& [slot, p] : pred.request_probs) {
    if (p > 0.5) pred.decision.requests.insert(slot);
  }
}

std::vector<ValueId> turn_loss_terms(Tape& tape, const TurnNodes& nodes,
                                     const DialogState& gold,
                                     const Ontology& ontology) {
  std::vector<ValueId> terms;
  for (const auto& [slot, probs_id] : nodes.goal_probs) {
    const std::size_t gold_index = ontology.value_index(slot, gold.goal(slot));
    terms.push_back(tape.cross_entropy(probs_id, gold_index));
  }
  for (const auto& [slot, logit_id] : nodes.request_logits) {
    const double target = gold.requests.count(slot) ? 1.0 : 0.0;
    terms.push_back(tape.bce_with_logit(logit_id, target));
  }
  return terms;
}

}  // namespace

Tensor project_token(const DstModel& model, const std::string& token) {
  const std::size_t row = model.vocab.lookup(token);
  Tensor out = Tensor::zeros_vector(model.config.dense_dim);
  for (std::size_t r = 0; r < model.config.dense_dim; ++r) {
    double acc = model.dense_bias[r];
    for (std::size_t c = 0; c < model.config.embed_dim; ++c) {
      acc += model.dense_weight.at(r, c) * model.embeddings.at(row, c);
    }
    out[r] = acc > 0.0 ? acc : 0.0;
  }
  return out;
}

std::vector<TurnPrediction> forward_dialog(const PreparedDialog& dialog,
                                           const DstModel& model,
                                           bool training, Rng* dropout_rng) {
  Tape tape;
  DstModel& mutable_model = const_cast<DstModel&>(model);
  const ModelTapeIds ids = register_model(tape, mutable_model);
  const std::vector<TurnNodes> turns =
      run_dialog(tape, ids, model, dialog, training, dropout_rng);
  std::vector<TurnPrediction> predictions;
  predictions.reserve(turns.size());
  for (const TurnNodes& nodes : turns) {
    predictions.push_back(extract_prediction(tape, nodes, model.ontology));
  }
  return predictions;
}

double corpus_loss(const std::vector<const PreparedDialog*>& instances,
                   DstModel& model, double l2_lambda, double instance_scale,
                   bool training, Rng* dropout_rng,
                   std::vector<Tensor>* grads_out) {
  Tape tape;
  const ModelTapeIds ids = register_model(tape, model);
  std::vector<ValueId> terms;
  for (const PreparedDialog* dialog : instances) {
    const std::vector<TurnNodes> turns =
        run_dialog(tape, ids, model, *dialog, training, dropout_rng);
    if (turns.size() != dialog->turns.size()) {
      throw DataError("corpus_loss: turn/gold misalignment in dialog '" +
                      dialog->id + "'");
    }
    for (std::size_t t = 0; t < turns.size(); ++t) {
      const auto turn_terms = turn_loss_terms(tape, turns[t],
                                              dialog->turns[t].gold,
                                              model.ontology);
      terms.insert(terms.end(), turn_terms.begin(), turn_terms.end());
    }
  }
  ValueId loss;
  if (terms.empty()) {
    loss = tape.leaf(Tensor::zeros_vector(1));
  } else {
    loss = tape.scale(tape.sum_scalars(terms), instance_scale);
  }
  if (l2_lambda > 0.0) {
    loss = tape.sum_scalars(
        {loss, tape.l2_penalty(ids.weight_matrices, l2_lambda)});
  }
  const double loss_value = tape.value(loss)[0];
  if (grads_out) {
    tape.backward(loss);
    grads_out->clear();
    grads_out->reserve(ids.param_order.size());
    for (const ValueId id : ids.param_order) {
      grads_out->push_back(tape.grad(id));
    }
  }
  return loss_value;
}

double min_relu_preactivation_gap(const DstModel& model,
                                  const PreparedDialog& dialog) {
  std::set<std::string> tokens;
  for (const PreparedTurn& turn : dialog.turns) {
    tokens.insert(turn.system_tokens.begin(), turn.system_tokens.end());
    for (const cnet::Timestep& step : turn.user_input.timesteps) {
      for (const cnet::Hypothesis& hyp : step.hypotheses) {
        tokens.insert(hyp.token);
      }
    }
  }
  double gap = std::numeric_limits<double>::infinity();
  for (const std::string& token : tokens) {
    const std::size_t row = model.vocab.lookup(token);
    for (std::size_t r = 0; r < model.config.dense_dim; ++r) {
      double pre = model.dense_bias[r];
      for (std::size_t c = 0; c < model.config.embed_dim; ++c) {
        pre += model.dense_weight.at(r, c) * model.embeddings.at(row, c);
      }
      gap = std::min(gap, std::abs(pre));
    }
  }
  return gap;
}

double dialog_loss(const PreparedDialog& dialog,
                   const std::vector<DialogState>& gold, const DstModel& model,
                   double l2_lambda) {
  if (gold.size() != dialog.turns.size()) {
    throw DataError("dialog_loss: " + std::to_string(gold.size()) +
                    " gold states for " + std::to_string(dialog.turns.size()) +
                    " turns");
  }
  PreparedDialog aligned = dialog;
  for (std::size_t i = 0; i < gold.size(); ++i) aligned.turns[i].gold = gold[i];
  DstModel& mutable_model = const_cast<DstModel&>(model);
  return corpus_loss({&aligned}, mutable_model, l2_lambda, 1.0, false, nullptr,
                     nullptr);
}

TrainResult train_model(const std::vector<corpus::Dialog>& dialogs,
                        const Ontology& ontology, const Vocabulary& vocab,
                        const corpus::ActWordMap& act_map,
                        const TrainConfig& config) {
  if (dialogs.empty()) throw DataError("train: empty corpus");
  if (config.batch_dialogs == 0) throw ConfigError("train: batch size must be >= 1");

  TrainResult result;
  result.model = DstModel::init(config.model, ontology, vocab);
  DstModel& model = result.model;
  if (!config.embeddings_file.empty()) {
    corpus::load_embeddings(config.embeddings_file, vocab, model.embeddings);
  }

  // Two instances per dialog: the transcript and the configured noisy view.
  PrepareOptions transcript_prep = config.prepare;
  transcript_prep.view = UtteranceView::kTranscript;
  PrepareOptions noisy_prep = config.prepare;
  noisy_prep.view = config.noisy_view;
  const std::vector<PreparedDialog> transcript_instances =
      prepare_corpus(dialogs, act_map, transcript_prep);
  const std::vector<PreparedDialog> noisy_instances =
      prepare_corpus(dialogs, act_map, noisy_prep);

  std::vector<NamedParam> params = model.named_params();
  AdamState adam = AdamState::init(params, config.adam);
  Rng rng(fnv1a(config.model.head_group, config.model.seed ^
                                             0x5851F42D4C957F2DULL));
  Rng dropout_rng = rng.split();

  std::vector<std::size_t> order(dialogs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  std::vector<Tensor> grads;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[rng.below(i)]);
    }
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < order.size();
         begin += config.batch_dialogs) {
      const std::size_t end =
          std::min(order.size(), begin + config.batch_dialogs);
      std::vector<const PreparedDialog*> instances;
      instances.reserve(2 * (end - begin));
      for (std::size_t i = begin; i < end; ++i) {
        instances.push_back(&transcript_instances[order[i]]);
        instances.push_back(&noisy_instances[order[i]]);
      }
      const double scale = 1.0 / static_cast<double>(end - begin);
      const double loss = corpus_loss(instances, model, config.l2_lambda,
                                      scale, true, &dropout_rng, &grads);
      if (!std::isfinite(loss)) {
        throw TrainError("training diverged: non-finite loss in epoch " +
                         std::to_string(epoch) + ", batch " +
                         std::to_string(batches + 1));
      }
      adam_step(params, grads, adam);
      epoch_loss += loss;
      ++batches;
    }
    result.epoch_losses.push_back(epoch_loss /
                                  static_cast<double>(std::max<std::size_t>(1, batches)));
  }
  return result;
}

std::pair<double, double> joint_accuracy(
    const std::vector<TurnPrediction>& predictions,
    const std::vector<DialogState>& gold, const Ontology& ontology) {
  if (predictions.size() != gold.size()) {
    throw DataError("joint_accuracy: " + std::to_string(predictions.size()) +
                    " predictions vs " + std::to_string(gold.size()) +
                    " gold states");
  }
  if (predictions.empty()) {
    throw DataError("joint_accuracy: no turns to evaluate");
  }
  std::size_t goals_ok = 0, requests_ok = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const TurnPrediction& pred = predictions[i];
    bool all_goals = true;
    for (const auto& [slot, values] : ontology.goal_slots) {
      auto it = pred.decision.goals.find(slot);
      if (it == pred.decision.goals.end()) {
        throw DataError("joint_accuracy: prediction lacks goal slot '" + slot +
                        "'");
      }
      if (it->second != gold[i].goal(slot)) {
        all_goals = false;
        break;
      }
    }
    goals_ok += all_goals;
    requests_ok += pred.decision.requests == gold[i].requests;
  }
  const double n = static_cast<double>(predictions.size());
  return {100.0 * static_cast<double>(goals_ok) / n,
          100.0 * static_cast<double>(requests_ok) / n};
}

TurnPrediction merge_predictions(const std::vector<const TurnPrediction*>& parts,
                                 const Ontology& ontology) {
  TurnPrediction merged;
  for (const TurnPrediction* part : parts) {
    for (const auto& [slot, probs] : part->goal_probs) {
      if (!merged.goal_probs.emplace(slot, probs).second) {
        throw DataError("merge_predictions: goal slot '" + slot +
                        "' covered twice");
      }
    }
    for (const auto& [slot, p] : part->request_probs) {
      if (!merged.request_probs.emplace(slot, p).second) {
        throw DataError("merge_predictions: request slot '" + slot +
                        "' covered twice");
      }
    }
  }
  derive_decision(merged, ontology);
  return merged;
}

std::vector<TurnPrediction> predict_with_models(
    const std::vector<const DstModel*>& models, const PreparedDialog& dialog) {
  if (models.empty()) throw DataError("predict_with_models: no models");
  std::vector<std::vector<TurnPrediction>> per_model;
  per_model.reserve(models.size());
  for (const DstModel* model : models) {
    per_model.push_back(forward_dialog(dialog, *model));
  }
  std::vector<TurnPrediction> merged;
  merged.reserve(dialog.turns.size());
  for (std::size_t t = 0; t < dialog.turns.size(); ++t) {
    std::vector<const TurnPrediction*> parts;
    parts.reserve(per_model.size());
    for (const auto& preds : per_model) parts.push_back(&preds[t]);
    merged.push_back(merge_predictions(parts, models[0]->ontology));
  }
  return merged;
}

std::vector<TurnPrediction> ensemble_predict(
    const std::vector<const DstModel*>& models, const PreparedDialog& dialog) {
  if (models.empty()) throw DataError("ensemble_predict: no models");
  for (const DstModel* m : models) {
    if (!models[0]->architecture_matches(*m)) {
      throw DataError("ensemble_predict: models are not architecturally "
                      "identical");
    }
  }
  std::vector<TurnPrediction> out;
  const double inv = 1.0 / static_cast<double>(models.size());
  for (std::size_t k = 0; k < models.size(); ++k) {
    const std::vector<TurnPrediction> preds =
        forward_dialog(dialog, *models[k]);
    if (k == 0) {
      out = preds;
      for (TurnPrediction& pred : out) {
        for (auto& [slot, probs] : pred.goal_probs) {
          for (double& p : probs) p *= inv;
        }
        for (auto& [slot, p] : pred.request_probs) p *= inv;
      }
      continue;
    }
    for (std::size_t t = 0; t < preds.size(); ++t) {
      for (const auto& [slot, probs] : preds[t].goal_probs) {
        auto& acc = out[t].goal_probs.at(slot);
        for (std::size_t i = 0; i < probs.size(); ++i) acc[i] += inv * probs[i];
      }
      for (const auto& [slot, p] : preds[t].request_probs) {
        out[t].request_probs.at(slot) += inv * p;
      }
    }
  }
  for (TurnPrediction& pred : out) {
    derive_decision(pred, models[0]->ontology);
  }
  return out;
}

}  // namespace cnetdst::model
