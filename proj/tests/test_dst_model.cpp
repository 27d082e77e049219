#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"

#include "cnetdst/dst_model.hpp"
#include "cnetdst/gradcheck.hpp"
#include "cnetdst/synthetic.hpp"

using namespace cnetdst;
using namespace cnetdst::model;

namespace fs = std::filesystem;

namespace {

ModelConfig desk_config(std::uint64_t seed, const std::string& group = "all") {
  ModelConfig config;
  config.embed_dim = 6;
  config.dense_dim = 8;
  config.gru_dim = 6;
  config.combine_dim = 4;
  config.dropout_rate = 0.0;
  config.seed = seed;
  config.head_group = group;
  config.pooling.mode = encoder::PoolingMode::kWeighted;
  return config;
}

struct Fixture {
  Ontology ontology = corpus::synthetic_ontology();
  std::vector<corpus::Dialog> dialogs;
  corpus::ActWordMap act_map = corpus::ActWordMap::defaults();
  Vocabulary vocab;

  explicit Fixture(std::uint64_t seed = 1, std::size_t n = 4,
                   double noise = 0.4) {
    corpus::SyntheticConfig cfg;
    cfg.n_dialogs = n;
    cfg.turns_per_dialog = 3;
    cfg.p_confuse = noise;
    cfg.p_swap = noise / 2;
    cfg.p_interj = noise / 4;
    cfg.seed = seed;
    dialogs = corpus::generate_synthetic(cfg);
    vocab = corpus::build_vocab(dialogs, act_map, 1);
  }
};

void zero_heads(DstModel& m) {
  for (auto& [slot, head] : m.goal_heads) {
    head.weight = head.weight.zeros_like();
    head.bias = head.bias.zeros_like();
  }
  for (auto& [slot, head] : m.request_heads) {
    head.weight = head.weight.zeros_like();
    head.bias = head.bias.zeros_like();
  }
}

// Straight-line reimplementation of the whole forward pass with plain loops,
// no tape involved.
struct PlainForward {
  const DstModel& m;

  std::vector<double> matvec(const Tensor& w, const std::vector<double>& x,
                             const std::vector<double>& b) const {
    std::vector<double> out(w.rows());
    for (std::size_t r = 0; r < w.rows(); ++r) {
      double acc = b.empty() ? 0.0 : b[r];
      for (std::size_t c = 0; c < w.cols(); ++c) acc += w.at(r, c) * x[c];
      out[r] = acc;
    }
    return out;
  }

  std::vector<double> embed_project(const std::string& token) const {
    const std::size_t row = m.vocab.lookup(token);
    std::vector<double> e(m.config.embed_dim);
    for (std::size_t i = 0; i < e.size(); ++i) e[i] = m.embeddings.at(row, i);
    std::vector<double> x = matvec(m.dense_weight, e, m.dense_bias.data);
    for (double& v : x) v = v > 0.0 ? v : 0.0;
    return x;
  }

  std::vector<double> gru(const std::vector<double>& x,
                          const std::vector<double>& h) const {
    const encoder::GruParams& p = m.gru;
    auto sigm = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
    const std::vector<double> zpre =
        matvec(p.u_update, h, matvec(p.w_update, x, p.b_update.data));
    const std::vector<double> rpre =
        matvec(p.u_reset, h, matvec(p.w_reset, x, p.b_reset.data));
    std::vector<double> z(h.size()), r(h.size()), rh(h.size());
    for (std::size_t i = 0; i < h.size(); ++i) {
      z[i] = sigm(zpre[i]);
      r[i] = sigm(rpre[i]);
      rh[i] = r[i] * h[i];
    }
    const std::vector<double> cpre =
        matvec(p.u_cand, rh, matvec(p.w_cand, x, p.b_cand.data));
    std::vector<double> out(h.size());
    for (std::size_t i = 0; i < h.size(); ++i) {
      out[i] = z[i] * h[i] + (1.0 - z[i]) * std::tanh(cpre[i]);
    }
    return out;
  }

  std::vector<TurnPrediction> run(const PreparedDialog& dialog) const {
    std::vector<TurnPrediction> preds;
    std::vector<double> h(m.config.gru_dim, 0.0);
    for (const PreparedTurn& turn : dialog.turns) {
      for (const std::string& token : turn.system_tokens) {
        h = gru(embed_project(token), h);
      }
      const std::vector<double> s = h;
      for (const cnet::Timestep& step : turn.user_input.timesteps) {
        std::vector<std::vector<double>> states;
        std::vector<double> scores;
        for (const cnet::Hypothesis& hyp : step.hypotheses) {
          states.push_back(gru(embed_project(hyp.token), h));
          scores.push_back(std::exp(hyp.log_score));
        }
        std::vector<double> pooled(h.size(), 0.0);
        if (m.config.pooling.mode == encoder::PoolingMode::kAverage) {
          for (const auto& st : states)
            for (std::size_t i = 0; i < pooled.size(); ++i)
              pooled[i] += st[i] / static_cast<double>(states.size());
        } else {
          for (std::size_t k = 0; k < states.size(); ++k)
            for (std::size_t i = 0; i < pooled.size(); ++i)
              pooled[i] += scores[k] * states[k][i];
        }
        h = pooled;
      }
      const std::vector<double> u = h;

      std::vector<double> c = matvec(m.combiner.w_system, s,
                                     m.combiner.bias.data);
      const std::vector<double> cu = matvec(m.combiner.w_user, u, {});
      for (std::size_t i = 0; i < c.size(); ++i) c[i] += cu[i];

      TurnPrediction pred;
      for (const auto& [slot, head] : m.goal_heads) {
        std::vector<double> logits = matvec(head.weight, c, head.bias.data);
        const double mx = *std::max_element(logits.begin(), logits.end());
        double total = 0.0;
        for (double& v : logits) {
          v = std::exp(v - mx);
          total += v;
        }
        for (double& v : logits) v /= total;
        pred.goal_probs[slot] = logits;
      }
      for (const auto& [slot, head] : m.request_heads) {
        const double logit = matvec(head.weight, c, head.bias.data)[0];
        pred.request_probs[slot] = 1.0 / (1.0 + std::exp(-logit));
      }
      preds.push_back(std::move(pred));
    }
    return preds;
  }
};

}  // namespace

TEST_CASE("freshly zeroed heads give uniform goals and 0.5 requests") {
  Fixture fx;
  DstModel m = DstModel::init(desk_config(3), fx.ontology, fx.vocab);
  zero_heads(m);
  PrepareOptions opts;
  opts.view = UtteranceView::kCnet;
  const PreparedDialog dialog =
      prepare_dialog(fx.dialogs[0], fx.act_map, opts);
  const std::vector<TurnPrediction> preds = forward_dialog(dialog, m);
  REQUIRE(!preds.empty());
  for (const TurnPrediction& pred : preds) {
    for (const auto& [slot, probs] : pred.goal_probs) {
      const double uniform = 1.0 / static_cast<double>(probs.size());
      for (double p : probs) CHECK(p == doctest::Approx(uniform).epsilon(1e-12));
    }
    for (const auto& [slot, p] : pred.request_probs) CHECK(p == 0.5);
    CHECK(pred.decision.requests.empty());  // strictly-above threshold
  }
}

TEST_CASE("token projection: zero weights and unknown tokens") {
  Fixture fx;
  DstModel m = DstModel::init(desk_config(4), fx.ontology, fx.vocab);

  SUBCASE("zero dense weights map every token to relu of the bias") {
    m.dense_weight = m.dense_weight.zeros_like();
    for (std::size_t i = 0; i < m.dense_bias.size(); ++i) {
      m.dense_bias[i] = (i % 2 == 0) ? 0.5 : -0.5;
    }
    const Tensor a = project_token(m, "thai");
    const Tensor b = project_token(m, "food");
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double expected = (i % 2 == 0) ? 0.5 : 0.0;
      CHECK(a[i] == expected);
      CHECK(b[i] == expected);
    }
  }
  SUBCASE("UNK and a never-seen token produce identical vectors") {
    const Tensor unk = project_token(m, "<unk>");
    const Tensor unseen = project_token(m, "zzz-not-in-any-corpus");
    CHECK(unk.data == unseen.data);
  }
  SUBCASE("agrees with the straight-line reimplementation") {
    const Tensor a = project_token(m, "thai");
    const std::vector<double> b = PlainForward{m}.embed_project("thai");
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i)
      CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
  }
}

TEST_CASE("identical dialogs produce identical predictions") {
  Fixture fx;
  const DstModel m = DstModel::init(desk_config(5), fx.ontology, fx.vocab);
  PrepareOptions opts;
  const PreparedDialog dialog = prepare_dialog(fx.dialogs[1], fx.act_map, opts);
  const auto a = forward_dialog(dialog, m);
  const auto b = forward_dialog(dialog, m);
  REQUIRE(a.size() == b.size());
  for (std::size_t t = 0; t < a.size(); ++t) {
    CHECK(a[t].goal_probs == b[t].goal_probs);
    CHECK(a[t].request_probs == b[t].request_probs);
    CHECK(a[t].decision == b[t].decision);
  }
}

TEST_CASE("goal distributions sum to one at every turn") {
  Fixture fx;
  const DstModel m = DstModel::init(desk_config(7), fx.ontology, fx.vocab);
  PrepareOptions opts;
  for (const corpus::Dialog& d : fx.dialogs) {
    const PreparedDialog dialog = prepare_dialog(d, fx.act_map, opts);
    for (const TurnPrediction& pred : forward_dialog(dialog, m)) {
      for (const auto& [slot, probs] : pred.goal_probs) {
        double total = 0.0;
        for (double p : probs) total += p;
        CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
      }
      for (const auto& [slot, p] : pred.request_probs) {
        CHECK(p >= 0.0);
        CHECK(p <= 1.0);
      }
    }
  }
}

TEST_CASE("forward matches an independent straight-line reimplementation") {
  Fixture fx(11, 3, 0.5);
  for (const encoder::PoolingMode mode :
       {encoder::PoolingMode::kAverage, encoder::PoolingMode::kWeighted}) {
    ModelConfig config = desk_config(13);
    config.pooling.mode = mode;
    const DstModel m = DstModel::init(config, fx.ontology, fx.vocab);
    PrepareOptions opts;  // pruned cnet view
    const PreparedDialog dialog =
        prepare_dialog(fx.dialogs[2], fx.act_map, opts);
    REQUIRE(dialog.turns.size() == 3);

    const std::vector<TurnPrediction> actual = forward_dialog(dialog, m);
    const std::vector<TurnPrediction> expected = PlainForward{m}.run(dialog);
    REQUIRE(actual.size() == expected.size());
    for (std::size_t t = 0; t < actual.size(); ++t) {
      for (const auto& [slot, probs] : expected[t].goal_probs) {
        const auto& got = actual[t].goal_probs.at(slot);
        REQUIRE(got.size() == probs.size());
        for (std::size_t i = 0; i < probs.size(); ++i)
          CHECK(got[i] == doctest::Approx(probs[i]).epsilon(1e-10));
      }
      for (const auto& [slot, p] : expected[t].request_probs) {
        CHECK(actual[t].request_probs.at(slot) ==
              doctest::Approx(p).epsilon(1e-10));
      }
    }
  }
}

TEST_CASE("a model that emits the gold labels has only the l2 loss left") {
  Fixture fx;
  DstModel m = DstModel::init(desk_config(17), fx.ontology, fx.vocab);
  PrepareOptions opts;
  PreparedDialog dialog = prepare_dialog(fx.dialogs[0], fx.act_map, opts);
  // One shared gold across turns so constant heads can be exactly right.
  DialogState gold;
  gold.goals = {{"area", "north"}, {"food", "thai"}, {"pricerange", "none"}};
  gold.requests = {"phone"};
  for (auto& turn : dialog.turns) turn.gold = gold;

  for (auto& [slot, head] : m.goal_heads) {
    head.weight = head.weight.zeros_like();
    head.bias = head.bias.zeros_like();
    head.bias[fx.ontology.value_index(slot, gold.goal(slot))] = 50.0;
  }
  for (auto& [slot, head] : m.request_heads) {
    head.weight = head.weight.zeros_like();
    head.bias = head.bias.zeros_like();
    head.bias[0] = gold.requests.count(slot) ? 50.0 : -50.0;
  }

  const double lambda = 0.001;
  double expected_l2 = 0.0;
  for (const NamedParam& p : m.named_params()) {
    if (!p.is_weight_matrix) continue;
    for (double v : p.tensor->data) expected_l2 += v * v;
  }
  expected_l2 *= lambda;

  std::vector<DialogState> golds(dialog.turns.size(), gold);
  const double loss = dialog_loss(dialog, golds, m, lambda);
  CHECK(loss == doctest::Approx(expected_l2).epsilon(1e-9));
}

TEST_CASE("uniform heads yield the entropy of the output spaces") {
  Fixture fx;
  DstModel m = DstModel::init(desk_config(19), fx.ontology, fx.vocab);
  zero_heads(m);
  PrepareOptions opts;
  const PreparedDialog dialog = prepare_dialog(fx.dialogs[0], fx.act_map, opts);
  std::vector<DialogState> golds;
  for (const auto& turn : dialog.turns) golds.push_back(turn.gold);

  double per_turn = 0.0;
  for (const auto& [slot, values] : fx.ontology.goal_slots) {
    per_turn += std::log(static_cast<double>(fx.ontology.output_size(slot)));
  }
  per_turn += static_cast<double>(fx.ontology.requestable_slots.size()) *
              std::log(2.0);
  const double expected = per_turn * static_cast<double>(dialog.turns.size());
  CHECK(dialog_loss(dialog, golds, m, 0.0) ==
        doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("dialog_loss rejects misaligned gold") {
  Fixture fx;
  const DstModel m = DstModel::init(desk_config(23), fx.ontology, fx.vocab);
  PrepareOptions opts;
  const PreparedDialog dialog = prepare_dialog(fx.dialogs[0], fx.act_map, opts);
  const std::vector<DialogState> wrong(dialog.turns.size() + 1);
  CHECK_THROWS_AS(dialog_loss(dialog, wrong, m, 0.0), DataError);
}

TEST_CASE("full-model gradients pass the finite-difference check") {
  Fixture fx(29, 2, 0.5);
  PrepareOptions opts;
  PreparedDialog dialog = prepare_dialog(fx.dialogs[0], fx.act_map, opts);
  dialog.turns.resize(2);

  const double step = 1e-4;
  // Re-draw the model until every ReLU input clears the step size, so the
  // central differences never straddle the kink.
  DstModel m = DstModel::init(desk_config(31), fx.ontology, fx.vocab);
  for (std::uint64_t seed = 32; min_relu_preactivation_gap(m, dialog) < 4 * step;
       ++seed) {
    m = DstModel::init(desk_config(seed), fx.ontology, fx.vocab);
    REQUIRE(seed < 64);  // plenty of attempts
  }

  std::vector<NamedParam> params = m.named_params();
  LossFn loss = [&](std::vector<Tensor>* grads) {
    return corpus_loss({&dialog}, m, 0.001, 1.0, false, nullptr, grads);
  };
  const GradCheckReport report = grad_check(loss, params, step);
  CHECK(report.max_rel_error < 1e-4);
}

TEST_CASE("joint accuracy is conjunctive over slots and exact over requests") {
  const Ontology ontology = corpus::synthetic_ontology();
  auto pred_for = [&](const DialogState& state) {
    TurnPrediction p;
    p.decision = state;
    return p;
  };
  DialogState right;
  right.goals = {{"area", "north"}, {"food", "thai"}, {"pricerange", "cheap"}};
  right.requests = {"phone"};

  SUBCASE("everything correct") {
    const std::vector<TurnPrediction> preds(3, pred_for(right));
    const std::vector<DialogState> gold(3, right);
    const auto [goals, requests] = joint_accuracy(preds, gold, ontology);
    CHECK(goals == doctest::Approx(100.0));
    CHECK(requests == doctest::Approx(100.0));
  }
  SUBCASE("one wrong slot per turn zeroes the joint goals") {
    DialogState off = right;
    off.goals["pricerange"] = "expensive";
    const std::vector<TurnPrediction> preds(4, pred_for(off));
    const std::vector<DialogState> gold(4, right);
    const auto [goals, requests] = joint_accuracy(preds, gold, ontology);
    CHECK(goals == doctest::Approx(0.0));
    CHECK(requests == doctest::Approx(100.0));
  }
  SUBCASE("mixed ten-turn fixture matches the hand count") {
    DialogState goal_off = right;
    goal_off.goals["food"] = "chinese";
    DialogState req_off = right;
    req_off.requests = {"phone", "address"};

    std::vector<TurnPrediction> preds;
    std::vector<DialogState> gold(10, right);
    // Turns 0-3 fully correct, 4-6 goal wrong, 7 requests wrong, 8-9 correct.
    for (int i = 0; i < 4; ++i) preds.push_back(pred_for(right));
    for (int i = 0; i < 3; ++i) preds.push_back(pred_for(goal_off));
    preds.push_back(pred_for(req_off));
    for (int i = 0; i < 2; ++i) preds.push_back(pred_for(right));
    const auto [goals, requests] = joint_accuracy(preds, gold, ontology);
    CHECK(goals == doctest::Approx(70.0));
    CHECK(requests == doctest::Approx(90.0));
  }
  SUBCASE("misalignment is an error") {
    const std::vector<TurnPrediction> preds(2, pred_for(right));
    const std::vector<DialogState> gold(3, right);
    CHECK_THROWS_AS(joint_accuracy(preds, gold, ontology), DataError);
  }
  SUBCASE("a prediction missing a goal slot is an error") {
    TurnPrediction incomplete;
    incomplete.decision.goals = {{"area", "north"}};
    CHECK_THROWS_AS(
        joint_accuracy({incomplete}, {right}, ontology), DataError);
  }
}

TEST_CASE("an ensemble of copies behaves like a single model") {
  Fixture fx;
  const DstModel m = DstModel::init(desk_config(37), fx.ontology, fx.vocab);
  PrepareOptions opts;
  const PreparedDialog dialog = prepare_dialog(fx.dialogs[0], fx.act_map, opts);
  const auto single = forward_dialog(dialog, m);
  const auto trio = ensemble_predict({&m, &m, &m}, dialog);
  REQUIRE(single.size() == trio.size());
  for (std::size_t t = 0; t < single.size(); ++t) {
    for (const auto& [slot, probs] : single[t].goal_probs) {
      const auto& got = trio[t].goal_probs.at(slot);
      for (std::size_t i = 0; i < probs.size(); ++i)
        CHECK(got[i] == doctest::Approx(probs[i]).epsilon(1e-12));
    }
    CHECK(trio[t].decision == single[t].decision);
  }
}

TEST_CASE("ensembling averages opposing confident heads to a coin flip") {
  Fixture fx;
  DstModel a = DstModel::init(desk_config(41, "food"), fx.ontology, fx.vocab);
  DstModel b = DstModel::init(desk_config(41, "food"), fx.ontology, fx.vocab);
  for (auto& [slot, head] : a.goal_heads) {
    head.weight = head.weight.zeros_like();
    head.bias = head.bias.zeros_like();
    head.bias[0] = 50.0;
  }
  for (auto& [slot, head] : b.goal_heads) {
    head.weight = head.weight.zeros_like();
    head.bias = head.bias.zeros_like();
    head.bias[1] = 50.0;
  }
  PrepareOptions opts;
  const PreparedDialog dialog = prepare_dialog(fx.dialogs[0], fx.act_map, opts);
  const auto preds = ensemble_predict({&a, &b}, dialog);
  const auto& probs = preds[0].goal_probs.at("food");
  CHECK(probs[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(probs[1] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("ensembles of three seeds match the explicit mean of members") {
  Fixture fx;
  std::vector<DstModel> models;
  for (std::uint64_t seed : {101, 102, 103}) {
    models.push_back(DstModel::init(desk_config(seed), fx.ontology, fx.vocab));
  }
  PrepareOptions opts;
  const PreparedDialog dialog = prepare_dialog(fx.dialogs[1], fx.act_map, opts);
  const auto ensembled =
      ensemble_predict({&models[0], &models[1], &models[2]}, dialog);

  std::vector<std::vector<TurnPrediction>> separate;
  for (const DstModel& m : models) separate.push_back(forward_dialog(dialog, m));
  for (std::size_t t = 0; t < ensembled.size(); ++t) {
    for (const auto& [slot, probs] : ensembled[t].goal_probs) {
      for (std::size_t i = 0; i < probs.size(); ++i) {
        const double mean = (separate[0][t].goal_probs.at(slot)[i] +
                             separate[1][t].goal_probs.at(slot)[i] +
                             separate[2][t].goal_probs.at(slot)[i]) /
                            3.0;
        CHECK(probs[i] == doctest::Approx(mean).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("heterogeneous ensembles are rejected") {
  Fixture fx;
  const DstModel a = DstModel::init(desk_config(43), fx.ontology, fx.vocab);
  ModelConfig other = desk_config(43);
  other.gru_dim = 5;
  const DstModel b = DstModel::init(other, fx.ontology, fx.vocab);
  PrepareOptions opts;
  const PreparedDialog dialog = prepare_dialog(fx.dialogs[0], fx.act_map, opts);
  CHECK_THROWS_AS(ensemble_predict({&a, &b}, dialog), DataError);
}

TEST_CASE("adding a constant to a head's logits leaves decisions unchanged") {
  Fixture fx;
  DstModel m = DstModel::init(desk_config(47), fx.ontology, fx.vocab);
  PrepareOptions opts;
  const PreparedDialog dialog = prepare_dialog(fx.dialogs[0], fx.act_map, opts);
  const auto before = forward_dialog(dialog, m);
  for (auto& [slot, head] : m.goal_heads) {
    for (double& v : head.bias.data) v += 3.25;
  }
  const auto after = forward_dialog(dialog, m);
  for (std::size_t t = 0; t < before.size(); ++t) {
    CHECK(after[t].decision.goals == before[t].decision.goals);
  }
}

TEST_CASE("checkpoints round-trip bit-exactly") {
  Fixture fx;
  const std::string path = "/tmp/cnetdst_test_model.ckpt";
  DstModel m = DstModel::init(desk_config(53, "food"), fx.ontology, fx.vocab);
  save_checkpoint(m, path);
  DstModel loaded = load_checkpoint(path, fx.ontology);
  CHECK(loaded.config.head_group == "food");
  CHECK(loaded.config.seed == 53);
  CHECK(loaded.vocab == m.vocab);
  const auto a = m.named_params();
  auto b = loaded.named_params();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].name == b[i].name);
    CHECK(a[i].tensor->shape == b[i].tensor->shape);
    CHECK(a[i].tensor->data == b[i].tensor->data);  // bitwise
  }
  fs::remove(path);
}

TEST_CASE("checkpoint loading rejects damage and mismatches") {
  Fixture fx;
  const std::string path = "/tmp/cnetdst_test_damage.ckpt";
  DstModel m = DstModel::init(desk_config(59, "requests"), fx.ontology,
                              fx.vocab);
  save_checkpoint(m, path);
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string content = buf.str();
  in.close();

  SUBCASE("truncation breaks the checksum, no partial model") {
    {
      std::ofstream out(path, std::ios::binary);
      out << content.substr(0, content.size() / 2);
    }
    try {
      load_checkpoint(path, fx.ontology);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(std::string(e.what()).find("checksum") != std::string::npos);
    }
  }
  SUBCASE("a different ontology is refused by hash") {
    Ontology other = fx.ontology;
    other.goal_slots[0].second.push_back("zanzibar");
    try {
      load_checkpoint(path, other);
      FAIL("expected DataError");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find("ontology") != std::string::npos);
    }
  }
  SUBCASE("a foreign header is a version mismatch") {
    {
      std::ofstream out(path, std::ios::binary);
      std::string changed = content;
      changed.replace(changed.find("v1"), 2, "v9");
      // Re-stamp the checksum so only the version differs.
      const auto tail = changed.rfind("checksum ");
      const std::string body = changed.substr(0, tail);
      char hex[17];
      std::snprintf(hex, sizeof(hex), "%016llx",
                    static_cast<unsigned long long>(fnv1a(body)));
      out << body << "checksum " << hex << "\n";
    }
    try {
      load_checkpoint(path, fx.ontology);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(std::string(e.what()).find("version") != std::string::npos);
    }
  }
  SUBCASE("an inconsistent tensor shape names the tensor") {
    {
      std::ofstream out(path, std::ios::binary);
      std::string changed = content;
      // dense_bias has desk dimension 8; claim 4,2 instead (same payload).
      const std::string needle = "tensor dense_bias 8 ";
      const auto pos = changed.find(needle);
      REQUIRE(pos != std::string::npos);
      changed.replace(pos, needle.size(), "tensor dense_bias 4,2 ");
      const auto tail = changed.rfind("checksum ");
      const std::string body = changed.substr(0, tail);
      char hex[17];
      std::snprintf(hex, sizeof(hex), "%016llx",
                    static_cast<unsigned long long>(fnv1a(body)));
      out << body << "checksum " << hex << "\n";
    }
    try {
      load_checkpoint(path, fx.ontology);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(std::string(e.what()).find("dense_bias") != std::string::npos);
    }
  }
  fs::remove(path);
}

TEST_CASE("training for zero epochs returns the initialized model") {
  Fixture fx;
  TrainConfig tc;
  tc.model = desk_config(61);
  tc.epochs = 0;
  tc.batch_dialogs = 2;
  const TrainResult result =
      train_model(fx.dialogs, fx.ontology, fx.vocab, fx.act_map, tc);
  CHECK(result.epoch_losses.empty());
  DstModel fresh = DstModel::init(tc.model, fx.ontology, fx.vocab);
  DstModel trained = result.model;
  const auto a = fresh.named_params();
  auto b = trained.named_params();
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].tensor->data == b[i].tensor->data);
  }
}

TEST_CASE("training is deterministic for a fixed seed") {
  Fixture fx(67, 3, 0.3);
  TrainConfig tc;
  tc.model = desk_config(67);
  tc.epochs = 3;
  tc.batch_dialogs = 2;
  const TrainResult a =
      train_model(fx.dialogs, fx.ontology, fx.vocab, fx.act_map, tc);
  const TrainResult b =
      train_model(fx.dialogs, fx.ontology, fx.vocab, fx.act_map, tc);
  CHECK(a.epoch_losses == b.epoch_losses);  // bit-identical
  DstModel ma = a.model, mb = b.model;
  const auto pa = ma.named_params();
  auto pb = mb.named_params();
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i].tensor->data == pb[i].tensor->data);
  }
}

TEST_CASE("training reduces the loss on a small corpus") {
  Fixture fx(71, 4, 0.2);
  TrainConfig tc;
  tc.model = desk_config(71);
  tc.epochs = 12;
  tc.batch_dialogs = 2;
  const TrainResult result =
      train_model(fx.dialogs, fx.ontology, fx.vocab, fx.act_map, tc);
  REQUIRE(result.epoch_losses.size() == 12);
  for (double loss : result.epoch_losses) CHECK(std::isfinite(loss));
  CHECK(result.epoch_losses.back() < result.epoch_losses.front());
}

TEST_CASE("head groups split the ontology and keep the epoch defaults") {
  const Ontology ontology = corpus::synthetic_ontology();
  const std::vector<std::string> groups = head_groups(ontology);
  CHECK(groups ==
        std::vector<std::string>{"area", "food", "pricerange", "requests"});
  CHECK(default_epochs_for_group("requests") == 20);
  CHECK(default_epochs_for_group("food") == 100);
  CHECK(default_epochs_for_group("area") == 50);
  CHECK(default_epochs_for_group("pricerange") == 50);

  Fixture fx;
  const DstModel food =
      DstModel::init(desk_config(73, "food"), fx.ontology, fx.vocab);
  CHECK(food.active_goal_slots() == std::vector<std::string>{"food"});
  CHECK(!food.has_request_heads());
  CHECK(food.goal_heads.size() == 1);
  CHECK(food.request_heads.empty());

  const DstModel requests =
      DstModel::init(desk_config(73, "requests"), fx.ontology, fx.vocab);
  CHECK(requests.active_goal_slots().empty());
  CHECK(requests.has_request_heads());
  CHECK(requests.request_heads.size() == 4);

  CHECK_THROWS_AS(
      DstModel::init(desk_config(73, "bogus"), fx.ontology, fx.vocab),
      ConfigError);
}

TEST_CASE("partial head-group models merge into complete predictions") {
  Fixture fx;
  std::vector<DstModel> models;
  for (const std::string& group : head_groups(fx.ontology)) {
    models.push_back(
        DstModel::init(desk_config(79, group), fx.ontology, fx.vocab));
  }
  std::vector<const DstModel*> ptrs;
  for (const DstModel& m : models) ptrs.push_back(&m);
  PrepareOptions opts;
  const PreparedDialog dialog = prepare_dialog(fx.dialogs[0], fx.act_map, opts);
  const auto preds = predict_with_models(ptrs, dialog);
  REQUIRE(preds.size() == dialog.turns.size());
  for (const TurnPrediction& pred : preds) {
    CHECK(pred.goal_probs.size() == 3);
    CHECK(pred.request_probs.size() == 4);
    CHECK(pred.decision.goals.size() == 3);
  }
  // Overlapping coverage is rejected.
  std::vector<const DstModel*> overlapping = {ptrs[0], ptrs[0]};
  CHECK_THROWS_AS(predict_with_models(overlapping, dialog), DataError);
}
