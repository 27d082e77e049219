#include "cnetdst/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "cnetdst/rng.hpp"

namespace cnetdst::corpus {

namespace {

using cnet::ConfusionNetwork;
using cnet::Hypothesis;
using cnet::Timestep;

const std::vector<std::string> kInterjections = {"uh", "ah", "oh", "um"};

// Every template below uses pairwise-distinct tokens (after value
// substitution), which keeps per-occurrence coverage counts unbiased.
std::vector<std::string> inform_utterance(const std::string& slot,
                                          const std::string& value, Rng& rng) {
  if (slot == "food") {
    return rng.bernoulli(0.5)
               ? std::vector<std::string>{"i", "want", value, "food"}
               : std::vector<std::string>{"looking", "for", value, "food"};
  }
  if (slot == "area") {
    return rng.bernoulli(0.5)
               ? std::vector<std::string>{"somewhere", "in", "the", value}
               : std::vector<std::string>{"in",   "the",  value,
                                          "part", "of", "town"};
  }
  return rng.bernoulli(0.5)
             ? std::vector<std::string>{value, "restaurant", "please"}
             : std::vector<std::string>{"i", "need", "a", value, "restaurant"};
}

std::vector<std::string> dontcare_utterance(const std::string& slot) {
  if (slot == "food") return {"any", "kind", "of", "food"};
  if (slot == "area") return {"any", "area", "is", "fine"};
  return {"any", "price", "range"};
}

std::vector<std::string> request_words(const std::string& slot) {
  if (slot == "phone") return {"phone", "number"};
  return {slot};
}

std::vector<std::string> request_utterance(
    const std::vector<std::string>& slots) {
  std::vector<std::string> out;
  if (slots.size() == 1) {
    if (slots[0] == "address") return {"can", "i", "get", "the", "address"};
    out = {"what", "is", "the"};
    for (const std::string& w : request_words(slots[0])) out.push_back(w);
    return out;
  }
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (i) out.push_back("and");
    for (const std::string& w : request_words(slots[i])) out.push_back(w);
  }
  return out;
}

// Words the corrupted cnets may hallucinate, beyond the ontology values.
std::vector<std::string> distractor_pool(const Ontology& ontology) {
  std::vector<std::string> pool = {
      "i",    "want",       "looking", "for",   "somewhere",  "in",
      "the",  "part",       "of",      "town",  "restaurant", "please",
      "need", "a",          "any",     "kind",  "area",       "is",
      "fine", "price",      "range",   "what",  "phone",      "number",
      "can",  "get",        "address", "thank", "you",        "good",
      "bye",  "yes",        "and",     "food",  "something",  "welcome"};
  for (const auto& [slot, values] : ontology.goal_slots) {
    pool.insert(pool.end(), values.begin(), values.end());
  }
  std::sort(pool.begin(), pool.end());
  pool.erase(std::unique(pool.begin(), pool.end()), pool.end());
  return pool;
}

std::string sample_distractor(const std::vector<std::string>& pool,
                              const std::set<std::string>& forbidden,
                              Rng& rng) {
  while (true) {
    const std::string& candidate = pool[rng.below(pool.size())];
    if (!forbidden.count(candidate)) return candidate;
  }
}

void push_step(ConfusionNetwork& net, std::vector<Hypothesis> hyps) {
  // Higher-scored hypotheses first, matching how real logs are written.
  std::stable_sort(hyps.begin(), hyps.end(),
                   [](const Hypothesis& a, const Hypothesis& b) {
                     return a.log_score > b.log_score;
                   });
  Timestep step;
  step.start = static_cast<double>(net.timesteps.size());
  step.end = step.start + 1.0;
  step.hypotheses = std::move(hyps);
  net.timesteps.push_back(std::move(step));
}

ConfusionNetwork corrupt_transcript(const std::vector<std::string>& tokens,
                                    const SyntheticConfig& cfg,
                                    const std::vector<std::string>& pool,
                                    Rng& rng) {
  const std::set<std::string> transcript_set(tokens.begin(), tokens.end());
  ConfusionNetwork net;
  auto log_of = [](double p) { return std::log(p); };
  for (const std::string& token : tokens) {
    if (cfg.p_interj > 0.0 && rng.bernoulli(cfg.p_interj)) {
      const std::string& interj = kInterjections[rng.below(kInterjections.size())];
      const double conf = rng.uniform(0.3, 0.8);
      push_step(net, {{interj, log_of(conf)},
                      {cnet::kNullToken, log_of(1.0 - conf)}});
    }
    std::set<std::string> forbidden = transcript_set;
    if (cfg.p_drop > 0.0 && rng.bernoulli(cfg.p_drop)) {
      const std::string d = sample_distractor(pool, forbidden, rng);
      push_step(net, {{d, log_of(rng.uniform(0.5, 0.9))}});
    } else if (cfg.p_swap > 0.0 && rng.bernoulli(cfg.p_swap)) {
      const std::string d = sample_distractor(pool, forbidden, rng);
      const double conf_top = rng.uniform(0.45, 0.75);
      const double conf_truth = rng.uniform(0.10, 0.40);
      std::vector<Hypothesis> hyps = {{d, log_of(conf_top)},
                                      {token, log_of(conf_truth)}};
      if (rng.bernoulli(0.5)) {
        forbidden.insert(d);
        const std::string d2 = sample_distractor(pool, forbidden, rng);
        hyps.push_back({d2, log_of(rng.uniform(0.01, conf_truth * 0.5))});
      }
      if (rng.bernoulli(0.5)) {
        hyps.push_back({cnet::kNullToken, log_of(0.02)});
      }
      push_step(net, std::move(hyps));
    } else if (cfg.p_confuse > 0.0 && rng.bernoulli(cfg.p_confuse)) {
      const double conf_truth = rng.uniform(0.55, 0.90);
      std::vector<Hypothesis> hyps = {{token, log_of(conf_truth)}};
      const std::size_t extras = 1 + rng.below(2);
      for (std::size_t e = 0; e < extras; ++e) {
        const std::string d = sample_distractor(pool, forbidden, rng);
        forbidden.insert(d);
        hyps.push_back({d, log_of(rng.uniform(0.02, conf_truth * 0.5))});
      }
      if (rng.bernoulli(0.5)) {
        hyps.push_back({cnet::kNullToken, log_of(0.01)});
      }
      push_step(net, std::move(hyps));
    } else {
      push_step(net, {{token, 0.0}});
    }
  }
  return net;
}

std::string dialog_id(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "dlg_%04zu", i);
  return buf;
}

}  // namespace

Ontology synthetic_ontology() {
  Ontology o;
  o.goal_slots = {
      {"area", {"north", "south", "east", "west", "centre"}},
      {"food", {"thai", "chinese", "indian", "italian", "british", "french"}},
      {"pricerange", {"cheap", "moderate", "expensive"}},
  };
  o.requestable_slots = {"address", "name", "phone", "postcode"};
  o.validate();
  return o;
}

std::vector<Dialog> generate_synthetic(const SyntheticConfig& config) {
  const Ontology ontology = synthetic_ontology();
  const std::vector<std::string> pool = distractor_pool(ontology);
  Rng rng(config.seed);

  std::vector<Dialog> dialogs;
  dialogs.reserve(config.n_dialogs);
  for (std::size_t d = 0; d < config.n_dialogs; ++d) {
    Dialog dialog;
    dialog.id = dialog_id(d);

    std::vector<std::string> pending = {"area", "food", "pricerange"};
    // Shuffle the order in which the user reveals goals.
    for (std::size_t i = pending.size(); i > 1; --i) {
      std::swap(pending[i - 1], pending[rng.below(i)]);
    }
    DialogState state;
    for (const auto& [slot, values] : ontology.goal_slots) {
      state.goals[slot] = kNoneValue;
    }

    std::vector<std::string> unrequested = ontology.requestable_slots;
    std::string confirm_slot;  // set when the system just asked expl-conf

    for (std::size_t t = 0; t < config.turns_per_dialog; ++t) {
      DialogTurn turn;
      std::vector<std::string> utterance;

      auto inform = [&](const std::string& slot) {
        if (rng.bernoulli(0.15)) {
          state.goals[slot] = kDontCareValue;
          utterance = dontcare_utterance(slot);
        } else {
          const auto& values = ontology.goal_values(slot);
          const std::string& value = values[rng.below(values.size())];
          state.goals[slot] = value;
          utterance = inform_utterance(slot, value, rng);
        }
      };

      if (!confirm_slot.empty()) {
        turn.system_acts.push_back(
            {"expl-conf", confirm_slot, state.goals[confirm_slot]});
        utterance = {"yes"};
        confirm_slot.clear();
      } else if (t == 0) {
        turn.system_acts.push_back({"welcomemsg", "", ""});
        if (rng.bernoulli(0.25)) {
          // The opening utterance covers food and area at once.
          const auto& food_values = ontology.goal_values("food");
          const auto& area_values = ontology.goal_values("area");
          const std::string fv = food_values[rng.below(food_values.size())];
          const std::string av = area_values[rng.below(area_values.size())];
          pending = {"pricerange"};
          state.goals["food"] = fv;
          state.goals["area"] = av;
          utterance = {"i", "want", fv, "food", "in", "the", av};
        } else {
          inform(pending.back());
          pending.pop_back();
        }
      } else if (!pending.empty()) {
        const std::string slot = pending.back();
        pending.pop_back();
        turn.system_acts.push_back({"request", slot, ""});
        inform(slot);
        if (state.goals[slot] != kDontCareValue && rng.bernoulli(0.2)) {
          confirm_slot = slot;
        }
      } else if (!unrequested.empty() &&
                 (t + 1 < config.turns_per_dialog || rng.bernoulli(0.7))) {
        turn.system_acts.push_back({"offer", "", ""});
        std::vector<std::string> asked;
        const std::size_t n_req =
            1 + (unrequested.size() > 1 && rng.bernoulli(0.35) ? 1 : 0);
        for (std::size_t k = 0; k < n_req; ++k) {
          const std::size_t pick = rng.below(unrequested.size());
          asked.push_back(unrequested[pick]);
          unrequested.erase(unrequested.begin() +
                            static_cast<std::ptrdiff_t>(pick));
        }
        std::sort(asked.begin(), asked.end());
        utterance = request_utterance(asked);
        state.requests = {asked.begin(), asked.end()};
      } else {
        turn.system_acts.push_back({"reqmore", "", ""});
        utterance = {"thank", "you", "good", "bye"};
      }

      turn.user_transcript = utterance;
      turn.user_cnet = corrupt_transcript(utterance, config, pool, rng);
      turn.gold_state = state;
      dialog.turns.push_back(std::move(turn));
      state.requests.clear();  // requests are per-turn, goals accumulate
    }
    dialogs.push_back(std::move(dialog));
  }
  return dialogs;
}

}  // namespace cnetdst::corpus
