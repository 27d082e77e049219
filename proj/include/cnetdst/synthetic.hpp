#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cnetdst/corpus.hpp"
#include "cnetdst/ontology.hpp"

namespace cnetdst::corpus {

// Desk-scale stand-in for a real restaurant-domain corpus. User cnets are
// built by corrupting the transcript:
//   p_confuse  a timestep gains lower-scored distractor hypotheses
//   p_swap     the top hypothesis becomes a distractor; the true word
//              survives at lower confidence (the regime where cnets beat
//              the 1-best)
//   p_interj   an interjection timestep is inserted before the word
//   p_drop     the true word is deleted outright (off unless configured)
struct SyntheticConfig {
  std::size_t n_dialogs = 20;
  std::size_t turns_per_dialog = 4;
  double p_confuse = 0.0;
  double p_swap = 0.0;
  double p_interj = 0.0;
  double p_drop = 0.0;
  std::uint64_t seed = 1;
};

// area/food/pricerange with small value sets plus four requestable slots.
Ontology synthetic_ontology();

std::vector<Dialog> generate_synthetic(const SyntheticConfig& config);

}  // namespace cnetdst::corpus
