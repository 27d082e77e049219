#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cnetdst/errors.hpp"

namespace cnetdst::cnet {

// Token marking "no word spoken here". Kept as an ordinary vocabulary item
// with its own embedding; pruning treats it specially (see prune_cnet).
inline constexpr const char* kNullToken = "!null";

// One scored word hypothesis. log_score is a natural-log posterior, <= 0
// after parsing (positive file values are clamped with a warning).
struct Hypothesis {
  std::string token;
  double log_score = 0.0;

  bool operator==(const Hypothesis&) const = default;
};

// The k >= 1 alternative hypotheses competing for one time interval.
struct Timestep {
  double start = 0.0;
  double end = 0.0;
  std::vector<Hypothesis> hypotheses;

  bool operator==(const Timestep&) const = default;
};

// Ordered, non-overlapping timesteps: steps[i].end <= steps[i+1].start + 1e-9.
struct ConfusionNetwork {
  std::vector<Timestep> timesteps;

  bool empty() const { return timesteps.empty(); }
  std::size_t size() const { return timesteps.size(); }
  std::size_t hypothesis_count() const {
    std::size_t n = 0;
    for (const auto& t : timesteps) n += t.hypotheses.size();
    return n;
  }

  bool operator==(const ConfusionNetwork&) const = default;
};

struct CoverageReport {
  double all_words_pct = 0.0;
  // Absent when the slot/value vocabulary is empty.
  std::optional<double> slot_value_words_pct;
  std::size_t utterance_count = 0;
  double avg_timesteps = 0.0;
  double avg_hypotheses_per_timestep = 0.0;
};

// Parses one utterance in the whitespace log format:
//   <idx> <start> <end> (<token> (<log_score>))+
// '#'-prefixed lines are comments. idx must start at 1 and strictly increase.
// Warnings (clamped positive scores, merged duplicate tokens) are appended to
// *warnings when given.
ConfusionNetwork parse_cnet(const std::string& text,
                            std::vector<std::string>* warnings = nullptr);

// Splits a multi-utterance file into blank-line-separated blocks and parses
// each block. Block order is utterance order.
std::vector<ConfusionNetwork> parse_cnet_blocks(
    const std::string& text, std::vector<std::string>* warnings = nullptr);

// Canonical text form; parse_cnet(serialize_cnet(c)) reproduces c exactly.
std::string serialize_cnet(const ConfusionNetwork& cnet);

// Drops hypotheses whose token is an interjection or whose posterior
// exp(log_score) falls below prob_threshold. Timesteps left empty, or left
// with only !null, are removed entirely. Scores are not renormalized unless
// renormalize is set, in which case surviving per-timestep posteriors are
// rescaled to sum to one.
ConfusionNetwork prune_cnet(const ConfusionNetwork& cnet,
                            const std::set<std::string>& interjections,
                            double prob_threshold, bool renormalize = false);

// One timestep per token, single certain hypothesis, synthetic times (i, i+1).
ConfusionNetwork degenerate_cnet(const std::vector<std::string>& tokens);

// Highest-scoring token per timestep; timesteps whose top hypothesis is !null
// contribute no word. May be empty.
std::vector<std::string> one_best_tokens(const ConfusionNetwork& cnet);

// Fraction of transcript word tokens (summed over pairs) whose lowercase form
// appears as a hypothesis token anywhere in the paired cnet, plus cnet size
// averages. slot_value_words_pct restricts the count to tokens of
// slot_value_vocab and is absent when that vocabulary is empty.
CoverageReport coverage_stats(
    const std::vector<std::pair<std::vector<std::string>, ConfusionNetwork>>&
        pairs,
    const std::set<std::string>& slot_value_vocab);

// Arithmetic means over the collection: timesteps per cnet and hypotheses per
// timestep (pooled over all timesteps).
std::pair<double, double> cnet_size_summary(
    const std::vector<ConfusionNetwork>& cnets);

// Interjections dropped during pruning by default. The list is overridable
// via a one-token-per-line file.
const std::set<std::string>& default_interjections();

// Loads a one-token-per-line UTF-8 file, lowercased, blank lines skipped.
std::set<std::string> load_interjections(const std::string& path);

std::string lowercase(std::string s);

}  // namespace cnetdst::cnet
