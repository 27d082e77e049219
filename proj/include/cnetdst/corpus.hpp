#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cnetdst/cnet.hpp"
#include "cnetdst/ontology.hpp"
#include "cnetdst/tensor.hpp"
#include "cnetdst/vocab.hpp"

namespace cnetdst::corpus {

// <dialog-act, slot, value>, e.g. inform/food/thai. Slot and value may be
// absent, but a value implies a slot.
struct DialogActTriple {
  std::string act;
  std::string slot;
  std::string value;

  bool operator==(const DialogActTriple&) const = default;
};

struct DialogTurn {
  std::vector<DialogActTriple> system_acts;
  std::vector<std::string> user_transcript;
  cnet::ConfusionNetwork user_cnet;
  DialogState gold_state;
};

struct Dialog {
  std::string id;
  std::vector<DialogTurn> turns;
};

// Replaces dialog-act tokens that are not ordinary words (expl-conf,
// welcomemsg, ...) by word sequences, so every token can carry a word
// embedding.
class ActWordMap {
 public:
  static ActWordMap defaults();
  static ActWordMap load(const std::string& path);

  void set(const std::string& token, std::vector<std::string> words);

  // The replacement sequence, or the token itself when unmapped.
  std::vector<std::string> expand(const std::string& token) const;

  const std::map<std::string, std::vector<std::string>>& entries() const {
    return map_;
  }

 private:
  std::map<std::string, std::vector<std::string>> map_;
};

// Flattens act triples to a lowercased word sequence, applying the map to
// act, slot and value tokens and splitting multi-word values.
std::vector<std::string> acts_to_tokens(
    const std::vector<DialogActTriple>& acts, const ActWordMap& map);

std::vector<std::string> tokenize(const std::string& text);

struct LoadOptions {
  // When set, a dialog directory without cnet data gets degenerate cnets
  // synthesized from the transcripts instead of failing.
  bool allow_transcript_only = false;
};

// Loads root/split. Each dialog is a directory in either the native layout
// (acts.jsonl, transcript.txt, cnet.txt, labels.jsonl) or the DSTC2 layout
// (log.json, label.json); DSTC2 session directories may be nested. Dialogs
// are returned in sorted directory order and validated against the ontology.
std::vector<Dialog> load_corpus(const std::string& root,
                                const std::string& split,
                                const Ontology& ontology,
                                const LoadOptions& options = {});

// Writes dialogs in the native layout under root/split plus root/ontology.json.
void write_corpus(const std::string& root, const std::string& split,
                  const std::vector<Dialog>& dialogs, const Ontology& ontology);

// Vocabulary over transcript words, cnet hypothesis tokens and mapped act
// tokens. Tokens seen fewer than min_count times collapse into UNK. Index
// order is (count desc, token asc) after the reserved entries, so two builds
// of the same corpus agree.
Vocabulary build_vocab(const std::vector<Dialog>& dialogs,
                       const ActWordMap& act_map, std::size_t min_count = 1);

struct EmbeddingLoadResult {
  std::size_t matched_tokens = 0;
  std::size_t vocab_tokens = 0;  // non-reserved
  double hit_rate_pct = 0.0;
};

// Text format: one `word v1 ... vE` per line. Rows whose word is in the
// vocabulary overwrite the corresponding table row; everything else keeps its
// existing (random) initialization. E must equal table.cols(); a line with a
// different width is a format error.
EmbeddingLoadResult load_embeddings(const std::string& path,
                                    const Vocabulary& vocab, Tensor& table);

}  // namespace cnetdst::corpus
