#include "cnetdst/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "json.hpp"

namespace cnetdst::corpus {

namespace fs = std::filesystem;
using nlohmann::json;

ActWordMap ActWordMap::defaults() {
  ActWordMap m;
  m.set("expl-conf", {"explicit", "confirm"});
  m.set("impl-conf", {"implicit", "confirm"});
  m.set("welcomemsg", {"welcome"});
  m.set("canthelp", {"cannot", "help"});
  m.set("canthelp.exception", {"cannot", "help", "exception"});
  m.set("canthelp.missing_slot_value", {"cannot", "help", "missing", "value"});
  m.set("confirm-domain", {"confirm", "domain"});
  m.set("reqalts", {"request", "alternatives"});
  m.set("reqmore", {"request", "more"});
  m.set("pricerange", {"price", "range"});
  m.set("addr", {"address"});
  m.set("postcode", {"post", "code"});
  m.set("dontcare", {"dont", "care"});
  return m;
}

ActWordMap ActWordMap::load(const std::string& path) {
  // One mapping per line: `token word1 word2 ...`.
  std::ifstream in(path);
  if (!in) throw DataError("cannot open act-word map: " + path);
  ActWordMap m;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::string token;
    if (!(ss >> token) || token[0] == '#') continue;
    std::vector<std::string> words;
    std::string w;
    while (ss >> w) words.push_back(cnet::lowercase(w));
    if (words.empty()) {
      throw ParseError("act-word map " + path + ": no replacement for '" +
                       token + "'");
    }
    m.set(cnet::lowercase(token), std::move(words));
  }
  return m;
}

void ActWordMap::set(const std::string& token, std::vector<std::string> words) {
  map_[token] = std::move(words);
}

std::vector<std::string> ActWordMap::expand(const std::string& token) const {
  auto it = map_.find(token);
  if (it != map_.end()) return it->second;
  return {token};
}

std::vector<std::string> tokenize(const std::string& text) {
  std::istringstream ss(cnet::lowercase(text));
  std::vector<std::string> out;
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

std::vector<std::string> acts_to_tokens(
    const std::vector<DialogActTriple>& acts, const ActWordMap& map) {
  std::vector<std::string> out;
  auto append = [&](const std::string& raw) {
    for (const std::string& piece : tokenize(raw)) {
      for (const std::string& word : map.expand(piece)) {
        if (!word.empty()) out.push_back(word);
      }
    }
  };
  for (const DialogActTriple& triple : acts) {
    append(triple.act);
    if (!triple.slot.empty()) append(triple.slot);
    if (!triple.value.empty()) append(triple.value);
  }
  return out;
}

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

json parse_json(const std::string& text, const std::string& context) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(context + ": " + e.what());
  }
}

DialogState state_from_json(const json& obj, const std::string& context) {
  DialogState state;
  if (obj.contains("goals")) {
    for (const auto& [slot, value] : obj.at("goals").items()) {
      state.goals[cnet::lowercase(slot)] =
          cnet::lowercase(value.get<std::string>());
    }
  }
  if (obj.contains("requests")) {
    for (const auto& v : obj.at("requests")) {
      state.requests.insert(cnet::lowercase(v.get<std::string>()));
    }
  }
  if (!obj.contains("goals") && !obj.contains("requests")) {
    throw ParseError(context + ": label object has neither goals nor requests");
  }
  return state;
}

Dialog load_native_dialog(const fs::path& dir, const Ontology& ontology,
                          const LoadOptions& options) {
  const std::string id = dir.filename().string();
  Dialog dialog;
  dialog.id = id;

  const std::vector<std::string> act_lines = read_lines(dir / "acts.jsonl");
  const std::vector<std::string> transcript_lines =
      read_lines(dir / "transcript.txt");
  const std::vector<std::string> label_lines = read_lines(dir / "labels.jsonl");

  std::vector<cnet::ConfusionNetwork> cnets;
  bool have_cnets = false;
  const fs::path cnet_path = dir / "cnet.txt";
  if (fs::exists(cnet_path)) {
    cnets = cnet::parse_cnet_blocks(read_file(cnet_path));
    have_cnets = true;
  } else if (!options.allow_transcript_only) {
    throw DataError("dialog " + id + ": missing cnet file " +
                    cnet_path.string());
  }

  const std::size_t turns = transcript_lines.size();
  if (turns == 0) throw DataError("dialog " + id + ": no turns");
  if (act_lines.size() != turns || label_lines.size() != turns ||
      (have_cnets && cnets.size() != turns)) {
    throw DataError("dialog " + id + ": acts/transcript/cnet/labels disagree " +
                    "on the number of turns");
  }

  for (std::size_t i = 0; i < turns; ++i) {
    DialogTurn turn;
    const json acts =
        parse_json(act_lines[i], "dialog " + id + " acts line " +
                                     std::to_string(i + 1));
    for (const auto& a : acts) {
      DialogActTriple triple;
      triple.act = cnet::lowercase(a.at("act").get<std::string>());
      if (a.contains("slot")) {
        triple.slot = cnet::lowercase(a.at("slot").get<std::string>());
      }
      if (a.contains("value")) {
        triple.value = cnet::lowercase(a.at("value").get<std::string>());
      }
      if (!triple.value.empty() && triple.slot.empty()) {
        throw DataError("dialog " + id + ": act with value but no slot");
      }
      if (triple.act.empty()) {
        throw DataError("dialog " + id + ": empty act name");
      }
      turn.system_acts.push_back(std::move(triple));
    }
    turn.user_transcript = tokenize(transcript_lines[i]);
    if (have_cnets) {
      turn.user_cnet = cnets[i];
    } else if (!turn.user_transcript.empty()) {
      turn.user_cnet = cnet::degenerate_cnet(turn.user_transcript);
    }
    const json label =
        parse_json(label_lines[i], "dialog " + id + " labels line " +
                                       std::to_string(i + 1));
    turn.gold_state = state_from_json(
        label, "dialog " + id + " labels line " + std::to_string(i + 1));
    turn.gold_state.validate(ontology, "dialog " + id + " turn " +
                                           std::to_string(i + 1));
    dialog.turns.push_back(std::move(turn));
  }
  return dialog;
}

// DSTC2 per-session layout: log.json (system side + ASR input) and
// label.json (transcriptions and state annotations).
Dialog load_dstc2_dialog(const fs::path& dir, const Ontology& ontology,
                         const LoadOptions& options) {
  const std::string id = dir.filename().string();
  const json log = parse_json(read_file(dir / "log.json"), id + "/log.json");
  const json label =
      parse_json(read_file(dir / "label.json"), id + "/label.json");
  if (!log.contains("turns") || !label.contains("turns")) {
    throw ParseError("dialog " + id + ": log/label JSON without 'turns'");
  }
  const json& log_turns = log.at("turns");
  const json& label_turns = label.at("turns");
  if (log_turns.size() != label_turns.size() || log_turns.empty()) {
    throw DataError("dialog " + id + ": log and label turn counts disagree");
  }

  Dialog dialog;
  dialog.id = id;
  for (std::size_t i = 0; i < log_turns.size(); ++i) {
    const json& lt = log_turns[i];
    const json& lb = label_turns[i];
    DialogTurn turn;

    if (lt.contains("output") && lt.at("output").contains("dialog-acts")) {
      for (const auto& act : lt.at("output").at("dialog-acts")) {
        const std::string act_name =
            cnet::lowercase(act.at("act").get<std::string>());
        if (!act.contains("slots") || act.at("slots").empty()) {
          turn.system_acts.push_back({act_name, "", ""});
          continue;
        }
        for (const auto& sv : act.at("slots")) {
          DialogActTriple triple;
          triple.act = act_name;
          if (sv.size() >= 1 && sv[0].is_string()) {
            triple.slot = cnet::lowercase(sv[0].get<std::string>());
          }
          if (sv.size() >= 2) {
            triple.value = cnet::lowercase(
                sv[1].is_string() ? sv[1].get<std::string>()
                                  : sv[1].dump());
          }
          turn.system_acts.push_back(std::move(triple));
        }
      }
    }

    turn.user_transcript =
        tokenize(lb.value("transcription", std::string{}));

    const json* cnet_json = nullptr;
    if (lt.contains("input")) {
      const json& input = lt.at("input");
      if (input.contains("batch") && input.at("batch").contains("cnet")) {
        cnet_json = &input.at("batch").at("cnet");
      } else if (input.contains("cnet")) {
        cnet_json = &input.at("cnet");
      }
    }
    if (cnet_json) {
      cnet::ConfusionNetwork net;
      for (const auto& step : *cnet_json) {
        cnet::Timestep ts;
        ts.start = step.at("start").is_string()
                       ? std::stod(step.at("start").get<std::string>())
                       : step.at("start").get<double>();
        ts.end = step.at("end").is_string()
                     ? std::stod(step.at("end").get<std::string>())
                     : step.at("end").get<double>();
        for (const auto& arc : step.at("arcs")) {
          cnet::Hypothesis hyp;
          hyp.token = cnet::lowercase(arc.at("word").get<std::string>());
          hyp.log_score = std::min(0.0, arc.at("score").get<double>());
          if (hyp.token.empty()) continue;
          ts.hypotheses.push_back(std::move(hyp));
        }
        if (!ts.hypotheses.empty()) net.timesteps.push_back(std::move(ts));
      }
      turn.user_cnet = std::move(net);
    } else if (options.allow_transcript_only) {
      if (!turn.user_transcript.empty()) {
        turn.user_cnet = cnet::degenerate_cnet(turn.user_transcript);
      }
    } else {
      throw DataError("dialog " + id + " turn " + std::to_string(i + 1) +
                      ": no cnet under input.batch.cnet or input.cnet");
    }

    DialogState state;
    if (lb.contains("goal-labels")) {
      for (const auto& [slot, value] : lb.at("goal-labels").items()) {
        state.goals[cnet::lowercase(slot)] =
            cnet::lowercase(value.get<std::string>());
      }
    }
    if (lb.contains("requested-slots")) {
      for (const auto& v : lb.at("requested-slots")) {
        state.requests.insert(cnet::lowercase(v.get<std::string>()));
      }
    }
    state.validate(ontology,
                   "dialog " + id + " turn " + std::to_string(i + 1));
    turn.gold_state = std::move(state);
    dialog.turns.push_back(std::move(turn));
  }
  return dialog;
}

void collect_dialog_dirs(const fs::path& dir, std::vector<fs::path>& out) {
  if (fs::exists(dir / "acts.jsonl") || fs::exists(dir / "log.json")) {
    out.push_back(dir);
    return;
  }
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_directory()) collect_dialog_dirs(entry.path(), out);
  }
}

}  // namespace

std::vector<Dialog> load_corpus(const std::string& root,
                                const std::string& split,
                                const Ontology& ontology,
                                const LoadOptions& options) {
  const fs::path split_dir = fs::path(root) / split;
  if (!fs::is_directory(split_dir)) {
    throw DataError("split directory not found: " + split_dir.string());
  }
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(split_dir)) {
    if (entry.is_directory()) collect_dialog_dirs(entry.path(), dirs);
  }
  std::sort(dirs.begin(), dirs.end());
  if (dirs.empty()) {
    throw DataError("no dialogs found under " + split_dir.string());
  }
  std::vector<Dialog> dialogs;
  dialogs.reserve(dirs.size());
  for (const fs::path& dir : dirs) {
    if (fs::exists(dir / "acts.jsonl")) {
      dialogs.push_back(load_native_dialog(dir, ontology, options));
    } else {
      dialogs.push_back(load_dstc2_dialog(dir, ontology, options));
    }
  }
  return dialogs;
}

void write_corpus(const std::string& root, const std::string& split,
                  const std::vector<Dialog>& dialogs,
                  const Ontology& ontology) {
  const fs::path root_dir(root);
  fs::create_directories(root_dir);
  ontology.save((root_dir / "ontology.json").string());
  const fs::path split_dir = root_dir / split;
  fs::create_directories(split_dir);
  for (const Dialog& dialog : dialogs) {
    const fs::path dir = split_dir / dialog.id;
    fs::create_directories(dir);
    std::ofstream acts(dir / "acts.jsonl");
    std::ofstream transcript(dir / "transcript.txt");
    std::ofstream cnets(dir / "cnet.txt");
    std::ofstream labels(dir / "labels.jsonl");
    if (!acts || !transcript || !cnets || !labels) {
      throw DataError("cannot write dialog files under " + dir.string());
    }
    bool first_block = true;
    for (const DialogTurn& turn : dialog.turns) {
      json act_line = json::array();
      for (const DialogActTriple& t : turn.system_acts) {
        json obj;
        obj["act"] = t.act;
        if (!t.slot.empty()) obj["slot"] = t.slot;
        if (!t.value.empty()) obj["value"] = t.value;
        act_line.push_back(obj);
      }
      acts << act_line.dump() << "\n";

      for (std::size_t i = 0; i < turn.user_transcript.size(); ++i) {
        if (i) transcript << ' ';
        transcript << turn.user_transcript[i];
      }
      transcript << "\n";

      if (!first_block) cnets << "\n";
      first_block = false;
      if (turn.user_cnet.empty()) {
        // Silence placeholder so the block count still matches the turns.
        cnets << "1 0 1 !null (0)\n";
      } else {
        cnets << cnet::serialize_cnet(turn.user_cnet);
      }

      json label;
      json goals = json::object();
      for (const auto& [slot, value] : turn.gold_state.goals) {
        goals[slot] = value;
      }
      label["goals"] = goals;
      label["requests"] = turn.gold_state.requests;
      labels << label.dump() << "\n";
    }
  }
}

Vocabulary build_vocab(const std::vector<Dialog>& dialogs,
                       const ActWordMap& act_map, std::size_t min_count) {
  std::unordered_map<std::string, std::size_t> counts;
  auto bump = [&](const std::string& tok) {
    if (!tok.empty()) counts[tok] += 1;
  };
  for (const Dialog& dialog : dialogs) {
    for (const DialogTurn& turn : dialog.turns) {
      for (const std::string& tok : acts_to_tokens(turn.system_acts, act_map))
        bump(tok);
      for (const std::string& tok : turn.user_transcript) bump(tok);
      for (const cnet::Timestep& step : turn.user_cnet.timesteps) {
        for (const cnet::Hypothesis& hyp : step.hypotheses) bump(hyp.token);
      }
    }
  }
  std::vector<std::pair<std::string, std::size_t>> ordered(counts.begin(),
                                                           counts.end());
  std::sort(ordered.begin(), ordered.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  Vocabulary vocab;
  for (const auto& [token, count] : ordered) {
    if (count < min_count) continue;
    vocab.add(token);
  }
  return vocab;
}

EmbeddingLoadResult load_embeddings(const std::string& path,
                                    const Vocabulary& vocab, Tensor& table) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open embedding file: " + path);
  if (!table.is_matrix() || table.rows() != vocab.size()) {
    throw DataError("embedding table shape does not match the vocabulary");
  }
  const std::size_t dim = table.cols();
  std::string line;
  std::size_t line_no = 0;
  std::set<std::string> matched;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string word;
    ss >> word;
    std::vector<double> values;
    double v;
    while (ss >> v) values.push_back(v);
    if (values.size() != dim) {
      throw ParseError("embedding file " + path + " line " +
                       std::to_string(line_no) + ": expected " +
                       std::to_string(dim) + " values, got " +
                       std::to_string(values.size()));
    }
    const std::string token = cnet::lowercase(word);
    if (!vocab.contains(token)) continue;
    const std::size_t row = vocab.lookup(token);
    if (row < 3) continue;  // reserved rows keep their initialization
    for (std::size_t i = 0; i < dim; ++i) table.at(row, i) = values[i];
    matched.insert(token);
  }
  EmbeddingLoadResult result;
  result.matched_tokens = matched.size();
  result.vocab_tokens = vocab.size() >= 3 ? vocab.size() - 3 : 0;
  result.hit_rate_pct =
      result.vocab_tokens == 0
          ? 0.0
          : 100.0 * static_cast<double>(result.matched_tokens) /
                static_cast<double>(result.vocab_tokens);
  return result;
}

}  // namespace cnetdst::corpus
