#include "cnetdst/cnet.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>

namespace cnetdst::cnet {

namespace {

std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream ss(line);
  std::string tok;
  while (ss >> tok) out.push_back(std::move(tok));
  return out;
}

bool parse_double(const std::string& s, double& out) {
  const char* b = s.data();
  const char* e = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(b, e, out);
  return ec == std::errc{} && ptr == e;
}

std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, ptr);
}

bool is_blank(const std::string& line) {
  return std::all_of(line.begin(), line.end(),
                     [](unsigned char c) { return std::isspace(c); });
}

}  // namespace

std::string lowercase(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

ConfusionNetwork parse_cnet(const std::string& text,
                            std::vector<std::string>* warnings) {
  ConfusionNetwork net;
  std::istringstream ss(text);
  std::string line;
  std::size_t line_no = 0;
  long last_idx = 0;
  while (std::getline(ss, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (is_blank(line) || line[0] == '#') continue;

    const std::vector<std::string> fields = split_ws(line);
    if (fields.size() < 5 || (fields.size() - 3) % 2 != 0) {
      throw ParseError("cnet line " + std::to_string(line_no) +
                       ": expected <idx> <start> <end> (<token> (<score>))+");
    }

    double idx_val = 0, start = 0, end = 0;
    if (!parse_double(fields[0], idx_val) || idx_val != std::floor(idx_val)) {
      throw ParseError("cnet line " + std::to_string(line_no) +
                       ": bad index field '" + fields[0] + "'");
    }
    const long idx = static_cast<long>(idx_val);
    if ((last_idx == 0 && idx != 1) || idx <= last_idx) {
      throw ParseError("cnet line " + std::to_string(line_no) +
                       ": index " + std::to_string(idx) +
                       " not strictly increasing from 1");
    }
    last_idx = idx;
    if (!parse_double(fields[1], start) || !parse_double(fields[2], end)) {
      throw ParseError("cnet line " + std::to_string(line_no) +
                       ": bad time fields");
    }
    if (!(start < end)) {
      throw DataError("cnet line " + std::to_string(line_no) +
                      ": start must be < end");
    }

    Timestep step;
    step.start = start;
    step.end = end;
    for (std::size_t i = 3; i + 1 < fields.size(); i += 2) {
      const std::string& token = fields[i];
      const std::string& scored = fields[i + 1];
      if (scored.size() < 3 || scored.front() != '(' || scored.back() != ')') {
        throw ParseError("cnet line " + std::to_string(line_no) +
                         ": expected parenthesized score after '" + token +
                         "'");
      }
      double log_score = 0;
      if (!parse_double(scored.substr(1, scored.size() - 2), log_score)) {
        throw ParseError("cnet line " + std::to_string(line_no) +
                         ": bad score '" + scored + "'");
      }
      if (log_score > 0.0) {
        if (warnings) {
          warnings->push_back("line " + std::to_string(line_no) + ": positive score " +
                              format_double(log_score) + " for '" + token +
                              "' clamped to 0");
        }
        log_score = 0.0;
      }
      const std::string lower = lowercase(token);
      // Duplicate tokens within a timestep are merged keeping the higher score.
      auto dup = std::find_if(step.hypotheses.begin(), step.hypotheses.end(),
                              [&](const Hypothesis& h) { return h.token == lower; });
      if (dup != step.hypotheses.end()) {
        dup->log_score = std::max(dup->log_score, log_score);
        if (warnings) {
          warnings->push_back("line " + std::to_string(line_no) +
                              ": duplicate token '" + lower + "' merged");
        }
      } else {
        step.hypotheses.push_back({lower, log_score});
      }
    }
    if (!net.timesteps.empty() &&
        net.timesteps.back().end > step.start + 1e-9) {
      throw DataError("cnet line " + std::to_string(line_no) +
                      ": timesteps overlap or run backwards");
    }
    net.timesteps.push_back(std::move(step));
  }
  if (net.timesteps.empty()) {
    throw DataError("cnet: empty input, no timesteps found");
  }
  return net;
}

std::vector<ConfusionNetwork> parse_cnet_blocks(
    const std::string& text, std::vector<std::string>* warnings) {
  std::vector<ConfusionNetwork> nets;
  std::istringstream ss(text);
  std::string line;
  std::string block;
  auto flush = [&]() {
    if (!block.empty()) {
      nets.push_back(parse_cnet(block, warnings));
      block.clear();
    }
  };
  while (std::getline(ss, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (is_blank(line)) {
      flush();
    } else {
      block += line;
      block += '\n';
    }
  }
  flush();
  return nets;
}

std::string serialize_cnet(const ConfusionNetwork& cnet) {
  std::string out;
  for (std::size_t i = 0; i < cnet.timesteps.size(); ++i) {
    const Timestep& t = cnet.timesteps[i];
    out += std::to_string(i + 1);
    out += ' ';
    out += format_double(t.start);
    out += ' ';
    out += format_double(t.end);
    for (const Hypothesis& h : t.hypotheses) {
      out += ' ';
      out += h.token;
      out += " (";
      out += format_double(h.log_score);
      out += ')';
    }
    out += '\n';
  }
  return out;
}

ConfusionNetwork prune_cnet(const ConfusionNetwork& cnet,
                            const std::set<std::string>& interjections,
                            double prob_threshold, bool renormalize) {
  if (prob_threshold >= 1.0) {
    throw ConfigError("prune threshold must be < 1");
  }
  ConfusionNetwork out;
  for (const Timestep& t : cnet.timesteps) {
    Timestep kept;
    kept.start = t.start;
    kept.end = t.end;
    for (const Hypothesis& h : t.hypotheses) {
      if (interjections.count(h.token)) continue;
      if (std::exp(h.log_score) < prob_threshold) continue;
      kept.hypotheses.push_back(h);
    }
    if (kept.hypotheses.empty()) continue;
    // A timestep whose only survivor is !null carries no lexical content.
    if (kept.hypotheses.size() == 1 && kept.hypotheses[0].token == kNullToken)
      continue;
    if (renormalize) {
      double total = 0.0;
      for (const Hypothesis& h : kept.hypotheses) total += std::exp(h.log_score);
      const double log_total = std::log(total);
      for (Hypothesis& h : kept.hypotheses) h.log_score -= log_total;
    }
    out.timesteps.push_back(std::move(kept));
  }
  return out;
}

ConfusionNetwork degenerate_cnet(const std::vector<std::string>& tokens) {
  if (tokens.empty()) {
    throw DataError("degenerate_cnet: empty token list");
  }
  ConfusionNetwork net;
  net.timesteps.reserve(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    Timestep t;
    t.start = static_cast<double>(i);
    t.end = static_cast<double>(i + 1);
    t.hypotheses.push_back({lowercase(tokens[i]), 0.0});
    net.timesteps.push_back(std::move(t));
  }
  return net;
}

std::vector<std::string> one_best_tokens(const ConfusionNetwork& cnet) {
  std::vector<std::string> out;
  for (const Timestep& t : cnet.timesteps) {
    const Hypothesis* best = nullptr;
    for (const Hypothesis& h : t.hypotheses) {
      if (!best || h.log_score > best->log_score) best = &h;
    }
    if (best && best->token != kNullToken) out.push_back(best->token);
  }
  return out;
}

CoverageReport coverage_stats(
    const std::vector<std::pair<std::vector<std::string>, ConfusionNetwork>>&
        pairs,
    const std::set<std::string>& slot_value_vocab) {
  if (pairs.empty()) {
    throw DataError("coverage_stats: empty pair list");
  }
  std::size_t total_tokens = 0, covered_tokens = 0;
  std::size_t sv_tokens = 0, sv_covered = 0;
  std::size_t total_steps = 0, total_hyps = 0;
  for (const auto& [transcript, net] : pairs) {
    std::set<std::string> cnet_tokens;
    for (const Timestep& t : net.timesteps) {
      total_hyps += t.hypotheses.size();
      for (const Hypothesis& h : t.hypotheses) cnet_tokens.insert(h.token);
    }
    total_steps += net.timesteps.size();
    for (const std::string& word : transcript) {
      const std::string lower = lowercase(word);
      const bool covered = cnet_tokens.count(lower) > 0;
      ++total_tokens;
      covered_tokens += covered;
      if (slot_value_vocab.count(lower)) {
        ++sv_tokens;
        sv_covered += covered;
      }
    }
  }
  CoverageReport report;
  report.utterance_count = pairs.size();
  report.all_words_pct =
      total_tokens == 0 ? 0.0
                        : 100.0 * static_cast<double>(covered_tokens) /
                              static_cast<double>(total_tokens);
  if (!slot_value_vocab.empty()) {
    report.slot_value_words_pct =
        sv_tokens == 0 ? 0.0
                       : 100.0 * static_cast<double>(sv_covered) /
                             static_cast<double>(sv_tokens);
  }
  report.avg_timesteps = static_cast<double>(total_steps) /
                         static_cast<double>(pairs.size());
  report.avg_hypotheses_per_timestep =
      total_steps == 0 ? 0.0
                       : static_cast<double>(total_hyps) /
                             static_cast<double>(total_steps);
  return report;
}

std::pair<double, double> cnet_size_summary(
    const std::vector<ConfusionNetwork>& cnets) {
  if (cnets.empty()) {
    throw DataError("cnet_size_summary: empty list");
  }
  std::size_t steps = 0, hyps = 0;
  for (const ConfusionNetwork& c : cnets) {
    steps += c.timesteps.size();
    hyps += c.hypothesis_count();
  }
  const double avg_steps =
      static_cast<double>(steps) / static_cast<double>(cnets.size());
  const double avg_k =
      steps == 0 ? 0.0 : static_cast<double>(hyps) / static_cast<double>(steps);
  return {avg_steps, avg_k};
}

const std::set<std::string>& default_interjections() {
  static const std::set<std::string> kList = {"uh", "ah",  "oh", "um",    "er",
                                              "eh", "hmm", "huh", "mm", "mmhmm"};
  return kList;
}

std::set<std::string> load_interjections(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw DataError("cannot open interjection file: " + path);
  }
  std::set<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ss(line);
    std::string tok;
    if (ss >> tok) out.insert(lowercase(tok));
  }
  return out;
}

}  // namespace cnetdst::cnet
