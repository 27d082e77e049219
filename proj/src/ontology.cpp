#include "cnetdst/ontology.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "cnetdst/cnet.hpp"

namespace cnetdst {

using nlohmann::json;

std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t seed) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= bytes[i];
    h *= 0x100000001B3ULL;
  }
  return h;
}

std::uint64_t fnv1a(const std::string& s, std::uint64_t seed) {
  return fnv1a(s.data(), s.size(), seed);
}

void Ontology::validate() const {
  std::set<std::string> seen_slots;
  for (const auto& [slot, values] : goal_slots) {
    if (slot.empty()) throw DataError("ontology: empty goal slot name");
    if (!seen_slots.insert(slot).second) {
      throw DataError("ontology: duplicate goal slot '" + slot + "'");
    }
    if (values.empty()) {
      throw DataError("ontology: goal slot '" + slot + "' has no values");
    }
    std::set<std::string> seen_values;
    for (const std::string& v : values) {
      if (v.empty()) {
        throw DataError("ontology: empty value in slot '" + slot + "'");
      }
      if (v == kNoneValue || v == kDontCareValue) {
        throw DataError("ontology: slot '" + slot + "' lists reserved label '" +
                        v + "'");
      }
      if (!seen_values.insert(v).second) {
        throw DataError("ontology: duplicate value '" + v + "' in slot '" +
                        slot + "'");
      }
    }
  }
  std::set<std::string> seen_req(requestable_slots.begin(),
                                 requestable_slots.end());
  if (seen_req.size() != requestable_slots.size()) {
    throw DataError("ontology: duplicate requestable slot");
  }
}

bool Ontology::has_goal_slot(const std::string& slot) const {
  return std::any_of(goal_slots.begin(), goal_slots.end(),
                     [&](const auto& p) { return p.first == slot; });
}

const std::vector<std::string>& Ontology::goal_values(
    const std::string& slot) const {
  for (const auto& [name, values] : goal_slots) {
    if (name == slot) return values;
  }
  throw DataError("ontology: unknown goal slot '" + slot + "'");
}

std::vector<std::string> Ontology::output_space(const std::string& slot) const {
  std::vector<std::string> space = {kNoneValue, kDontCareValue};
  const auto& values = goal_values(slot);
  space.insert(space.end(), values.begin(), values.end());
  return space;
}

std::size_t Ontology::output_size(const std::string& slot) const {
  return goal_values(slot).size() + 2;
}

std::size_t Ontology::value_index(const std::string& slot,
                                  const std::string& value) const {
  if (value == kNoneValue) return 0;
  if (value == kDontCareValue) return 1;
  const auto& values = goal_values(slot);
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i] == value) return i + 2;
  }
  throw DataError("label '" + value + "' is not in the ontology for slot '" +
                  slot + "'");
}

const std::string& Ontology::value_at(const std::string& slot,
                                      std::size_t index) const {
  static const std::string kNone = kNoneValue;
  static const std::string kDontCare = kDontCareValue;
  if (index == 0) return kNone;
  if (index == 1) return kDontCare;
  const auto& values = goal_values(slot);
  if (index - 2 >= values.size()) {
    throw DataError("ontology: value index out of range for slot '" + slot +
                    "'");
  }
  return values[index - 2];
}

bool Ontology::is_requestable(const std::string& slot) const {
  return std::find(requestable_slots.begin(), requestable_slots.end(), slot) !=
         requestable_slots.end();
}

std::set<std::string> Ontology::slot_value_words() const {
  std::set<std::string> words;
  auto add_words = [&](const std::string& text) {
    std::istringstream ss(cnet::lowercase(text));
    std::string tok;
    while (ss >> tok) words.insert(tok);
  };
  for (const auto& [slot, values] : goal_slots) {
    add_words(slot);
    for (const std::string& v : values) add_words(v);
  }
  for (const std::string& slot : requestable_slots) add_words(slot);
  return words;
}

std::uint64_t Ontology::hash() const {
  std::string canon;
  for (const auto& [slot, values] : goal_slots) {
    canon += "g:" + slot + "=";
    for (const std::string& v : values) canon += v + ",";
    canon += ";";
  }
  canon += "r:";
  for (const std::string& s : requestable_slots) canon += s + ",";
  return fnv1a(canon);
}

Ontology Ontology::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open ontology file: " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ParseError("ontology " + path + ": " + e.what());
  }
  Ontology o;
  const char* goals_key = doc.contains("goal_slots") ? "goal_slots"
                          : doc.contains("informable") ? "informable"
                                                       : nullptr;
  if (!goals_key) {
    throw ParseError("ontology " + path +
                     ": missing 'goal_slots' (or DSTC2 'informable') object");
  }
  for (const auto& [slot, values] : doc[goals_key].items()) {
    std::vector<std::string> list;
    for (const auto& v : values) {
      const std::string value = cnet::lowercase(v.get<std::string>());
      // DSTC2 ontologies may list dontcare as a value; it is always part of
      // the output space, so drop it from the inventory.
      if (value == kNoneValue || value == kDontCareValue) continue;
      list.push_back(value);
    }
    o.goal_slots.emplace_back(cnet::lowercase(slot), std::move(list));
  }
  std::sort(o.goal_slots.begin(), o.goal_slots.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  const char* req_key = doc.contains("requestable_slots") ? "requestable_slots"
                        : doc.contains("requestable")     ? "requestable"
                                                          : nullptr;
  if (!req_key) {
    throw ParseError("ontology " + path +
                     ": missing 'requestable_slots' (or DSTC2 'requestable')");
  }
  for (const auto& v : doc[req_key]) {
    o.requestable_slots.push_back(cnet::lowercase(v.get<std::string>()));
  }
  std::sort(o.requestable_slots.begin(), o.requestable_slots.end());
  o.validate();
  return o;
}

void Ontology::save(const std::string& path) const {
  json goals = json::object();
  for (const auto& [slot, values] : goal_slots) goals[slot] = values;
  json doc;
  doc["goal_slots"] = goals;
  doc["requestable_slots"] = requestable_slots;
  std::ofstream out(path);
  if (!out) throw DataError("cannot write ontology file: " + path);
  out << doc.dump(2) << "\n";
}

const std::string& DialogState::goal(const std::string& slot) const {
  static const std::string kNone = kNoneValue;
  auto it = goals.find(slot);
  return it == goals.end() ? kNone : it->second;
}

void DialogState::validate(const Ontology& ontology,
                           const std::string& context) const {
  for (const auto& [slot, value] : goals) {
    if (!ontology.has_goal_slot(slot)) {
      throw DataError(context + ": goal slot '" + slot +
                      "' is not in the ontology");
    }
    try {
      ontology.value_index(slot, value);
    } catch (const DataError& e) {
      throw DataError(context + ": " + e.what());
    }
  }
  for (const std::string& slot : requests) {
    if (!ontology.is_requestable(slot)) {
      throw DataError(context + ": requested slot '" + slot +
                      "' is not requestable");
    }
  }
}

}  // namespace cnetdst
