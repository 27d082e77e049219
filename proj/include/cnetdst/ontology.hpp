#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "cnetdst/errors.hpp"

namespace cnetdst {

// Label "the user has not expressed this goal yet". Always output index 0.
inline constexpr const char* kNoneValue = "none";
// Label "the user explicitly does not care". Always output index 1.
inline constexpr const char* kDontCareValue = "dontcare";

// Slot names and value inventories defining the classifier output spaces.
// Goal slots keep their declaration order; the output space of a slot is
// {none, dontcare} followed by its values.
struct Ontology {
  std::vector<std::pair<std::string, std::vector<std::string>>> goal_slots;
  std::vector<std::string> requestable_slots;

  void validate() const;

  bool has_goal_slot(const std::string& slot) const;
  const std::vector<std::string>& goal_values(const std::string& slot) const;

  // none, dontcare, then the slot's values.
  std::vector<std::string> output_space(const std::string& slot) const;
  std::size_t output_size(const std::string& slot) const;

  // Index of a label in the slot's output space; throws DataError naming the
  // value when it is not part of the ontology.
  std::size_t value_index(const std::string& slot,
                          const std::string& value) const;
  const std::string& value_at(const std::string& slot, std::size_t index) const;

  bool is_requestable(const std::string& slot) const;

  // Words occurring in slot names and values (values split on whitespace),
  // for slot/value coverage statistics.
  std::set<std::string> slot_value_words() const;

  // FNV-1a over a canonical serialization; stored in checkpoints to reject
  // models loaded against a different ontology.
  std::uint64_t hash() const;

  // Accepts the native schema {"goal_slots": {...}, "requestable_slots": [...]}
  // as well as the DSTC2 schema {"informable": {...}, "requestable": [...]}.
  static Ontology load(const std::string& path);
  void save(const std::string& path) const;
};

// One turn's annotated dialog state: a value (or none/dontcare) per goal slot
// and the set of requested slots.
struct DialogState {
  std::map<std::string, std::string> goals;
  std::set<std::string> requests;

  bool operator==(const DialogState&) const = default;

  // Goal for a slot, defaulting to none when the slot is absent.
  const std::string& goal(const std::string& slot) const;

  // Checks every label against the ontology; context prefixes error messages.
  void validate(const Ontology& ontology, const std::string& context) const;
};

std::uint64_t fnv1a(const void* data, std::size_t size,
                    std::uint64_t seed = 0xCBF29CE484222325ULL);
std::uint64_t fnv1a(const std::string& s, std::uint64_t seed = 0xCBF29CE484222325ULL);

}  // namespace cnetdst
