#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "cnetdst/errors.hpp"

namespace cnetdst {

// Token-to-index map with fixed reserved entries. Unknown tokens resolve to
// the UNK index; !null has its own reserved slot so it always embeds.
class Vocabulary {
 public:
  static constexpr std::size_t kPadIndex = 0;
  static constexpr std::size_t kUnkIndex = 1;
  static constexpr std::size_t kNullIndex = 2;

  Vocabulary() {
    add("<pad>");
    add("<unk>");
    add("!null");
  }

  std::size_t add(const std::string& token) {
    auto [it, inserted] = index_.try_emplace(token, tokens_.size());
    if (inserted) tokens_.push_back(token);
    return it->second;
  }

  std::size_t lookup(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? kUnkIndex : it->second;
  }

  bool contains(const std::string& token) const { return index_.count(token); }

  const std::string& token(std::size_t index) const {
    if (index >= tokens_.size()) {
      throw DataError("vocabulary index out of range");
    }
    return tokens_[index];
  }

  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  bool operator==(const Vocabulary& o) const { return tokens_ == o.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace cnetdst
