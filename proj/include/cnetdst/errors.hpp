#pragma once

#include <stdexcept>
#include <string>

namespace cnetdst {

// Error taxonomy mirrored by the CLI exit codes:
//   ConfigError -> 1, ParseError/DataError -> 2, TrainError -> 3.

// Malformed input text (cnet logs, embedding files, checkpoints).
class ParseError : public std::runtime_error {
 public:
  explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

// Structurally invalid data: bad shapes, labels outside the ontology,
// misaligned dialogs, empty inputs where content is required.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Invalid run configuration (flag values, dimension settings).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Numeric failures during optimization (NaN gradients, diverging loss).
class TrainError : public std::runtime_error {
 public:
  explicit TrainError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace cnetdst
