#pragma once

#include <stdexcept>
#include <string>

namespace recoverlab {

struct NonFiniteState : std::runtime_error {
  explicit NonFiniteState(const std::string& what) : std::runtime_error(what) {}
};

struct WheelsFixed : std::logic_error {
  explicit WheelsFixed(const std::string& what) : std::logic_error(what) {}
};

struct ShapeMismatch : std::logic_error {
  explicit ShapeMismatch(const std::string& what) : std::logic_error(what) {}
};

struct UnknownTerrainKind : std::invalid_argument {
  explicit UnknownTerrainKind(const std::string& what) : std::invalid_argument(what) {}
};

struct EmptyLogs : std::invalid_argument {
  explicit EmptyLogs(const std::string& what) : std::invalid_argument(what) {}
};

struct InsufficientData : std::invalid_argument {
  explicit InsufficientData(const std::string& what) : std::invalid_argument(what) {}
};

struct NonFiniteLoss : std::runtime_error {
  explicit NonFiniteLoss(const std::string& what) : std::runtime_error(what) {}
};

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct CheckpointError : std::runtime_error {
  explicit CheckpointError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace recoverlab
