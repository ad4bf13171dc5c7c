#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

namespace motorfm {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or truncated binary/text input.
class FormatError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// An argument lies outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Inconsistent configuration (channel counts, manifests, class maps).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Evidence maximization cannot proceed because the target carries no signal
/// the feature matrix can explain.
class DegenerateTargetError : public Error {
 public:
  explicit DegenerateTargetError(const std::string& what,
                                 std::optional<std::uint32_t> class_id = std::nullopt)
      : Error(class_id ? "class " + std::to_string(*class_id) + ": " + what : what),
        class_id_(class_id) {}

  [[nodiscard]] std::optional<std::uint32_t> class_id() const noexcept { return class_id_; }

 private:
  std::optional<std::uint32_t> class_id_;
};

/// Gradient descent produced a non-finite loss.
class TrainingDiverged : public Error {
 public:
  using Error::Error;
};

/// Wraps a failure with the workflow stage it came from.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error(stage + ": " + what), stage_(std::move(stage)) {}

  [[nodiscard]] const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

}  // namespace motorfm
