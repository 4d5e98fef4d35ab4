#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cohere {

enum class ErrorKind {
  FrameUnderfilled,
  BadPose,
  EmptyInput,
  OutOfBounds,
  BadIndex,
  NoSamples,
  NoHistory,
  NormalizationDegenerate,
  NotNormalized,
  BadTemperature,
  ShapeMismatch,
  InvalidScene,
  InvalidConfig,
  Parse,
  Io,
};

std::string_view to_string(ErrorKind kind) noexcept;

/// Single exception type for the library; `kind()` lets callers branch
/// without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace cohere
