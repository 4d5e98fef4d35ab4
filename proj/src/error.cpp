#include "cohere/error.hpp"

namespace cohere {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::FrameUnderfilled: return "FrameUnderfilled";
    case ErrorKind::BadPose: return "BadPose";
    case ErrorKind::EmptyInput: return "EmptyInput";
    case ErrorKind::OutOfBounds: return "OutOfBounds";
    case ErrorKind::BadIndex: return "BadIndex";
    case ErrorKind::NoSamples: return "NoSamples";
    case ErrorKind::NoHistory: return "NoHistory";
    case ErrorKind::NormalizationDegenerate: return "NormalizationDegenerate";
    case ErrorKind::NotNormalized: return "NotNormalized";
    case ErrorKind::BadTemperature: return "BadTemperature";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::InvalidScene: return "InvalidScene";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::Parse: return "ParseError";
    case ErrorKind::Io: return "IoError";
  }
  return "Unknown";
}

}  // namespace cohere
