#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace geovid {

enum class ErrorCode {
  MissingFrame,
  DimensionMismatch,
  EmptySequence,
  BadKernelSize,
  BadFractions,
  UnlabeledSupervoxel,
  UnknownRegion,
  InvalidLabelForLevel,
  EmptySegment,
  DegenerateData,
  NonFiniteFeature,
  TooFewVideos,
  ModelMismatch,
  InvalidSpec,
  MissingDependency,
  ConfigError,
  IoError,
  FormatError,
};

std::string_view to_string(ErrorCode code);

// All library failures surface as this exception; callers branch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace geovid
