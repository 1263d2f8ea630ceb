#include "geovid/error.hpp"

namespace geovid {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingFrame: return "MissingFrame";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::EmptySequence: return "EmptySequence";
    case ErrorCode::BadKernelSize: return "BadKernelSize";
    case ErrorCode::BadFractions: return "BadFractions";
    case ErrorCode::UnlabeledSupervoxel: return "UnlabeledSupervoxel";
    case ErrorCode::UnknownRegion: return "UnknownRegion";
    case ErrorCode::InvalidLabelForLevel: return "InvalidLabelForLevel";
    case ErrorCode::EmptySegment: return "EmptySegment";
    case ErrorCode::DegenerateData: return "DegenerateData";
    case ErrorCode::NonFiniteFeature: return "NonFiniteFeature";
    case ErrorCode::TooFewVideos: return "TooFewVideos";
    case ErrorCode::ModelMismatch: return "ModelMismatch";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::MissingDependency: return "MissingDependency";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::FormatError: return "FormatError";
  }
  return "Unknown";
}

}  // namespace geovid
