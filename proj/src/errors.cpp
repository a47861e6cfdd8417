#include "ctn/errors.hpp"

namespace ctn {

std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::DegenerateContour: return "DegenerateContour";
    case Errc::ImageTooSmall: return "ImageTooSmall";
    case Errc::InvalidFamilySpec: return "InvalidFamilySpec";
    case Errc::MissingExemplar: return "MissingExemplar";
    case Errc::MalformedJson: return "MalformedJson";
    case Errc::ImageContourMismatch: return "ImageContourMismatch";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::NonScalarLoss: return "NonScalarLoss";
    case Errc::DoubleBackward: return "DoubleBackward";
    case Errc::VertexCountMismatch: return "VertexCountMismatch";
    case Errc::PyramidMismatch: return "PyramidMismatch";
    case Errc::SingularL: return "SingularL";
    case Errc::ContourOutOfImage: return "ContourOutOfImage";
    case Errc::NonFiniteGradient: return "NonFiniteGradient";
    case Errc::DatasetInvalid: return "DatasetInvalid";
    case Errc::MissingGroundTruth: return "MissingGroundTruth";
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::CheckpointFormat: return "CheckpointFormat";
    case Errc::Io: return "Io";
  }
  return "Unknown";
}

Error::Error(Errc code, const std::string& what)
    : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

}  // namespace ctn
