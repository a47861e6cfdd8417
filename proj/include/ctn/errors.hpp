#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ctn {

enum class Errc {
  DegenerateContour,
  ImageTooSmall,
  InvalidFamilySpec,
  MissingExemplar,
  MalformedJson,
  ImageContourMismatch,
  ShapeMismatch,
  NonScalarLoss,
  DoubleBackward,
  VertexCountMismatch,
  PyramidMismatch,
  SingularL,
  ContourOutOfImage,
  NonFiniteGradient,
  DatasetInvalid,
  MissingGroundTruth,
  InvalidArgument,
  CheckpointFormat,
  Io,
};

std::string_view errc_name(Errc code) noexcept;

// Every failure surfaced by the library carries one of the codes above.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what);
  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace ctn
