#pragma once

#include <stdexcept>
#include <string>

namespace ovd {

struct DimensionMismatch : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct ZeroNormError : std::domain_error {
  using std::domain_error::domain_error;
};

struct RowZeroNorm : std::domain_error {
  using std::domain_error::domain_error;
};

struct IndexOutOfRange : std::out_of_range {
  using std::out_of_range::out_of_range;
};

struct EmptyCandidates : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct StageMismatch : std::logic_error {
  using std::logic_error::logic_error;
};

struct StageOrderError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct MissingCheckpoint : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct UnknownClass : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct SeparationUnsatisfiable : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NonFiniteLoss : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct PathError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace ovd
