#pragma once

#include <Eigen/Dense>

#include <stdexcept>

namespace lftd {

template <class Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <class Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using MatX = Mat<double>;
using VecX = Vec<double>;
using Index = Eigen::Index;

// Per-frame features of one track, one row per frame. All in-memory math is
// 64-bit; files store 32-bit values and are widened on load.
using FeatureMatrix = MatX;

// Bad user input or inconsistent shapes at an API boundary. The CLI maps
// this to exit code 2.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Failure while processing a well-formed request (corrupt or unreadable
// files). CLI exit code 1.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class BadMagicError : public IoError {
 public:
  using IoError::IoError;
};

class TruncatedFileError : public IoError {
 public:
  using IoError::IoError;
};

class VersionMismatchError : public IoError {
 public:
  using IoError::IoError;
};

// Optimization aborted (non-finite gradients and similar). CLI exit code 1.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace lftd
