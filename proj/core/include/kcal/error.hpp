#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace kcal {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor or raster extents disagree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A documented precondition of an operation was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Invalid model, scene or training configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Correspondences do not determine a unique homography.
class DegeneracyError : public Error {
 public:
  using Error::Error;
};

/// A point was mapped onto the line at infinity.
class InfinityError : public Error {
 public:
  using Error::Error;
};

class DetectionError : public Error {
 public:
  DetectionError(const std::string& what, double best_confidence)
      : Error(what), best_confidence_(best_confidence) {}
  double best_confidence() const noexcept { return best_confidence_; }

 private:
  double best_confidence_;
};

class EmptyMaskError : public Error {
 public:
  using Error::Error;
};

/// Energy calibration impossible because a food carries no weight after
/// projection. `food_index` is -1 when the failure is not tied to a food.
class CalibrationError : public Error {
 public:
  CalibrationError(const std::string& what, int food_index = -1)
      : Error(what), food_index_(food_index) {}
  int food_index() const noexcept { return food_index_; }

 private:
  int food_index_;
};

class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

/// An augmentation removed every food from a sample.
class EmptySampleError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  IoError(const std::string& what, std::string path)
      : Error(what + ": " + path), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint and manifest (or config) do not belong together.
class CompatibilityError : public Error {
 public:
  using Error::Error;
};

/// Training produced a NaN or infinite loss.
class NonFiniteError : public Error {
 public:
  NonFiniteError(const std::string& what, int epoch, int batch)
      : Error(what), epoch_(epoch), batch_(batch) {}
  int epoch() const noexcept { return epoch_; }
  int batch() const noexcept { return batch_; }

 private:
  int epoch_;
  int batch_;
};

}  // namespace kcal
