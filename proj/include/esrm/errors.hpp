// Exception taxonomy shared across the toolkit.
#pragma once

#include <stdexcept>
#include <string>

namespace esrm {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dimension or layout disagreement between operands.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration value or flag combination.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Label token outside [1, vocab_size].
class VocabError : public Error {
 public:
  using Error::Error;
};

class EmptyInputError : public Error {
 public:
  using Error::Error;
};

// An iterative estimate failed to settle; carries the best estimate seen.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double best_estimate)
      : Error(what), best_estimate_(best_estimate) {}
  double best_estimate() const { return best_estimate_; }

 private:
  double best_estimate_;
};

// Reservoir generation failed (e.g. radius normalization impossible).
class GenerationError : public Error {
 public:
  using Error::Error;
};

// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Model file failed magic, CRC, or consistency validation.
class CorruptionError : public IoError {
 public:
  using IoError::IoError;
};

class UnsupportedVersionError : public IoError {
 public:
  using IoError::IoError;
};

// Enumeration oracle asked to expand too large a lattice.
class OracleTooLargeError : public Error {
 public:
  using Error::Error;
};

// Rank-deficient normal equations; caller should regularize.
class SingularityError : public Error {
 public:
  using Error::Error;
};

}  // namespace esrm
