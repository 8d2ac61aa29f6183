#pragma once

#include <stdexcept>
#include <string>

namespace ccmc {

/// Base class for every error thrown by this library.
struct Error : std::runtime_error {
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// A value breaks a documented precondition (bad simplex, token out of
/// range, malformed prompt, non-stochastic matrix, ...).
struct ValidationError : Error {
  using Error::Error;
};

/// An embedding configuration fails its structural requirements
/// (rank-deficient token embeddings, readout that is not a left inverse,
/// position rows visible to the readout).
struct ConfigError : Error {
  using Error::Error;
};

/// The frequency mask and the selected transition column share no support,
/// so the reweighted next-token law is undefined.
struct DegenerateMaskError : Error {
  using Error::Error;
};

/// weights_from_transition requires a strictly positive matrix; anything
/// with a (numerically) zero entry has no finite logit representation.
struct DomainError : Error {
  using Error::Error;
};

/// A log-likelihood term hit probability zero, the loss is infinite.
/// `term_index` is the offending sample/term when known, -1 otherwise.
struct InfiniteLossError : Error {
  explicit InfiniteLossError(const std::string& what, long long index = -1)
      : Error(what), term_index(index) {}
  long long term_index = -1;
};

/// Step halving was exhausted without restoring monotone descent.
struct StepSizeError : Error {
  using Error::Error;
};

/// The initial trajectory prompt does not cover the vocabulary and the
/// caller did not opt into partial coverage.
struct CoverageError : Error {
  using Error::Error;
};

/// A power-law fit is impossible (too few points or nonpositive values
/// inside the fit window).
struct FitError : Error {
  using Error::Error;
};

/// File or serialization failure.
struct IoError : Error {
  using Error::Error;
};

}  // namespace ccmc
