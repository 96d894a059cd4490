#pragma once

#include <stdexcept>
#include <string>

namespace soundrep {

/// Malformed input container or file.
struct DecodeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Structurally valid input that this build does not handle.
struct UnsupportedFormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Operation applied to a patch in the wrong (log/linear) domain.
struct DomainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Invalid configuration value; message carries the offending field path.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Manifest inconsistency (missing file, label out of range, ...).
struct ManifestError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Checkpoint missing, truncated or failing its integrity check.
struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Numerical-core contract violation (shape mismatch, degenerate batch-norm
/// batch, missing gradient, non-normalized loss input).
struct NnError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace soundrep
