#pragma once

#include <stdexcept>
#include <string>

namespace hlseg {

// Base of every error raised by the engine. The subclasses map one-to-one to
// the failure classes callers need to distinguish (the CLI maps them onto
// exit codes).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor dimensions disagree with what an operation requires.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// A scalar argument or hyperparameter is out of its allowed range.
class ParamError : public Error {
 public:
  using Error::Error;
};

// Input lies outside the mathematical domain of an operation (empty mask,
// non-binary mask, non one-hot target, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// A model file parsed correctly but does not contain what the caller needs.
class LoadError : public Error {
 public:
  using Error::Error;
};

// File contents are structurally wrong: bad magic, version, duplicate names.
class FormatError : public Error {
 public:
  using Error::Error;
};

// File contents are truncated or declare sizes that don't fit the file.
class CorruptionError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace hlseg
