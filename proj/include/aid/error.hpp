#pragma once

#include <stdexcept>
#include <string>

namespace aid {

/// Base class for every error raised by the engine.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Malformed file header or JSON layout.
class FormatError : public Error {
public:
  using Error::Error;
};

/// Payload shorter than its header declares.
class TruncationError : public Error {
public:
  using Error::Error;
};

/// Content violates a domain invariant (non-finite value, duplicate id, ...).
class ValidationError : public Error {
public:
  using Error::Error;
};

class DimensionMismatch : public Error {
public:
  using Error::Error;
};

/// An index (item, topic, cluster) outside its valid range.
class IndexError : public Error {
public:
  using Error::Error;
};

class InvalidArgument : public Error {
public:
  using Error::Error;
};

} // namespace aid
