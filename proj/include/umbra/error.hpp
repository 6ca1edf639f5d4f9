#pragma once

#include <stdexcept>
#include <string>

namespace umbra {

// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input files (images, masks, manifests, weights).
class FormatError : public Error {
 public:
  using Error::Error;
};

// A classifier query could not be completed.
class QueryError : public Error {
 public:
  using Error::Error;
};

// The external oracle broke the line protocol or timed out.
class ProtocolError : public QueryError {
 public:
  using QueryError::QueryError;
};

// The attack ran out of its query allowance.
class BudgetExhausted : public Error {
 public:
  BudgetExhausted() : Error("query budget exhausted") {}
};

// No sunlit shadow exists for the requested geometry (night, or sun behind the sign).
class NoShadow : public Error {
 public:
  using Error::Error;
};

// The sun ray is parallel to the sign plane.
class DegenerateProjection : public Error {
 public:
  using Error::Error;
};

}  // namespace umbra
