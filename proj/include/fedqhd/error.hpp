#pragma once

#include <stdexcept>
#include <string>

namespace fedqhd {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A Cholesky pivot was not strictly positive. Add a ridge term and retry.
class NotSpdError : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class NonConvergence : public Error {
 public:
  using Error::Error;
};

class InvalidConfig : public Error {
 public:
  using Error::Error;
};

class BadWeights : public Error {
 public:
  using Error::Error;
};

class SteppedAfterDone : public Error {
 public:
  using Error::Error;
};

/// Cached anchor features were built for a different encoder.
class StaleCache : public Error {
 public:
  using Error::Error;
};

class RankDeficient : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace fedqhd
