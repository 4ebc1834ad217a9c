// Exception types shared by every mvreg module.
#pragma once

#include <stdexcept>
#include <string>

namespace mvreg {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Rotation angle within 1e-6 of pi: the logarithm is not unique there.
class AngleNearPi : public Error {
 public:
  using Error::Error;
};

// A 4x4 matrix that is not an element of se(3).
class NotSe3 : public Error {
 public:
  using Error::Error;
};

// A rotation/translation pair that violates the SE(3) invariants.
class InvalidMotion : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class EmptyCloud : public Error {
 public:
  using Error::Error;
};

class TooFewPoints : public Error {
 public:
  using Error::Error;
};

// Fewer than two independent directions in the centered correspondence set.
class DegenerateConfiguration : public Error {
 public:
  using Error::Error;
};

class NoFeasibleOverlap : public Error {
 public:
  using Error::Error;
};

// Some scan cannot be reached from the reference scan through the pair graph.
class DisconnectedGraph : public Error {
 public:
  using Error::Error;
};

class RankDeficient : public Error {
 public:
  using Error::Error;
};

class NotConverged : public Error {
 public:
  using Error::Error;
};

class InvalidOverlap : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace mvreg
