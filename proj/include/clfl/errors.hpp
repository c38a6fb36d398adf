#pragma once

#include <stdexcept>
#include <string>

namespace clfl {

// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// A requested synthesizer frequency lies outside the agile band.
// overflow_hz is signed: positive above the top edge, negative below the bottom.
class BandEdgeError : public Error {
 public:
  BandEdgeError(const std::string& what, double overflow_hz)
      : Error(what), overflow_hz_(overflow_hz) {}
  double overflow_hz() const noexcept { return overflow_hz_; }

 private:
  double overflow_hz_;
};

// The controller's next hop would leave the band: extended dynamic range used up.
class RangeExhausted : public Error {
 public:
  RangeExhausted(const std::string& what, double overflow_hz)
      : Error(what), overflow_hz_(overflow_hz) {}
  double overflow_hz() const noexcept { return overflow_hz_; }

 private:
  double overflow_hz_;
};

class NoResonance : public Error {
 public:
  using Error::Error;
};

class AmbiguousCrossing : public Error {
 public:
  using Error::Error;
};

class UndefinedPhase : public Error {
 public:
  using Error::Error;
};

class Unsupported : public Error {
 public:
  using Error::Error;
};

// Config parse/validation failure; line is 1-based, 0 when unknown.
class ConfigError : public Error {
 public:
  ConfigError(const std::string& what, std::string field, int line = 0)
      : Error(what), field_(std::move(field)), line_(line) {}
  const std::string& field() const noexcept { return field_; }
  int line() const noexcept { return line_; }

 private:
  std::string field_;
  int line_;
};

}  // namespace clfl
