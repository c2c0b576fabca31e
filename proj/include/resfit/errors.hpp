#pragma once

#include <stdexcept>
#include <string>

namespace resfit {

// Base for every error raised by the library. Callers that only care about
// "did it work" catch this; the CLI maps subclasses onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidParameter : public Error {
 public:
  using Error::Error;
};

class DegenerateGeometry : public Error {
 public:
  using Error::Error;
};

class DegreesOfFreedomError : public Error {
 public:
  using Error::Error;
};

class NonphysicalQi : public Error {
 public:
  using Error::Error;
};

class RankDeficiency : public Error {
 public:
  using Error::Error;
};

class PhaseUnwrapError : public Error {
 public:
  PhaseUnwrapError(const std::string& what, std::size_t index)
      : Error(what), index_(index) {}
  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

// Raised by the nonlinear solvers; carries the last iterate so callers can
// inspect where the iteration stalled.
class FitFailure : public Error {
 public:
  FitFailure(const std::string& what, double theta0, double q_l, double f_r)
      : Error(what), theta0_(theta0), q_l_(q_l), f_r_(f_r) {}
  double theta0() const noexcept { return theta0_; }
  double q_l() const noexcept { return q_l_; }
  double f_r() const noexcept { return f_r_; }

 private:
  double theta0_, q_l_, f_r_;
};

// Wraps an error from one stage of the fit pipeline with the stage name.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error(stage + ": " + what), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace resfit
