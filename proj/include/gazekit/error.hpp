#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace gazekit {

enum class ErrorKind {
  Dimension,
  Configuration,
  State,
  Training,
  Domain,
  Gimbal,
  Fit,
  DegenerateLandmarks,
  Projection,
  Estimation,
  Parameter,
  Geometry,
  Calibration,
  Mapping,
  DegenerateGesture,
  Classification,
  Parse,
  Io,
};

// Coarse grouping used by the CLI to pick an exit code.
enum class ErrorCategory { Config, Data, Numeric };

inline ErrorCategory category_of(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Configuration:
    case ErrorKind::Parameter:
    case ErrorKind::Calibration:
    case ErrorKind::State:
      return ErrorCategory::Config;
    case ErrorKind::Parse:
    case ErrorKind::Io:
    case ErrorKind::Dimension:
    case ErrorKind::DegenerateGesture:
    case ErrorKind::DegenerateLandmarks:
    case ErrorKind::Classification:
      return ErrorCategory::Data;
    default:
      return ErrorCategory::Numeric;
  }
}

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Dimension: return "dimension error";
    case ErrorKind::Configuration: return "configuration error";
    case ErrorKind::State: return "state error";
    case ErrorKind::Training: return "training error";
    case ErrorKind::Domain: return "domain error";
    case ErrorKind::Gimbal: return "gimbal error";
    case ErrorKind::Fit: return "fit error";
    case ErrorKind::DegenerateLandmarks: return "degenerate-landmark error";
    case ErrorKind::Projection: return "projection error";
    case ErrorKind::Estimation: return "estimation error";
    case ErrorKind::Parameter: return "parameter error";
    case ErrorKind::Geometry: return "geometry error";
    case ErrorKind::Calibration: return "calibration error";
    case ErrorKind::Mapping: return "mapping error";
    case ErrorKind::DegenerateGesture: return "degenerate-gesture error";
    case ErrorKind::Classification: return "classification error";
    case ErrorKind::Parse: return "parse error";
    case ErrorKind::Io: return "i/o error";
  }
  return "error";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }
  ErrorCategory category() const noexcept { return category_of(kind_); }

 private:
  ErrorKind kind_;
};

// Estimation failures carry the residual at the point of giving up.
class EstimationError : public Error {
 public:
  EstimationError(const std::string& what, double residual)
      : Error(ErrorKind::Estimation, what + " (residual " + std::to_string(residual) + ")"),
        residual_(residual) {}

  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(ErrorKind::Parse, "line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool condition, ErrorKind kind, const std::string& what) {
  if (!condition) throw Error(kind, what);
}

}  // namespace gazekit
