#pragma once

#include <cstdarg>
#include <cstdio>
#include <stdexcept>
#include <string>

namespace h2ems {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad run configuration or malformed input data (CLI exit code 2).
struct ConfigError : Error {
  using Error::Error;
};

// Solver transport trouble: process died, protocol violation, bad solution.
struct SolverError : Error {
  using Error::Error;
};

// The backend cannot run at all (missing interpreter/solver, CLI exit code 3).
struct SolverUnavailable : SolverError {
  using SolverError::SolverError;
};

// printf-style string builder for error messages and report rows
inline std::string strf(const char* fmt, ...) {
  va_list ap;
  va_start(ap, fmt);
  char buf[1024];
  vsnprintf(buf, sizeof(buf), fmt, ap);
  va_end(ap);
  return std::string(buf);
}

}  // namespace h2ems
