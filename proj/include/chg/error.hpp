#pragma once

#include <stdexcept>
#include <string>

namespace chg {

enum class ErrorKind {
  config,
  geometry,
  assembly,
  linear_solver,
  nonlinear_solver,
  line_search,
  unsupported,
  io,
};

/// Single exception type for the library; `kind()` drives CLI exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace chg
