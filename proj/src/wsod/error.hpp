#pragma once

#include <stdexcept>
#include <string>

namespace wsod {

enum class ErrorKind {
  config,      // invalid configuration or missing required inputs
  data,        // malformed or invalid dataset / sidecar content
  shape,       // matrix dimension mismatch
  numeric,     // nonfinite values in optimizer or gradient checks
  io,          // file could not be opened or written
  checkpoint,  // checkpoint incompatible with the dataset or model layout
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

}  // namespace wsod
