#pragma once

#include <stdexcept>
#include <string>

namespace coboom {

// Exit code classes used by the command line front end.
enum class ErrorKind { validation = 1, io = 2, numeric = 3 };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define COBOOM_DEFINE_ERROR(Name, Kind)                                       \
  class Name : public Error {                                                 \
   public:                                                                    \
    explicit Name(const std::string& what) : Error(ErrorKind::Kind, what) {}  \
  }

COBOOM_DEFINE_ERROR(DimensionError, validation);
COBOOM_DEFINE_ERROR(ConfigError, validation);
COBOOM_DEFINE_ERROR(ContractError, validation);
COBOOM_DEFINE_ERROR(IoError, io);
COBOOM_DEFINE_ERROR(FormatError, io);
COBOOM_DEFINE_ERROR(ParseError, io);
COBOOM_DEFINE_ERROR(ChecksumError, io);
COBOOM_DEFINE_ERROR(VersionError, io);
COBOOM_DEFINE_ERROR(NumericError, numeric);
// Raised when an embedding norm is too small for a cosine to be meaningful.
COBOOM_DEFINE_ERROR(DegenerateEmbeddingError, numeric);

#undef COBOOM_DEFINE_ERROR

}  // namespace coboom
