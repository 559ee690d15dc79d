#pragma once

#include <stdexcept>
#include <string>

namespace diavgeia {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class NotFound : public Error {
  public:
    using Error::Error;
};

class CorruptRecord : public Error {
  public:
    using Error::Error;
};

class InvalidArgument : public Error {
  public:
    using Error::Error;
};

class IoError : public Error {
  public:
    using Error::Error;
};

}  // namespace diavgeia
