#pragma once

#include <stdexcept>
#include <string>

namespace cvnp {

// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ContractError : public Error {
 public:
  using Error::Error;
};

class InvalidTemperature : public Error {
 public:
  using Error::Error;
};

class TrainingInputError : public Error {
 public:
  using Error::Error;
};

}  // namespace cvnp
