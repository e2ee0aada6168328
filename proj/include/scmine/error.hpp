#pragma once

#include <stdexcept>
#include <string>

namespace scmine {

// Base class for every failure the library reports.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Raised when an explorer API reports a contract without published source.
class UnverifiedContractError : public Error {
 public:
  explicit UnverifiedContractError(const std::string& address)
      : Error("contract " + address + " has no verified source code"), address_(address) {}
  const std::string& address() const { return address_; }

 private:
  std::string address_;
};

}  // namespace scmine
