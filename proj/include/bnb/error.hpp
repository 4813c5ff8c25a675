#pragma once

#include <stdexcept>
#include <string>

namespace bnb {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised by the card loader. entry() names the offending card or field.
class CardDatabaseError : public Error {
 public:
  enum class Kind { Schema, CountMismatch, UnknownReference, DuplicateId, Invariant };

  CardDatabaseError(Kind kind, std::string entry, const std::string& what)
      : Error(what), kind_(kind), entry_(std::move(entry)) {}

  Kind kind() const noexcept { return kind_; }
  const std::string& entry() const noexcept { return entry_; }

 private:
  Kind kind_;
  std::string entry_;
};

// An engine call that the game rules forbid (procedure on cooldown, game already over, ...).
class ProtocolViolation : public Error {
 public:
  using Error::Error;
};

class UnknownProcedure : public Error {
 public:
  using Error::Error;
};

}  // namespace bnb
