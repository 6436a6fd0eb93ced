// Copyright 2026 The TORE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace tore {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A caller broke a documented precondition (empty cache, non-scalar loss, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// An index (token position, glimpse, label) lies outside its domain.
class RangeError : public Error {
 public:
  using Error::Error;
};

/// NaN or Inf appeared where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// A glimpse revisits token positions already held by the cache.
class DuplicatePositionError : public Error {
 public:
  using Error::Error;
};

/// Every glimpse has already been chosen.
class ExhaustionError : public Error {
 public:
  using Error::Error;
};

/// Malformed or unreadable file. `offset` is the byte position of the fault
/// when known, -1 otherwise.
class LoadError : public Error {
 public:
  LoadError(const std::string& what, std::int64_t offset = -1)
      : Error(offset >= 0 ? what + " (at byte offset " + std::to_string(offset) + ")" : what),
        offset_(offset) {}
  std::int64_t offset() const noexcept { return offset_; }

 private:
  std::int64_t offset_;
};

/// Invalid command-line or configuration input.
class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace tore
