// Copyright 2026 The TANO Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace tano {

// Every failure raised by the library derives from Error. The category maps
// one-to-one onto the C API status codes and the CLI exit codes.
enum class ErrorKind { kValidation = 2, kNumeric = 3, kFormat = 4 };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Bad arguments, violated preconditions, out-of-range indices.
class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what)
      : Error(ErrorKind::kValidation, what) {}
};

// Shape disagreement between operands.
class DimensionError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Non-finite values, divergence.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what)
      : Error(ErrorKind::kNumeric, what) {}
};

// I/O failures and malformed files.
class FormatError : public Error {
 public:
  explicit FormatError(const std::string& what)
      : Error(ErrorKind::kFormat, what) {}
};

}  // namespace tano
