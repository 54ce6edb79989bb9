/* Copyright 2026 The dfqlab Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dfq {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A caller violated an operation's precondition (shape, range, symmetry).
class PreconditionError : public Error {
 public:
  using Error::Error;
};

// Invalid or inconsistent configuration (empty vocab, unknown key, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed serialized input. Carries the 1-based line number when known.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : Error(line ? what + " (line " + std::to_string(line) + ")" : what),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Numerical breakdown: NaN loss, non-PSD matrix, divergence.
class NumericError : public Error {
 public:
  NumericError(const std::string& what, long step = -1)
      : Error(step >= 0 ? what + " at step " + std::to_string(step) : what),
        step_(step) {}
  long step() const noexcept { return step_; }

 private:
  long step_;
};

// Data that violates a documented invariant (negative norm in a trace, ...).
class DataError : public Error {
 public:
  using Error::Error;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw PreconditionError(msg);
}

}  // namespace dfq
