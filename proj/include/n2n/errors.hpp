/* Copyright 2026 The n2n Authors. All Rights Reserved.

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

#ifndef N2N_ERRORS_HPP_
#define N2N_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace n2n {

// Base class for everything this library throws on purpose.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor/graph dimension mismatches and other structural problems.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Invalid arguments, specs or configuration values.
class ValueError : public Error {
 public:
  using Error::Error;
};

// File and serialization problems.
class IoError : public Error {
 public:
  using Error::Error;
};

class VersionError : public IoError {
 public:
  using IoError::IoError;
};

class ChecksumError : public IoError {
 public:
  using IoError::IoError;
};

class TruncatedError : public IoError {
 public:
  using IoError::IoError;
};

// Raised when a training run produces a non-finite loss.
class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace n2n

#endif  // N2N_ERRORS_HPP_
