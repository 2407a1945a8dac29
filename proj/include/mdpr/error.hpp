/* Copyright 2026 The MDPR Authors. All Rights Reserved.

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

#include <stdexcept>
#include <string>

namespace mdpr {

// Base of every error raised by the library. Callers that need the CLI exit
// code contract switch on the concrete type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad user-supplied configuration (head count, dimensions, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Precondition violated by an input value.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class EmptyPoolError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Non-finite value produced or consumed by a numeric routine.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Stored bytes disagree with their manifest.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

// Missing file, missing field or missing tensor.
class LoadError : public Error {
 public:
  using Error::Error;
};

}  // namespace mdpr
