//
// Copyright 2026 The ldpx Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//
#pragma once

#include <stdexcept>
#include <string>

namespace ldpx {

// Base for every error raised by the library. Callers that only need a
// message can catch this; tests distinguish the subclasses.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A numeric parameter outside its mathematical domain (e.g. epsilon <= 0).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Input data violates a value contract (pixel outside [0,1], bad label).
class ValidationError : public Error {
 public:
  using Error::Error;
};

// An operation was applied to an object in the wrong lifecycle state.
class StateError : public Error {
 public:
  using Error::Error;
};

// Counts, sizes or shapes that do not fit together.
class SizeError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// IDX ingestion failures.
class FormatError : public Error {
 public:
  using Error::Error;
};
class TruncatedError : public Error {
 public:
  using Error::Error;
};
class MismatchError : public Error {
 public:
  using Error::Error;
};

class CalibrationError : public Error {
 public:
  using Error::Error;
};

// Wraps a failure inside a multi-stage pipeline with the stage identity.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error(stage + ": " + what), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

}  // namespace ldpx
