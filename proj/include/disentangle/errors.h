// Copyright 2026 The Disentangle Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef DISENTANGLE_ERRORS_H_
#define DISENTANGLE_ERRORS_H_

#include <stdexcept>
#include <string>

namespace disentangle {

// Base of every error raised by the library. `category()` is the short,
// machine-parsable tag the CLI prints and maps to an exit code.
class Error : public std::runtime_error {
 public:
  Error(std::string category, const std::string& message)
      : std::runtime_error(message), category_(std::move(category)) {}

  const std::string& category() const { return category_; }

 private:
  std::string category_;
};

// A configuration value violates a documented bound.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& message) : Error("config", message) {}
};

// A function was called with arguments that break its precondition
// (shape/dimension mismatch, invalid distribution, ...).
class ContractError : public Error {
 public:
  explicit ContractError(const std::string& message)
      : Error("contract", message) {}
};

// Reading a dataset from disk failed.
class IngestionError : public Error {
 public:
  explicit IngestionError(const std::string& message)
      : Error("ingestion", message) {}
};

// No training triplet satisfies the sampling constraints.
class SamplingError : public Error {
 public:
  explicit SamplingError(const std::string& message)
      : Error("sampling", message) {}
};

// Optimization produced a non-finite value or otherwise failed.
class TrainingError : public Error {
 public:
  explicit TrainingError(const std::string& message)
      : Error("training", message) {}
};

}  // namespace disentangle

#endif  // DISENTANGLE_ERRORS_H_
