// Copyright 2026 The gtbias Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace gtbias {

/// Machine-readable failure category. The CLI reports it verbatim in its
/// error JSON, so the spellings returned by to_string() are part of the
/// external interface.
enum class ErrorKind {
  kParameter,
  kEmptyGraph,
  kDegenerateTask,
  kNumericFailure,
  kController,
  kEmptySubset,
  kIncompleteTable,
  kIo,
  kFormat,
  kConfig,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kParameter: return "parameter";
    case ErrorKind::kEmptyGraph: return "empty_graph";
    case ErrorKind::kDegenerateTask: return "degenerate_task";
    case ErrorKind::kNumericFailure: return "numeric_failure";
    case ErrorKind::kController: return "controller";
    case ErrorKind::kEmptySubset: return "empty_subset";
    case ErrorKind::kIncompleteTable: return "incomplete_table";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kFormat: return "format";
    case ErrorKind::kConfig: return "config";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Raised when a forward pass produces a non-finite activation.
class NumericFailure : public Error {
 public:
  NumericFailure(int layer, const std::string& what)
      : Error(ErrorKind::kNumericFailure, what), layer_(layer) {}

  /// Transformer block index, or -1 for the input projection / readout.
  int layer() const noexcept { return layer_; }

 private:
  int layer_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) fail(kind, what);
}

}  // namespace gtbias
