// Copyright 2026 The avforge Authors
// SPDX-License-Identifier: Apache-2.0
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

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace avforge {

enum class ErrorKind {
  io,
  malformed_header,
  truncated_header,
  out_of_bounds,
  overlapping_regions,
  unsupported_dtype,
  invalid_argument,
  incompatible,
  missing_tensor,
  sequence_too_long,
  empty_completion,
  remote_failed,
  malformed_response,
  scorer_failed,
  too_few_records,
  unknown_placeholder,
  recipe_parse,
  quota_exhausted,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::io: return "io";
    case ErrorKind::malformed_header: return "malformed-header";
    case ErrorKind::truncated_header: return "truncated-header";
    case ErrorKind::out_of_bounds: return "out-of-bounds";
    case ErrorKind::overlapping_regions: return "overlapping-regions";
    case ErrorKind::unsupported_dtype: return "unsupported-dtype";
    case ErrorKind::invalid_argument: return "invalid-argument";
    case ErrorKind::incompatible: return "incompatible";
    case ErrorKind::missing_tensor: return "missing-tensor";
    case ErrorKind::sequence_too_long: return "sequence-too-long";
    case ErrorKind::empty_completion: return "empty-completion";
    case ErrorKind::remote_failed: return "remote-failed";
    case ErrorKind::malformed_response: return "malformed-response";
    case ErrorKind::scorer_failed: return "scorer-failed";
    case ErrorKind::too_few_records: return "too-few-records";
    case ErrorKind::unknown_placeholder: return "unknown-placeholder";
    case ErrorKind::recipe_parse: return "recipe-parse";
    case ErrorKind::quota_exhausted: return "quota-exhausted";
  }
  return "unknown";
}

/// Every failure raised by the library carries a machine-readable kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message),
        kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace avforge
