//
// Copyright 2026 The qrel Authors
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

#include <functional>
#include <iostream>
#include <mutex>
#include <stdexcept>
#include <string>
#include <string_view>

namespace qrel {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class MissingFileError : public Error {
 public:
  using Error::Error;
};

/// A file exists but does not have the expected layout or content.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Input does not fit the model's position capacity. Callers chunk.
class OverLengthError : public Error {
 public:
  using Error::Error;
};

class PreconditionError : public Error {
 public:
  using Error::Error;
};

class FingerprintMismatchError : public Error {
 public:
  using Error::Error;
};

class TransportError : public Error {
 public:
  using Error::Error;
};

/// Undefined statistic (constant input, single class, ...).
class StatisticsError : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline std::mutex& diagnostic_mutex() {
  static std::mutex m;
  return m;
}

inline std::function<void(std::string_view)>& diagnostic_sink() {
  static std::function<void(std::string_view)> sink =
      [](std::string_view msg) { std::cerr << "qrel: " << msg << '\n'; };
  return sink;
}

}  // namespace detail

/// Replaces the process-wide diagnostic sink. Passing an empty function
/// silences diagnostics.
inline void set_diagnostic_sink(std::function<void(std::string_view)> sink) {
  std::lock_guard<std::mutex> lock(detail::diagnostic_mutex());
  detail::diagnostic_sink() = std::move(sink);
}

/// Non-fatal warnings (zero-norm embeddings, solver fallbacks, overrides).
inline void diagnostic(std::string_view msg) {
  std::lock_guard<std::mutex> lock(detail::diagnostic_mutex());
  if (detail::diagnostic_sink()) detail::diagnostic_sink()(msg);
}

}  // namespace qrel
