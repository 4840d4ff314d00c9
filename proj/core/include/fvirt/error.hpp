// Copyright 2026 The fpgavirt Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS-IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace fvirt {

// Base class for every error raised by the toolchain.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised while reading or validating a model description.
class ModelError : public Error {
 public:
  enum class Kind { Syntax, Semantic };

  ModelError(Kind kind, int layer_id, const std::string& what)
      : Error(what), kind_(kind), layer_id_(layer_id) {}

  Kind kind() const noexcept { return kind_; }
  // -1 when the error is not attributable to a single layer.
  int layer_id() const noexcept { return layer_id_; }

 private:
  Kind kind_;
  int layer_id_;
};

// Raised by the instruction text decoder and by schema-checked encoding.
class IsaError : public Error {
 public:
  IsaError(const std::string& what, int column = -1)
      : Error(what), column_(column) {}

  // Zero-based column of the offending token, or -1.
  int column() const noexcept { return column_; }

 private:
  int column_;
};

// Static or dynamic compilation failure (bad tiles, capacity overflow).
class CompileError : public Error {
 public:
  using Error::Error;
};

// Invalid pool configuration, user placement, or runtime deadlock.
class SimulationError : public Error {
 public:
  using Error::Error;
};

}  // namespace fvirt
