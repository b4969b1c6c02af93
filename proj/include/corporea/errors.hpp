// Copyright 2026 The Corporea Authors
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

#ifndef CORPOREA__ERRORS_HPP_
#define CORPOREA__ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace corporea
{

/// Invalid input: out-of-range values, shape mismatches, malformed files.
class DomainError : public std::invalid_argument
{
public:
  using std::invalid_argument::invalid_argument;
};

/// A computation produced a non-finite value or a factorization failed.
class NumericalError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

/// Reading or writing a file failed. `path()` names the offending file.
class IoError : public std::runtime_error
{
public:
  IoError(const std::string & what, std::string path)
  : std::runtime_error(what + ": " + path), path_(std::move(path))
  {
  }
  const std::string & path() const noexcept { return path_; }

private:
  std::string path_;
};

}  // namespace corporea

#endif  // CORPOREA__ERRORS_HPP_
