/*
 * Copyright 2026 The vrmatch Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#ifndef VRMATCH_ERROR_H_
#define VRMATCH_ERROR_H_

#include <stdexcept>
#include <string>

namespace vrmatch {

// Broad failure classes. The CLI maps these onto process exit codes.
enum class ErrorKind {
  kValidation,  // bad input, bad config, contract violation
  kInfeasible,  // a matching problem cannot be solved under the chosen policy
  kNumeric,     // fit did not converge, overflow, etc.
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

inline Error ValidationError(const std::string& what) {
  return Error(ErrorKind::kValidation, what);
}
inline Error InfeasibleError(const std::string& what) {
  return Error(ErrorKind::kInfeasible, what);
}
inline Error NumericError(const std::string& what) {
  return Error(ErrorKind::kNumeric, what);
}

}  // namespace vrmatch

#endif  // VRMATCH_ERROR_H_
