// Copyright 2026 The Tustin-Net Authors
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

#ifndef TUSTIN_ERRORS_H_
#define TUSTIN_ERRORS_H_

#include <stdexcept>
#include <string>

namespace tustin {

// Non-finite or otherwise unusable state passed to the dynamics.
class InvalidStateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A Runge-Kutta stage produced a non-finite value.
class IntegrationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Mismatched lengths or shapes.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Linearization requested away from an equilibrium.
class EquilibriumError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Riccati recursion failed to converge.
class StabilizabilityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Cholesky of a belief covariance failed even after jitter.
class IllConditionedBeliefError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite measurement handed to a filter.
class MeasurementError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Training loss became NaN or infinite.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace tustin

#endif  // TUSTIN_ERRORS_H_
