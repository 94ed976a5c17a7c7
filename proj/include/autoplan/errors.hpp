/* Copyright 2026 The Autoplan Authors. All rights reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/
#ifndef AUTOPLAN_ERRORS_HPP_
#define AUTOPLAN_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace autoplan {

// Base for every error the planner raises. The CLI maps PlanError to exit
// code 3 (input error) except InfeasibleError, which maps to exit code 2.
class PlanError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed document: bad field, wrong version, unknown attribute.
class SchemaError : public PlanError {
 public:
  using PlanError::PlanError;
};

// The node list does not admit a topological order.
class CycleError : public PlanError {
 public:
  using PlanError::PlanError;
};

// An input reference names a node that does not exist.
class DanglingRefError : public PlanError {
 public:
  using PlanError::PlanError;
};

// Shape rule violation during meta inference (e.g. matmul inner dims differ).
class ShapeMismatchError : public PlanError {
 public:
  using PlanError::PlanError;
};

// Operation kind with no shape rule / profile rule / strategy generator.
class UnsupportedKindError : public PlanError {
 public:
  using PlanError::PlanError;
};

// Mesh shape product does not match the device count.
class ShapeError : public PlanError {
 public:
  using PlanError::PlanError;
};

// Mesh axis index out of range.
class AxisError : public PlanError {
 public:
  using PlanError::PlanError;
};

// Sharding specs of different tensor rank where equal rank is required.
class RankMismatchError : public PlanError {
 public:
  using PlanError::PlanError;
};

// No solution fits the memory budget.
class InfeasibleError : public PlanError {
 public:
  using PlanError::PlanError;
};

// A node reached the checkpoint solver without a chosen strategy.
class MissingStrategyError : public PlanError {
 public:
  using PlanError::PlanError;
};

// Common-node seed that is differentiable.
class SeedError : public PlanError {
 public:
  using PlanError::PlanError;
};

// File system failure while emitting documents.
class IoError : public PlanError {
 public:
  using PlanError::PlanError;
};

// A layout conversion the compilation passes rely on could not be produced.
// The transform graph is strongly connected through the replicated spec, so
// reaching this indicates an internal inconsistency, not bad input.
class MissingPathError : public PlanError {
 public:
  using PlanError::PlanError;
};

}  // namespace autoplan

#endif  // AUTOPLAN_ERRORS_HPP_
