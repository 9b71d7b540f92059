// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace megc {

/// Precondition or shape violation by the caller.
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Signal data containing NaN/Inf.
class InvalidSignalError : public ContractError {
 public:
  using ContractError::ContractError;
};

/// Filter specification that cannot be realized (e.g. band edge at Nyquist).
class DesignError : public ContractError {
 public:
  using ContractError::ContractError;
};

/// Non-finite loss or gradient encountered while training.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A statistical test with no usable observations.
class UndefinedTestError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A metric that cannot be computed for the given labels.
class UndefinedMetricError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed container or configuration document.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace megc
