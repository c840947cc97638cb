// SPDX-License-Identifier: Apache-2.0
//
// Exception types shared by every module.

#pragma once

#include <stdexcept>
#include <string>

namespace adaptqa {

/// A caller broke a documented precondition (bad shape, out-of-vocab id, ...).
class ContractError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Tensor extents do not line up for the requested operation.
class DimensionError : public ContractError {
public:
    using ContractError::ContractError;
};

/// Malformed input file (JSON path or byte offset is part of the message).
class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Well-formed input whose content fails a semantic check (answer offsets, duplicate ids).
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Experiment configuration is incomplete or inconsistent.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A run-time invariant check failed (frozen weights changed, updates after swap, ...).
class InvariantViolation : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace adaptqa
