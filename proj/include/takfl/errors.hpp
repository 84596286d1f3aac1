// Copyright (c) 2026, The takfl-sim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace takfl {

// Tensor or parameter shapes that do not line up.
struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Argument outside the mathematical domain of an operation (T <= 0, bad label, ...).
struct DomainError : std::domain_error {
    using std::domain_error::domain_error;
};

// Invalid experiment or data configuration. Messages carry the key path when known.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed on-disk artifact (checkpoint, CSV).
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A loss or parameter became NaN/Inf.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace takfl
