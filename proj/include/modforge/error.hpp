#pragma once

#include <stdexcept>
#include <string>

namespace modforge {

// Base of every library exception. The CLI maps each subclass to an exit code.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed arguments or configuration values (exit code 1).
class UsageError : public Error {
public:
    using Error::Error;
};

// Bad input data: format violations, dimension mismatches, non-finite values,
// missing labels, I/O failures (exit code 2).
class DataError : public Error {
public:
    using Error::Error;
};

// Violations of the partition constraints (completeness, exclusivity,
// non-emptiness) or of K against the matrix dimensions (exit code 3).
class ConstraintError : public Error {
public:
    using Error::Error;
};

}  // namespace modforge
