#pragma once

#include <stdexcept>
#include <string>

namespace navmini {

// Base class for all recoverable failures raised by the library.
class Error : public std::runtime_error {
public:
	explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid tensor shapes / op attributes.
class ShapeError : public Error {
public:
	explicit ShapeError(const std::string& msg) : Error(msg) {}
};

// Non-finite values or failed numeric contracts.
class NumericError : public Error {
public:
	explicit NumericError(const std::string& msg) : Error(msg) {}
};

// File format or filesystem failures.
class IoError : public Error {
public:
	explicit IoError(const std::string& msg) : Error(msg) {}
};

// Bad run configuration (schema violations, unknown keys).
class ConfigError : public Error {
public:
	explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// Simulation contract violations (stepping a finished episode, crowded arena).
class SimError : public Error {
public:
	explicit SimError(const std::string& msg) : Error(msg) {}
};

} // namespace navmini
