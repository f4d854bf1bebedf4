#pragma once

#include <stdexcept>
#include <string>

namespace dv {

// Error taxonomy used across the library. All derive from std::runtime_error
// so callers can catch broadly; the CLI maps each to a one-line diagnostic.

struct invalid_argument : std::runtime_error {
    explicit invalid_argument(const std::string& msg) : std::runtime_error(msg) {}
};

struct invalid_state : std::runtime_error {
    explicit invalid_state(const std::string& msg) : std::runtime_error(msg) {}
};

struct numerical_error : std::runtime_error {
    explicit numerical_error(const std::string& msg) : std::runtime_error(msg) {}
};

struct io_error : std::runtime_error {
    explicit io_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Raised when the training loss becomes non-finite.
struct divergence_error : std::runtime_error {
    explicit divergence_error(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace dv
