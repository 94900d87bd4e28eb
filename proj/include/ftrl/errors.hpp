#pragma once

#include <stdexcept>
#include <string>

namespace ftrl {

// Dimension or layout disagreement between parameter blocks.
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

// Non-finite values where finite arithmetic is required.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// Domain precondition violated by a caller-supplied value.
struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// Malformed byte stream on the wire or in a checkpoint file.
struct ProtocolError : std::runtime_error {
    explicit ProtocolError(const std::string& what) : std::runtime_error(what) {}
};

// Bad experiment configuration (file level or semantic).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace ftrl
