#pragma once

#include <stdexcept>
#include <string>

namespace avfuse {

// Malformed file contents: bad magic, truncated payload, shape mismatch.
class format_error : public std::runtime_error {
public:
    explicit format_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Filesystem-level failures (open/read/write/rename).
class io_error : public std::runtime_error {
public:
    explicit io_error(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace avfuse
