#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace plite {

// Every recoverable failure in the toolkit surfaces as a plite::Error with a
// one-line message; callers that care about categories catch the subclasses.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed bytes while reading a file format; carries the byte offset.
class ParseError : public Error {
public:
    ParseError(const std::string& msg, std::size_t offset)
        : Error(msg + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}

    std::size_t offset() const { return offset_; }

private:
    std::size_t offset_;
};

class IoError : public Error {
public:
    explicit IoError(const std::string& msg) : Error(msg) {}
};

}  // namespace plite
