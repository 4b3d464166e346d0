#pragma once

#include <stdexcept>
#include <string>

namespace mergelab {

enum class ErrorKind {
    Structural,  // shape / index / length mismatch
    Domain,      // argument outside the operation's domain
    Config,      // malformed or unknown configuration
    Data,        // missing or inconsistent artifacts
    Numeric,     // divergence, non-finite values
    Io,          // filesystem failures
};

const char* to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace mergelab
