#pragma once

#include <stdexcept>
#include <string>

namespace lrd {

enum class ErrorCategory {
    argument,  // bad call-site arguments (shape, range)
    config,    // invalid user configuration
    data,      // malformed or non-finite input data
    io,        // filesystem failures
    numeric,   // algorithm did not converge
    internal,  // inconsistent internal state
};

const char* category_name(ErrorCategory c) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorCategory category, const std::string& what)
        : std::runtime_error(what), category_(category) {}

    ErrorCategory category() const noexcept { return category_; }

private:
    ErrorCategory category_;
};

struct ArgumentError : Error {
    explicit ArgumentError(const std::string& w) : Error(ErrorCategory::argument, w) {}
};
struct ConfigError : Error {
    explicit ConfigError(const std::string& w) : Error(ErrorCategory::config, w) {}
};
struct DataError : Error {
    explicit DataError(const std::string& w) : Error(ErrorCategory::data, w) {}
};
struct IoError : Error {
    explicit IoError(const std::string& w) : Error(ErrorCategory::io, w) {}
};
struct NumericError : Error {
    explicit NumericError(const std::string& w) : Error(ErrorCategory::numeric, w) {}
};
struct InternalError : Error {
    explicit InternalError(const std::string& w) : Error(ErrorCategory::internal, w) {}
};

}  // namespace lrd
