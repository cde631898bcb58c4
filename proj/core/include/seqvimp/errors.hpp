#pragma once

#include <stdexcept>
#include <string>

namespace seqvimp {

// Bad option or parameter combination supplied by the caller.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Input data that cannot be used: unreadable file, unknown column, empty table.
struct DataError : std::runtime_error {
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// A numeric routine left its domain of validity (failed bracket, overflow).
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace seqvimp
