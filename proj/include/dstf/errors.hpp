#pragma once

#include <stdexcept>

namespace dstf {

// Bad input data: unreadable files, malformed archives, invalid values.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A computation produced NaN/Inf or another numerically invalid state.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Invalid configuration or command-line usage.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace dstf
