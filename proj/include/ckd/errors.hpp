#pragma once

#include <stdexcept>
#include <string>

namespace ckd {

// Raised for malformed or inconsistent input data; the CLI maps it to exit 2.
struct DataError : std::runtime_error {
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace ckd
