#pragma once

#include <stdexcept>
#include <string>

namespace mglab {

/// A loss or parameter went non-finite during optimization.
struct DivergenceError : std::runtime_error {
    explicit DivergenceError(const std::string& what) : std::runtime_error(what) { }
};

}  // namespace mglab
