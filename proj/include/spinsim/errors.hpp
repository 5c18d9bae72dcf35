#pragma once

#include <stdexcept>
#include <string>

namespace spinsim {

// Bad user-supplied value (config key, function argument, incompatible sizes).
struct argument_error : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Malformed external data (CSV / config file syntax).
struct format_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Numerical contract violated (non-Hermitian input, failed convergence, ...).
struct numeric_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace spinsim
