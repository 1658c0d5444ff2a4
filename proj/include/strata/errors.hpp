#pragma once

#include <stdexcept>
#include <string>

namespace strata {

/// Bad user configuration (unknown keys, out-of-range values). CLI exit code 2.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A training operation was attempted on frozen parameters.
class FrozenError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Training stopped: non-finite loss or a diverging quality metric.
class TrainingDiverged : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace strata
