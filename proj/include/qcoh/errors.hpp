#pragma once

#include <stdexcept>
#include <string>

namespace qcoh {

/// Broad failure category. The CLI maps each category to an exit code.
enum class ErrorKind { input, numerical, config };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

/// Malformed or out-of-domain caller input.
class InputError : public Error {
public:
    explicit InputError(const std::string& what) : Error(ErrorKind::input, what) {}
};

/// A numerical routine could not produce a trustworthy result.
class NumericalError : public Error {
public:
    explicit NumericalError(const std::string& what) : Error(ErrorKind::numerical, what) {}
};

/// Invalid configuration (bad model spec, CV plan, bench settings, ...).
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(ErrorKind::config, what) {}
};

/// Raised by the Durbin-Levinson recursion when a partial autocorrelation
/// matrix has a singular value >= 1.
class NonStableModelError : public NumericalError {
public:
    NonStableModelError(int lag, const std::string& what) : NumericalError(what), lag_(lag) {}

    int lag() const noexcept { return lag_; }

private:
    int lag_;
};

inline int exit_code(ErrorKind kind) noexcept {
    switch (kind) {
    case ErrorKind::input: return 2;
    case ErrorKind::numerical: return 3;
    case ErrorKind::config: return 4;
    }
    return 1;
}

} // namespace qcoh
