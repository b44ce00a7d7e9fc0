#pragma once

#include <stdexcept>
#include <string>

namespace optistate {

/// Base of every error the library throws. `exit_code()` is the process exit
/// status the CLI reports for it.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
    virtual int exit_code() const noexcept { return 1; }
};

class ConfigError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 2; }
};

class ShapeError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 2; }
};

class IoError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 4; }
};

class FormatError : public IoError {
public:
    using IoError::IoError;
};

class DivergedError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 3; }
};

class GimbalLockError : public Error {
public:
    using Error::Error;
};

class SingularInertiaError : public Error {
public:
    using Error::Error;
};

class NoContactError : public Error {
public:
    using Error::Error;
};

class InnovationSingularError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 3; }
};

class InfeasibleError : public Error {
public:
    using Error::Error;
};

class MissingTruthError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 2; }
};

} // namespace optistate
