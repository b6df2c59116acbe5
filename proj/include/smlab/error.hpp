#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace smlab {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    virtual const char* kind() const noexcept { return "error"; }
};

class ArgumentError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "argument"; }
};

class RangeError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "range"; }
};

class UnsupportedError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "unsupported"; }
};

/// A model coefficient evaluated to a non-finite number or a validation gate failed.
class ModelError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "model"; }
};

/// Non-finite state encountered while stepping a path.
class BlowUpError : public Error {
public:
    BlowUpError(std::size_t step, const std::string& what)
        : Error(what), step_(step) {}
    const char* kind() const noexcept override { return "blow_up"; }
    std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

/// Scenario configuration problem; `field()` is the dotted key at fault.
class ConfigError : public Error {
public:
    ConfigError(std::string field, const std::string& what)
        : Error(what), field_(std::move(field)) {}
    const char* kind() const noexcept override { return "config"; }
    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

}  // namespace smlab
