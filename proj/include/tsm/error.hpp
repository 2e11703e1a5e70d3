#pragma once

#include <stdexcept>
#include <string>

namespace tsm {

// Failure categories that survive up to the command line, where each one maps
// to its own exit status. Precondition violations on plain arguments use
// std::invalid_argument instead.
enum class ErrorKind { config, identification, training, io };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(ErrorKind::config, what) {}
};

class IdentificationError : public Error {
public:
    explicit IdentificationError(const std::string& what)
        : Error(ErrorKind::identification, what) {}
};

class TrainingError : public Error {
public:
    explicit TrainingError(const std::string& what) : Error(ErrorKind::training, what) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error(ErrorKind::io, what) {}
};

}  // namespace tsm
