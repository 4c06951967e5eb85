#pragma once

#include <stdexcept>
#include <string>

namespace vqar {

// Error categories. The CLI maps each category onto a process exit code.
enum class ErrorKind {
    Contract,   // caller violated a documented precondition (shapes, ranges)
    State,      // object used before it was ready (e.g. uninitialized codebook)
    Config,     // bad configuration or command-line input
    Data,       // malformed or unusable dataset
    Numerical,  // NaN / Inf produced during computation
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

struct ContractError : Error {
    explicit ContractError(const std::string& what) : Error(ErrorKind::Contract, what) {}
};

struct StateError : Error {
    explicit StateError(const std::string& what) : Error(ErrorKind::State, what) {}
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& what) : Error(ErrorKind::Config, what) {}
};

struct DataError : Error {
    explicit DataError(const std::string& what) : Error(ErrorKind::Data, what) {}
};

struct NumericalError : Error {
    explicit NumericalError(const std::string& what) : Error(ErrorKind::Numerical, what) {}
};

}  // namespace vqar
