#pragma once

#include <stdexcept>
#include <string>

namespace tetforge {

// Every failure the engine reports derives from Error; the CLI maps the
// concrete type to a stable exit status.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class DomainError : public Error {
public:
    using Error::Error;
};

class ContractError : public Error {
public:
    using Error::Error;
};

class PriorError : public Error {
public:
    explicit PriorError(const std::string& what, bool retriable = true)
        : Error(what), retriable_(retriable) {}
    bool retriable() const noexcept { return retriable_; }

private:
    bool retriable_;
};

class ProtocolError : public PriorError {
public:
    explicit ProtocolError(const std::string& what) : PriorError(what, false) {}
};

class DivergenceError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

} // namespace tetforge
