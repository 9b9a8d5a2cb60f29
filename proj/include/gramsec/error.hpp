#pragma once

#include <stdexcept>
#include <string>

namespace gramsec {

enum class ErrorKind {
    Io,
    Format,       // bad magic or structurally invalid header
    Version,      // unsupported format version
    Truncated,    // stream ended before the declared payload
    NonFinite,    // NaN or Inf encountered
    Invariant,    // a domain invariant does not hold
    Contract,     // caller violated a precondition
    Shape,        // layer layout mismatch
};

const char* to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

class IoError : public Error {
public:
    explicit IoError(const std::string& m) : Error(ErrorKind::Io, m) {}
};

class FormatError : public Error {
public:
    explicit FormatError(const std::string& m) : Error(ErrorKind::Format, m) {}
};

class VersionError : public Error {
public:
    explicit VersionError(const std::string& m) : Error(ErrorKind::Version, m) {}
};

class TruncationError : public Error {
public:
    TruncationError(const std::string& m, std::size_t expected, std::size_t available)
        : Error(ErrorKind::Truncated, m), expected_(expected), available_(available) {}

    std::size_t expected_bytes() const noexcept { return expected_; }
    std::size_t available_bytes() const noexcept { return available_; }

private:
    std::size_t expected_;
    std::size_t available_;
};

class NonFiniteError : public Error {
public:
    explicit NonFiniteError(const std::string& m) : Error(ErrorKind::NonFinite, m) {}
};

class InvariantError : public Error {
public:
    explicit InvariantError(const std::string& m) : Error(ErrorKind::Invariant, m) {}
};

class ContractError : public Error {
public:
    explicit ContractError(const std::string& m) : Error(ErrorKind::Contract, m) {}
};

class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& m) : Error(ErrorKind::Shape, m) {}
};

// Rethrows `e` as the same error type with `prefix` prepended to its message.
[[noreturn]] void rethrow_with_context(const Error& e, const std::string& prefix);

}  // namespace gramsec
