#ifndef NIFS_ERROR_HPP
#define NIFS_ERROR_HPP

#include <stdexcept>
#include <string>

namespace nifs {

/// Letter outside its level's branching bound, or a malformed word.
class InvalidWordError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Tree expansion hit the depth cap. `branch` is the word being expanded.
class TruncationError : public std::runtime_error {
public:
    TruncationError(const std::string& what, std::string branch)
        : std::runtime_error(what), branch_(std::move(branch)) {}
    const std::string& branch() const noexcept { return branch_; }

private:
    std::string branch_;
};

/// An explicit translation table has no entry for a required prefix.
class IncompleteSchemeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class SingularMatrixError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Argument outside the mathematical domain of an operation (q <= 0, s < 0, ...).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Too few usable scales for a regression.
class InsufficientDataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Inconsistent experiment configuration.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace nifs

#endif // NIFS_ERROR_HPP
