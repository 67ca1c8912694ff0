#pragma once

#include <stdexcept>
#include <string>

namespace ael {

// Invalid run configuration or unknown identifier. Maps to CLI exit code 2.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A caller broke an operation's precondition (reward out of range, dimension mismatch, ...).
class ContractViolation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

// Attempted mutation of state that is frozen for validation/test.
class FrozenStateViolation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

// A decision tried to read data at or after its own outcome bar.
class LookAheadViolation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t line)
        : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
    explicit ParseError(const std::string& what) : std::runtime_error(what), line_(0) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

// Tickers in a price file do not share one timestamp grid.
class AlignmentError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class BackendError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace ael
