#pragma once

#include <stdexcept>
#include <string>

namespace kgc {

// Each error class maps onto one CLI exit code (see tools/kgc.cpp).

/// Malformed input file or configuration.
class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Unknown entity or relation symbol.
class VocabularyError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Corrupt or inconsistent persisted artifact.
class IntegrityError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Training produced a non-finite loss.
class DivergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Caller violated an operation precondition.
class ContractError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Synthetic generator was asked for something it cannot produce.
class GenerationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string& message) {
    if (!condition) throw ContractError(message);
}

}  // namespace kgc
