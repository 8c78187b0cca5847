#pragma once

#include <stdexcept>
#include <string>

namespace bard {

/// Invalid argument to a statistical or decision routine.
struct ParameterError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// A decision cannot be taken yet (e.g. no completed assessments).
struct DeferredError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Malformed patient or outcome data.
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Operation not allowed in the trial's current stage.
struct StateError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NotFoundError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConflictError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct QuotaError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Event log could not be replayed; carries the offending sequence number.
struct ReplayError : std::runtime_error {
    ReplayError(long long seq, const std::string& what)
        : std::runtime_error("event " + std::to_string(seq) + ": " + what),
          sequence(seq) {}
    long long sequence;
};

}  // namespace bard
