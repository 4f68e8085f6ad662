#pragma once

#include <stdexcept>
#include <string>

namespace gitseed {

// Base class for all engine errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Config file could not be parsed; line is 1-based.
struct ParseError : Error {
    ParseError(const std::string& msg, int line_no)
        : Error(msg + " (line " + std::to_string(line_no) + ")"), line(line_no) {}
    int line;
};

// A config invariant was violated; field names the offending key.
struct ValidationError : Error {
    ValidationError(const std::string& field_name, const std::string& msg)
        : Error("invalid " + field_name + ": " + msg), field(field_name) {}
    std::string field;
};

// Auth token env variable absent or empty.
struct MissingToken : Error {
    using Error::Error;
};

// REST client errors.
struct AuthError : Error {
    using Error::Error;
};
struct ServerError : Error {
    using Error::Error;
};
struct ConflictError : Error {
    using Error::Error;
};
struct TransportError : Error {
    using Error::Error;
};
struct UnknownUser : Error {
    using Error::Error;
};
struct UnknownProject : Error {
    using Error::Error;
};

// Local git errors.
struct UnknownCommit : Error {
    using Error::Error;
};
struct PushRejected : Error {
    using Error::Error;
};

// Persistent store I/O failure.
struct StoreError : Error {
    using Error::Error;
};

// Mock server rejects a write by a member below Developer.
struct PermissionDenied : Error {
    using Error::Error;
};

}  // namespace gitseed
