#pragma once

#include <stdexcept>
#include <string>

namespace emotok {

// Base class for all library failures.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Bad argument values, shape mismatches, out-of-range indices.
class ParameterError : public Error {
public:
    using Error::Error;
};

// Numerically undefined inputs (zero-norm vectors, KL with a zero in the support).
class DegenerateInputError : public Error {
public:
    using Error::Error;
};

// Malformed or inconsistent files (manifests, samples, embeddings, checkpoints).
class DataError : public Error {
public:
    using Error::Error;
};

// Disconnected or ill-formed joint graphs.
class TopologyError : public Error {
public:
    using Error::Error;
};

// Training produced NaN/Inf loss.
class DivergenceError : public Error {
public:
    using Error::Error;
};

// Remote decoder failures.
class TransportError : public Error {
public:
    using Error::Error;
};

class TimeoutError : public TransportError {
public:
    using TransportError::TransportError;
};

class HttpStatusError : public TransportError {
public:
    HttpStatusError(int status, const std::string& what)
        : TransportError(what), status_(status) {}
    int status() const { return status_; }

private:
    int status_;
};

// Response body did not match the documented schema.
class SchemaError : public TransportError {
public:
    using TransportError::TransportError;
};

}  // namespace emotok
