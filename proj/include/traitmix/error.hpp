#pragma once

#include <stdexcept>
#include <string>

namespace traitmix {

// Every domain error carries a kind plus the module it originated in, so CLI
// output and test assertions can distinguish failure classes.
enum class ErrorKind {
    shape,        // tensor dimension mismatch
    domain,       // bad argument value (unknown trait, negative lambda, ...)
    config,       // invalid or inconsistent configuration
    state,        // illegal object state (tape reused, re-entrant backward)
    io,           // filesystem failure
    parse,        // malformed file or client response
    statistics,   // undefined statistic (zero variance, sample too small)
    checkpoint,   // manifest/checksum/shape failure on load
    client,       // chat client failure after retries
    oracle        // self-check failure inside a numeric oracle
};

inline const char* to_string(ErrorKind k) {
    switch (k) {
    case ErrorKind::shape: return "shape";
    case ErrorKind::domain: return "domain";
    case ErrorKind::config: return "config";
    case ErrorKind::state: return "state";
    case ErrorKind::io: return "io";
    case ErrorKind::parse: return "parse";
    case ErrorKind::statistics: return "statistics";
    case ErrorKind::checkpoint: return "checkpoint";
    case ErrorKind::client: return "client";
    case ErrorKind::oracle: return "oracle";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, std::string module, const std::string& message)
        : std::runtime_error("[" + module + "/" + to_string(kind) + "] " + message),
          kind_(kind),
          module_(std::move(module)) {}

    ErrorKind kind() const { return kind_; }
    const std::string& module() const { return module_; }

private:
    ErrorKind kind_;
    std::string module_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& module, const std::string& message) {
    throw Error(kind, module, message);
}

} // namespace traitmix
