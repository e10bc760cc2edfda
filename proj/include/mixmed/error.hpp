#pragma once

#include <stdexcept>
#include <string>

namespace mixmed {

// Coarse error category; the CLI maps these onto exit codes.
enum class ErrorKind { config, data, numerical };

/// Process exit status for an error kind; 1 is reserved for internal errors.
inline int exit_code(ErrorKind k) {
    switch (k) {
    case ErrorKind::config: return 2;
    case ErrorKind::data: return 3;
    case ErrorKind::numerical: return 4;
    }
    return 1;
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }
    virtual const char* name() const noexcept { return "error"; }

private:
    ErrorKind kind_;
};

#define MIXMED_DEFINE_ERROR(Type, Kind, Label)                                     \
    class Type : public Error {                                                    \
    public:                                                                        \
        explicit Type(const std::string& what) : Error(ErrorKind::Kind, what) {}   \
        const char* name() const noexcept override { return Label; }               \
    };

MIXMED_DEFINE_ERROR(SchemaError, config, "schema_error")
MIXMED_DEFINE_ERROR(ConfigurationError, config, "configuration_error")
MIXMED_DEFINE_ERROR(DomainError, config, "domain_error")
MIXMED_DEFINE_ERROR(ParseError, data, "parse_error")
MIXMED_DEFINE_ERROR(InsufficientDataError, data, "insufficient_data")
MIXMED_DEFINE_ERROR(DegenerateColumnError, data, "degenerate_column")
MIXMED_DEFINE_ERROR(CollinearityError, data, "collinearity")
MIXMED_DEFINE_ERROR(ConvergenceError, numerical, "convergence_error")
MIXMED_DEFINE_ERROR(NumericalError, numerical, "numerical_error")

#undef MIXMED_DEFINE_ERROR

} // namespace mixmed
