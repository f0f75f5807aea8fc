#pragma once

#include <stdexcept>
#include <string>

namespace edgeray {

// Configuration/parse failures map to CLI exit code 2, numerical failures to 3.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class ParseError : public ConfigError {
public:
    ParseError(const std::string& msg, int line, int column)
        : ConfigError(msg + " at line " + std::to_string(line) + ", column " +
                      std::to_string(column)),
          line_(line),
          column_(column) {}

    int line() const noexcept { return line_; }
    int column() const noexcept { return column_; }

private:
    int line_;
    int column_;
};

class InvalidInput : public Error {
public:
    using Error::Error;
};

class NumericalError : public Error {
public:
    using Error::Error;
};

class DegenerateMetric : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class IntegrationDiverged : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class LaunchFailed : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class FlowEscaped : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class ChartExit : public NumericalError {
public:
    using NumericalError::NumericalError;
};

// Tangential (xi = 0) boundary data where a hyperbolic construction was requested.
class GlancingPoint : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class IllConditionedEvent : public NumericalError {
public:
    using NumericalError::NumericalError;
};

}  // namespace edgeray
