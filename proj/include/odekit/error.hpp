#pragma once

#include <stdexcept>
#include <string>

namespace odekit {

/// Base of every error raised by the library. `kind()` is a stable,
/// machine-readable class name that the CLI echoes on failure.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(message), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& message, std::size_t position)
      : Error("ParseError", message + " at position " + std::to_string(position)),
        position_(position) {}
  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

class UnknownSymbolError : public Error {
 public:
  explicit UnknownSymbolError(const std::string& name)
      : Error("UnknownSymbol", "unknown symbol '" + name + "'"), name_(name) {}
  const std::string& name() const noexcept { return name_; }

 private:
  std::string name_;
};

class DomainError : public Error {
 public:
  explicit DomainError(const std::string& message) : Error("DomainError", message) {}
};

class ModelError : public Error {
 public:
  explicit ModelError(const std::string& message) : Error("ModelError", message) {}
};

class IntegrationError : public Error {
 public:
  explicit IntegrationError(const std::string& message) : Error("IntegrationError", message) {}
};

class SimulationError : public Error {
 public:
  explicit SimulationError(const std::string& message) : Error("SimulationError", message) {}
};

class EstimationError : public Error {
 public:
  explicit EstimationError(const std::string& message) : Error("EstimationError", message) {}
};

class AnalysisError : public Error {
 public:
  explicit AnalysisError(const std::string& message) : Error("AnalysisError", message) {}
};

class SchemaError : public Error {
 public:
  explicit SchemaError(const std::string& message) : Error("SchemaError", message) {}
};

}  // namespace odekit
