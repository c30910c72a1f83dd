#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace flownet {

/// Base of every error raised by the library.
class Error : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

/// Input files and tables that cannot be turned into a valid ensemble.
class InputError : public Error
{
public:
  using Error::Error;
};

class MalformedInputError : public InputError
{
public:
  MalformedInputError(std::size_t line, const std::string& what)
    : InputError("line " + std::to_string(line) + ": " + what)
    , line_(line)
  {
  }
  std::size_t line() const noexcept { return line_; }

private:
  std::size_t line_;
};

class IncompleteGridError : public InputError
{
public:
  using InputError::InputError;
};

class FormatError : public InputError
{
public:
  using InputError::InputError;
};

class LengthMismatchError : public InputError
{
public:
  using InputError::InputError;
};

class ShapeError : public InputError
{
public:
  using InputError::InputError;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error
{
public:
  using Error::Error;
};

/// Failures of numerical procedures on otherwise valid input.
class NumericalError : public Error
{
public:
  using Error::Error;
};

class BlowUpError : public NumericalError
{
public:
  explicit BlowUpError(double time)
    : NumericalError("non-finite state at t=" + std::to_string(time))
    , time_(time)
  {
  }
  double time() const noexcept { return time_; }

private:
  double time_;
};

class DegenerateMatrixError : public NumericalError
{
public:
  using NumericalError::NumericalError;
};

class DegenerateColumnError : public NumericalError
{
public:
  using NumericalError::NumericalError;
};

class ConnectivityError : public NumericalError
{
public:
  explicit ConnectivityError(std::size_t components)
    : NumericalError("graph is disconnected (" + std::to_string(components) +
                     " components)")
    , components_(components)
  {
  }
  std::size_t components() const noexcept { return components_; }

private:
  std::size_t components_;
};

} // namespace flownet
