#pragma once

#include <stdexcept>
#include <string>

namespace conebeam {

/// Base class for all library errors. The C API maps each subclass to a
/// status code; the CLI maps status codes to exit codes.
class error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Invalid arguments or configuration (bad field values, unknown ids, ...).
class validation_error : public error {
  public:
    using error::error;
};

/// Failure to open, read, or write a file.
class io_error : public error {
  public:
    using error::error;
};

/// A file exists and is readable but is not in the expected format
/// (bad magic, unsupported version, trailing bytes).
class format_error : public error {
  public:
    using error::error;
};

/// A file's payload is shorter than its header promises.
class truncated_error : public format_error {
  public:
    using format_error::format_error;
};

/// Degenerate projection geometry (w == 0 rays, mismatched volumes, ...).
class geometry_error : public error {
  public:
    using error::error;
};

} // namespace conebeam
