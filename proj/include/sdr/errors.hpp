#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace sdr {

/**
 * Base class for all recoverable failures raised by the library.
 *
 * Each error carries a stable machine-readable name (e.g. "SingularMatrix")
 * in addition to the human-readable message; the CLI surfaces the name on
 * its `# error:` lines and in exit-code handling.
 */
class Error : public std::runtime_error {
 public:
  Error(std::string name, const std::string& message)
      : std::runtime_error(name + ": " + message), name_(std::move(name)) {}

  const std::string& name() const noexcept { return name_; }

 private:
  std::string name_;
};

#define SDR_DEFINE_ERROR(ClassName)                         \
  class ClassName : public Error {                          \
   public:                                                  \
    explicit ClassName(const std::string& message)          \
        : Error(#ClassName, message) {}                     \
  }

SDR_DEFINE_ERROR(InvalidInput);
SDR_DEFINE_ERROR(SingularMatrix);
SDR_DEFINE_ERROR(RankDeficient);
SDR_DEFINE_ERROR(InsufficientData);
SDR_DEFINE_ERROR(InvalidEstimates);
SDR_DEFINE_ERROR(DegenerateSlicing);
SDR_DEFINE_ERROR(DegenerateDirection);
SDR_DEFINE_ERROR(NoPairsWithinCut);
SDR_DEFINE_ERROR(InvalidDesign);
SDR_DEFINE_ERROR(SchemaError);
SDR_DEFINE_ERROR(ConfigError);

#undef SDR_DEFINE_ERROR

/// Parse failure with the 1-based line number of the offending input line.
class ParseError : public Error {
 public:
  ParseError(long line, const std::string& message)
      : Error("ParseError", "line " + std::to_string(line) + ": " + message),
        line_(line) {}

  long line() const noexcept { return line_; }

 private:
  long line_;
};

}  // namespace sdr
