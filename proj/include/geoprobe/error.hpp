#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace geoprobe {

enum class ErrorCode {
  invalid_coordinate,
  shape,
  schema,
  empty_catalog,
  invalid_city,
  too_few_samples,
  empty_pool,
  format,
  corrupt_file,
  empty_input,
  diverged,
  label,
  degenerate_input,
  missing_country,
  layer,
  backend,
  config,
  probe,
  report,
  unsupported_injection,
  io,
};

/// Stable machine-readable name, used in CLI output and backend error responses.
std::string_view error_code_name(ErrorCode code) noexcept;
std::optional<ErrorCode> parse_error_code(std::string_view name) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

template <ErrorCode Code>
class CodedError : public Error {
 public:
  explicit CodedError(const std::string& message) : Error(Code, message) {}
};

using InvalidCoordinate = CodedError<ErrorCode::invalid_coordinate>;
using ShapeError = CodedError<ErrorCode::shape>;
using SchemaError = CodedError<ErrorCode::schema>;
using EmptyCatalog = CodedError<ErrorCode::empty_catalog>;
using InvalidCity = CodedError<ErrorCode::invalid_city>;
using TooFewSamples = CodedError<ErrorCode::too_few_samples>;
using EmptyPool = CodedError<ErrorCode::empty_pool>;
using FormatError = CodedError<ErrorCode::format>;
using CorruptFile = CodedError<ErrorCode::corrupt_file>;
using EmptyInput = CodedError<ErrorCode::empty_input>;
using LabelError = CodedError<ErrorCode::label>;
using DegenerateInput = CodedError<ErrorCode::degenerate_input>;
using MissingCountry = CodedError<ErrorCode::missing_country>;
using LayerError = CodedError<ErrorCode::layer>;
using BackendError = CodedError<ErrorCode::backend>;
using ConfigError = CodedError<ErrorCode::config>;
using ProbeError = CodedError<ErrorCode::probe>;
using ReportError = CodedError<ErrorCode::report>;
using UnsupportedInjection = CodedError<ErrorCode::unsupported_injection>;
using IoError = CodedError<ErrorCode::io>;

/// Throws the CodedError alias matching `code`.
[[noreturn]] void throw_error(ErrorCode code, const std::string& message);

}  // namespace geoprobe
