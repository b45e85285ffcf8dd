#include "geoprobe/error.hpp"

namespace geoprobe {

std::string_view error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::invalid_coordinate: return "invalid_coordinate";
    case ErrorCode::shape: return "shape_error";
    case ErrorCode::schema: return "schema_error";
    case ErrorCode::empty_catalog: return "empty_catalog";
    case ErrorCode::invalid_city: return "invalid_city";
    case ErrorCode::too_few_samples: return "too_few_samples";
    case ErrorCode::empty_pool: return "empty_pool";
    case ErrorCode::format: return "format_error";
    case ErrorCode::corrupt_file: return "corrupt_file";
    case ErrorCode::empty_input: return "empty_input";
    case ErrorCode::diverged: return "diverged";
    case ErrorCode::label: return "label_error";
    case ErrorCode::degenerate_input: return "degenerate_input";
    case ErrorCode::missing_country: return "missing_country";
    case ErrorCode::layer: return "layer_error";
    case ErrorCode::backend: return "backend_error";
    case ErrorCode::config: return "config_error";
    case ErrorCode::probe: return "probe_error";
    case ErrorCode::report: return "report_error";
    case ErrorCode::unsupported_injection: return "unsupported_injection";
    case ErrorCode::io: return "io_error";
  }
  return "unknown";
}

std::optional<ErrorCode> parse_error_code(std::string_view name) noexcept {
  for (int i = 0; i <= static_cast<int>(ErrorCode::io); ++i) {
    const auto code = static_cast<ErrorCode>(i);
    if (error_code_name(code) == name) return code;
  }
  return std::nullopt;
}

void throw_error(ErrorCode code, const std::string& message) {
  switch (code) {
    case ErrorCode::invalid_coordinate: throw InvalidCoordinate(message);
    case ErrorCode::shape: throw ShapeError(message);
    case ErrorCode::schema: throw SchemaError(message);
    case ErrorCode::empty_catalog: throw EmptyCatalog(message);
    case ErrorCode::invalid_city: throw InvalidCity(message);
    case ErrorCode::too_few_samples: throw TooFewSamples(message);
    case ErrorCode::empty_pool: throw EmptyPool(message);
    case ErrorCode::format: throw FormatError(message);
    case ErrorCode::corrupt_file: throw CorruptFile(message);
    case ErrorCode::empty_input: throw EmptyInput(message);
    case ErrorCode::label: throw LabelError(message);
    case ErrorCode::degenerate_input: throw DegenerateInput(message);
    case ErrorCode::missing_country: throw MissingCountry(message);
    case ErrorCode::layer: throw LayerError(message);
    case ErrorCode::backend: throw BackendError(message);
    case ErrorCode::config: throw ConfigError(message);
    case ErrorCode::probe: throw ProbeError(message);
    case ErrorCode::report: throw ReportError(message);
    case ErrorCode::unsupported_injection: throw UnsupportedInjection(message);
    case ErrorCode::io: throw IoError(message);
    case ErrorCode::diverged: break;
  }
  throw Error(code, message);
}

}  // namespace geoprobe
