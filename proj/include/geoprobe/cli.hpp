#pragma once

#include <iosfwd>

namespace geoprobe::cli {

/// Runs one geoprobe command line. Returns 0 on success, 1 when a module fails (a JSON
/// object with "error" and "message" goes to err), 2 on a usage error.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Serves the synthetic backend over the wire protocol on in/out.
int run_synthetic_server(int argc, const char* const* argv, std::istream& in, std::ostream& out, std::ostream& err);

}  // namespace geoprobe::cli
