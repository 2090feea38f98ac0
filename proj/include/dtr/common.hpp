#pragma once

#include <stdexcept>
#include <string>

namespace dtr {

inline constexpr const char* kToolName = "dtr";
inline constexpr const char* kToolVersion = "0.1.0";

// All module failures surface as dtr::Error with the originating module name
// so the CLI can report "module: message" and map to exit code 1.
class Error : public std::runtime_error {
 public:
  Error(std::string module, const std::string& message)
      : std::runtime_error(module + ": " + message), module_(std::move(module)) {}

  const std::string& module() const { return module_; }

 private:
  std::string module_;
};

// FNV-1a, used for schema and config fingerprints in output files.
inline std::uint64_t fnv1a(const std::string& text, std::uint64_t h = 1469598103934665603ULL) {
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string to_hex(std::uint64_t v);

// Shortest round-trip decimal formatting (and strict parsing) for doubles.
// Every float written to CSV or JSON-adjacent text goes through these.
std::string format_double(double v);
double parse_double(const std::string& cell, bool* ok);
std::string format_int(long long v);

}  // namespace dtr
