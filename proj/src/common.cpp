#include "dtr/common.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <system_error>

namespace dtr {

std::string to_hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return std::string(buf);
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& cell, bool* ok) {
  if (cell.empty()) {
    if (ok) *ok = false;
    return 0.0;
  }
  double value = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  auto res = std::from_chars(first, last, value);
  bool good = res.ec == std::errc() && res.ptr == last;
  if (ok) *ok = good;
  return value;
}

std::string format_int(long long v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace dtr
