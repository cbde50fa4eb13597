#include "trajtrack/text_format.hpp"

#include <charconv>
#include <cmath>

#include "trajtrack/errors.hpp"

namespace trajtrack {

std::string format_number(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

double parse_number(std::string_view text) {
  double value = 0.0;
  const auto* first = text.data();
  const auto* last = text.data() + text.size();
  if (first != last && *first == '+') ++first;
  const auto res = std::from_chars(first, last, value);
  if (res.ec != std::errc{} || res.ptr != last) {
    throw InvalidInput("not a number: '" + std::string(text) + "'");
  }
  return value;
}

}  // namespace trajtrack
