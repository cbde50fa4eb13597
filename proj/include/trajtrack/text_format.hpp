#pragma once

#include <string>
#include <string_view>

namespace trajtrack {

/// Shortest decimal text that parses back to exactly `value`.
std::string format_number(double value);

/// Parses a complete decimal token; throws InvalidInput on trailing junk.
double parse_number(std::string_view text);

}  // namespace trajtrack
