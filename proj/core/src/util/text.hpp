#pragma once

// Small text helpers shared by the CSV and config readers. Not installed.

#include <string>
#include <string_view>
#include <vector>

namespace emonas::util {

/// Splits on commas; no quoting. A trailing comma yields an empty last cell.
std::vector<std::string> split_csv(std::string_view line);

/// Removes a trailing '\r' and surrounding blanks.
std::string_view trim(std::string_view s);

/// Shortest round-trip decimal form.
std::string format_real(double v);

/// Throws FormatError naming `context` unless the whole string is a finite
/// number.
double parse_real(std::string_view s, const std::string& context);

}  // namespace emonas::util
