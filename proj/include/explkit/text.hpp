#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace explkit::text {

std::string_view trim(std::string_view s);

// ASCII lowercase; bytes >= 0x80 pass through untouched.
std::string to_lower(std::string_view s);

bool iequals(std::string_view a, std::string_view b);

std::vector<std::string> split_whitespace(std::string_view s);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

bool starts_with_icase(std::string_view s, std::string_view prefix);

}  // namespace explkit::text
