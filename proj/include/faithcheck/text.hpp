#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace faithcheck::text {

std::string lower(std::string_view s);
std::string trim(std::string_view s);
// Lowercase, trim, and collapse internal whitespace runs to one space.
std::string fold(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);
bool contains_word(std::string_view haystack, std::string_view word);  // case-insensitive, word boundaries
bool starts_with_ci(std::string_view s, std::string_view prefix);
std::string join(const std::vector<std::string>& parts, std::string_view sep);
std::string replace_all(std::string s, std::string_view from, std::string_view to);
// Fixed-point decimal, e.g. format_fixed(0.5, 3) == "0.500".
std::string format_fixed(double value, int decimals);
// Shortest round-trip representation of a double.
std::string format_double(double value);
std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view content);

}  // namespace faithcheck::text
