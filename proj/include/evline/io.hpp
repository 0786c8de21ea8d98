#pragma once

#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "evline/common.hpp"

namespace evline {

/// Shortest decimal text that parses back to the same double.
std::string fmt_double(double v);

double parse_double(std::string_view s);
long long parse_int(std::string_view s);

std::string_view trim(std::string_view s);
bool is_blank_or_comment(std::string_view line);

/// Flat `key = value` file. Section headers `[name]` prefix the following
/// keys as `name.key`. `#` starts a comment line.
std::map<std::string, std::string> read_key_values(const std::string& path);
std::map<std::string, std::string> parse_key_values(std::string_view text);

/// ASCII PLY with vertices only.
void write_point_ply(const std::string& path, std::span<const Vec3> points);
std::vector<Vec3> read_point_ply(const std::string& path);

}  // namespace evline
