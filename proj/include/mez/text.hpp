#pragma once

#include <charconv>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mez/status.hpp"

namespace mez::text {

std::vector<std::string_view> split(std::string_view s, char sep);
std::string_view trim(std::string_view s);

/// Whole-token parse; nullopt on trailing junk.
std::optional<double> to_double(std::string_view s);
std::optional<long long> to_int(std::string_view s);

/// Shortest round-trip representation.
std::string fmt_double(double v);

Result<std::string> read_file(const std::filesystem::path& p);
Status write_file(const std::filesystem::path& p, std::string_view contents);

}  // namespace mez::text
