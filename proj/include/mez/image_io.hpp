#pragma once

#include <filesystem>
#include <vector>

#include "mez/frame.hpp"

namespace mez {

/// Binary PPM (P6, RGB on disk, BGR in memory) or PGM (P5, gray).
Result<Frame> read_pnm(const std::filesystem::path& path, Timestamp ts, const CameraId& camera);
Result<Frame> decode_pnm(std::span<const std::uint8_t> bytes, Timestamp ts, const CameraId& camera);

/// BGR as P6, gray as P5; other colorspaces are written as P6 with channels in stored order.
Status write_pnm(const Frame& f, const std::filesystem::path& path);
std::vector<std::uint8_t> encode_pnm(const Frame& f);

/// .ppm/.pgm/.pnm files in a directory, sorted by name.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir);

}  // namespace mez
