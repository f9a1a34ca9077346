#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "mez/frame.hpp"

namespace mez {

using EncryptionKey = std::array<std::uint8_t, 32>;

// Segment file:
//   "MEZSEG01" u32 count frames... u32 crc32(everything after the magic)
// Encrypted variant:
//   "MEZSEGE1" nonce[24] aead(u32 count frames...) u32 crc32(everything after the magic)
inline constexpr char kSegmentMagic[8] = {'M', 'E', 'Z', 'S', 'E', 'G', '0', '1'};
inline constexpr char kSegmentMagicEncrypted[8] = {'M', 'E', 'Z', 'S', 'E', 'G', 'E', '1'};

/// Plain segment body: u32 count followed by serialized frames.
std::vector<std::uint8_t> segment_body(std::span<const FramePtr> frames);

/// CRC32 of the plain body, computed without building it.
std::uint32_t segment_body_crc(std::span<const FramePtr> frames);

std::vector<std::uint8_t> encode_segment_file(std::span<const FramePtr> frames,
                                              const std::optional<EncryptionKey>& key = std::nullopt);

struct DecodedSegment {
    std::vector<FramePtr> frames;
    std::uint32_t body_crc = 0;
};

/// Fails with Errc::corrupt on bad magic, CRC mismatch, truncation or decrypt failure.
Result<DecodedSegment> decode_segment_file(std::span<const std::uint8_t> bytes,
                                           const std::optional<EncryptionKey>& key = std::nullopt);

EncryptionKey random_encryption_key();

}  // namespace mez
