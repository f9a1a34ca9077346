#include "mez/segment_file.hpp"

#include <sodium.h>
#include <zlib.h>

#include <algorithm>
#include <stdexcept>

#include "mez/bytes.hpp"

namespace mez {

namespace {

void init_sodium()
{
    static const int rc = sodium_init();
    if (rc < 0)
        throw std::runtime_error("libsodium initialization failed");
}

std::uint32_t crc_of(std::span<const std::uint8_t> data)
{
    return static_cast<std::uint32_t>(::crc32(0L, data.data(), static_cast<uInt>(data.size())));
}

std::array<std::uint8_t, 4> le32(std::uint32_t v)
{
    return {static_cast<std::uint8_t>(v), static_cast<std::uint8_t>(v >> 8), static_cast<std::uint8_t>(v >> 16),
            static_cast<std::uint8_t>(v >> 24)};
}

}  // namespace

std::vector<std::uint8_t> segment_body(std::span<const FramePtr> frames)
{
    std::size_t total = 4;
    for (const auto& f : frames)
        total += serialized_size(*f);
    std::vector<std::uint8_t> body;
    body.reserve(total);
    const auto count = le32(static_cast<std::uint32_t>(frames.size()));
    body.insert(body.end(), count.begin(), count.end());
    for (const auto& f : frames)
        serialize_frame_into(*f, body);
    return body;
}

std::uint32_t segment_body_crc(std::span<const FramePtr> frames)
{
    const auto count = le32(static_cast<std::uint32_t>(frames.size()));
    auto crc = static_cast<std::uint32_t>(::crc32(0L, count.data(), 4));
    for (const auto& f : frames)
        crc = frame_crc32(crc, *f);
    return crc;
}

std::vector<std::uint8_t> encode_segment_file(std::span<const FramePtr> frames, const std::optional<EncryptionKey>& key)
{
    std::vector<std::uint8_t> body = segment_body(frames);
    std::vector<std::uint8_t> out;
    if (!key) {
        out.reserve(8 + body.size() + 4);
        out.insert(out.end(), std::begin(kSegmentMagic), std::end(kSegmentMagic));
        out.insert(out.end(), body.begin(), body.end());
    } else {
        init_sodium();
        std::array<std::uint8_t, crypto_aead_xchacha20poly1305_ietf_NPUBBYTES> nonce;
        randombytes_buf(nonce.data(), nonce.size());
        std::vector<std::uint8_t> cipher(body.size() + crypto_aead_xchacha20poly1305_ietf_ABYTES);
        unsigned long long clen = 0;
        crypto_aead_xchacha20poly1305_ietf_encrypt(cipher.data(), &clen, body.data(), body.size(),
                                                   reinterpret_cast<const unsigned char*>(kSegmentMagicEncrypted), 8,
                                                   nullptr, nonce.data(), key->data());
        cipher.resize(clen);
        out.reserve(8 + nonce.size() + cipher.size() + 4);
        out.insert(out.end(), std::begin(kSegmentMagicEncrypted), std::end(kSegmentMagicEncrypted));
        out.insert(out.end(), nonce.begin(), nonce.end());
        out.insert(out.end(), cipher.begin(), cipher.end());
    }
    const auto trailer = le32(crc_of(std::span(out).subspan(8)));
    out.insert(out.end(), trailer.begin(), trailer.end());
    return out;
}

Result<DecodedSegment> decode_segment_file(std::span<const std::uint8_t> bytes, const std::optional<EncryptionKey>& key)
{
    if (bytes.size() < 8 + 4 + 4)
        return make_error(Errc::corrupt, "segment file truncated");
    const bool plain = std::equal(std::begin(kSegmentMagic), std::end(kSegmentMagic), bytes.begin());
    const bool sealed = std::equal(std::begin(kSegmentMagicEncrypted), std::end(kSegmentMagicEncrypted), bytes.begin());
    if (!plain && !sealed)
        return make_error(Errc::corrupt, "bad segment magic");

    const auto covered = bytes.subspan(8, bytes.size() - 12);
    ByteReader trailer(bytes.subspan(bytes.size() - 4));
    if (crc_of(covered) != trailer.u32())
        return make_error(Errc::corrupt, "segment crc mismatch");

    std::vector<std::uint8_t> decrypted;
    std::span<const std::uint8_t> body = covered;
    if (sealed) {
        if (!key)
            return make_error(Errc::corrupt, "encrypted segment but no key configured");
        init_sodium();
        constexpr std::size_t nlen = crypto_aead_xchacha20poly1305_ietf_NPUBBYTES;
        if (covered.size() < nlen + crypto_aead_xchacha20poly1305_ietf_ABYTES)
            return make_error(Errc::corrupt, "encrypted segment truncated");
        const auto nonce = covered.subspan(0, nlen);
        const auto cipher = covered.subspan(nlen);
        decrypted.resize(cipher.size());
        unsigned long long mlen = 0;
        if (crypto_aead_xchacha20poly1305_ietf_decrypt(decrypted.data(), &mlen, nullptr, cipher.data(), cipher.size(),
                                                       reinterpret_cast<const unsigned char*>(kSegmentMagicEncrypted),
                                                       8, nonce.data(), key->data()) != 0)
            return make_error(Errc::corrupt, "segment authentication failed");
        decrypted.resize(mlen);
        body = decrypted;
    }

    ByteReader r(body);
    const std::uint32_t count = r.u32();
    if (r.failed())
        return make_error(Errc::corrupt, "segment body truncated");
    DecodedSegment out;
    out.body_crc = crc_of(body);
    out.frames.reserve(count);
    std::size_t pos = 4;
    for (std::uint32_t i = 0; i < count; ++i) {
        std::size_t used = 0;
        auto f = deserialize_frame(body.subspan(pos), &used);
        if (!f)
            return make_error(Errc::corrupt, "frame " + std::to_string(i) + ": " + f.error().message);
        out.frames.push_back(std::make_shared<const Frame>(std::move(f).value()));
        pos += used;
    }
    if (pos != body.size())
        return make_error(Errc::corrupt, "trailing bytes in segment body");
    return out;
}

EncryptionKey random_encryption_key()
{
    init_sodium();
    EncryptionKey k;
    crypto_aead_xchacha20poly1305_ietf_keygen(k.data());
    return k;
}

}  // namespace mez
