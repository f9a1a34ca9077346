#include "mez/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <iterator>
#include <string>

namespace mez {

namespace fs = std::filesystem;

namespace {

// Reads one header integer, skipping whitespace and '#' comments.
bool header_int(std::span<const std::uint8_t> b, std::size_t& pos, int& out)
{
    for (;;) {
        while (pos < b.size() && std::isspace(b[pos]))
            ++pos;
        if (pos < b.size() && b[pos] == '#') {
            while (pos < b.size() && b[pos] != '\n')
                ++pos;
            continue;
        }
        break;
    }
    long v = 0;
    const std::size_t start = pos;
    while (pos < b.size() && std::isdigit(b[pos]) && pos - start < 9)
        v = v * 10 + (b[pos++] - '0');
    if (pos == start)
        return false;
    out = static_cast<int>(v);
    return true;
}

}  // namespace

Result<Frame> decode_pnm(std::span<const std::uint8_t> b, Timestamp ts, const CameraId& camera)
{
    if (b.size() < 2 || b[0] != 'P' || (b[1] != '6' && b[1] != '5'))
        return make_error(Errc::parse_error, "not a binary PPM/PGM");
    const bool color = b[1] == '6';
    std::size_t pos = 2;
    int w = 0, h = 0, maxval = 0;
    if (!header_int(b, pos, w) || !header_int(b, pos, h) || !header_int(b, pos, maxval))
        return make_error(Errc::parse_error, "bad PNM header");
    if (maxval != 255)
        return make_error(Errc::parse_error, "only maxval 255 is supported");
    if (pos >= b.size() || !std::isspace(b[pos]))
        return make_error(Errc::parse_error, "bad PNM header");
    ++pos;
    const int c = color ? 3 : 1;
    const std::size_t n = static_cast<std::size_t>(w) * h * c;
    if (w <= 0 || h <= 0 || b.size() - pos < n)
        return make_error(Errc::parse_error, "PNM payload truncated");
    std::vector<std::uint8_t> px(b.begin() + static_cast<std::ptrdiff_t>(pos),
                                 b.begin() + static_cast<std::ptrdiff_t>(pos + n));
    if (color)
        for (std::size_t i = 0; i < n; i += 3)
            std::swap(px[i], px[i + 2]);
    return Frame::make(ts, w, h, color ? Colorspace::bgr : Colorspace::gray, std::move(px), camera);
}

Result<Frame> read_pnm(const fs::path& path, Timestamp ts, const CameraId& camera)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        return make_error(Errc::io_error, "cannot open " + path.string());
    const std::vector<std::uint8_t> bytes(std::istreambuf_iterator<char>(in), {});
    auto f = decode_pnm(bytes, ts, camera);
    if (!f)
        return make_error(f.code(), path.string() + ": " + f.error().message);
    return f;
}

std::vector<std::uint8_t> encode_pnm(const Frame& f)
{
    const bool gray = f.colorspace() == Colorspace::gray;
    const std::string header =
        std::string(gray ? "P5" : "P6") + "\n" + std::to_string(f.width()) + " " + std::to_string(f.height()) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    const std::size_t at = out.size();
    out.insert(out.end(), f.pixels().begin(), f.pixels().end());
    if (f.colorspace() == Colorspace::bgr)
        for (std::size_t i = at; i + 2 < out.size(); i += 3)
            std::swap(out[i], out[i + 2]);
    return out;
}

Status write_pnm(const Frame& f, const fs::path& path)
{
    const auto bytes = encode_pnm(f);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out)
        return make_error(Errc::io_error, "cannot write " + path.string());
    return {};
}

std::vector<fs::path> list_images(const fs::path& dir)
{
    std::vector<fs::path> out;
    std::error_code ec;
    for (const auto& de : fs::directory_iterator(dir, ec)) {
        const auto ext = de.path().extension();
        if (de.is_regular_file() && (ext == ".ppm" || ext == ".pgm" || ext == ".pnm"))
            out.push_back(de.path());
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace mez
