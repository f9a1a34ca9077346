#include "mez/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>

namespace mez::kernels {

namespace {

std::uint8_t clamp_u8(double v)
{
    return static_cast<std::uint8_t>(std::clamp<long>(std::lround(v), 0, 255));
}

double srgb_to_linear(double c)
{
    return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

struct Xyz {
    double x, y, z;
};

Xyz bgr_to_xyz(std::uint8_t b8, std::uint8_t g8, std::uint8_t r8)
{
    const double r = srgb_to_linear(r8 / 255.0);
    const double g = srgb_to_linear(g8 / 255.0);
    const double b = srgb_to_linear(b8 / 255.0);
    return {0.412453 * r + 0.357580 * g + 0.180423 * b,
            0.212671 * r + 0.715160 * g + 0.072169 * b,
            0.019334 * r + 0.119193 * g + 0.950227 * b};
}

double lightness(double y)
{
    return y > 0.008856 ? 116.0 * std::cbrt(y) - 16.0 : 903.3 * y;
}

double lab_f(double t)
{
    return t > 0.008856 ? std::cbrt(t) : 7.787 * t + 16.0 / 116.0;
}

// Source coordinate table for one axis of a bilinear resample (pixel centers aligned).
struct Tap {
    int i0, i1;
    double frac;
};

Tap bilinear_tap(int dst, int src_len, int dst_len)
{
    double s = (dst + 0.5) * (static_cast<double>(src_len) / dst_len) - 0.5;
    if (s < 0)
        s = 0;
    int i0 = static_cast<int>(s);
    if (i0 >= src_len - 1)
        return {src_len - 1, src_len - 1, 0.0};
    return {i0, i0 + 1, s - i0};
}

std::uint8_t bilinear_sample(const ImageView& src, const Tap& tx, const Tap& ty, int ch)
{
    const int c = src.channels;
    const auto at = [&](int x, int y) {
        return static_cast<double>(src.data[(static_cast<std::size_t>(y) * src.width + x) * c + ch]);
    };
    const double top = at(tx.i0, ty.i0) * (1.0 - tx.frac) + at(tx.i1, ty.i0) * tx.frac;
    const double bot = at(tx.i0, ty.i1) * (1.0 - tx.frac) + at(tx.i1, ty.i1) * tx.frac;
    const double v = top * (1.0 - ty.frac) + bot * ty.frac;
    return static_cast<std::uint8_t>(std::min(255.0, v + 0.5));
}

int clampi(int v, int lo, int hi)
{
    return v < lo ? lo : (v > hi ? hi : v);
}

}  // namespace

void convert_pixel(Colorspace target, std::uint8_t b, std::uint8_t g, std::uint8_t r, std::uint8_t* out)
{
    switch (target) {
    case Colorspace::bgr:
        out[0] = b;
        out[1] = g;
        out[2] = r;
        return;
    case Colorspace::gray:
        out[0] = clamp_u8(0.114 * b + 0.587 * g + 0.299 * r);
        return;
    case Colorspace::hsv: {
        const int v = std::max({b, g, r});
        const int mn = std::min({b, g, r});
        const int diff = v - mn;
        const double s = v == 0 ? 0.0 : 255.0 * diff / v;
        double h = 0.0;
        if (diff != 0) {
            if (v == r)
                h = 60.0 * (g - b) / diff;
            else if (v == g)
                h = 120.0 + 60.0 * (b - r) / diff;
            else
                h = 240.0 + 60.0 * (r - g) / diff;
            if (h < 0)
                h += 360.0;
        }
        long h8 = std::lround(h / 2.0);
        if (h8 >= 180)
            h8 -= 180;
        out[0] = static_cast<std::uint8_t>(h8);
        out[1] = clamp_u8(s);
        out[2] = static_cast<std::uint8_t>(v);
        return;
    }
    case Colorspace::lab: {
        const Xyz p = bgr_to_xyz(b, g, r);
        const double fx = lab_f(p.x / 0.950456);
        const double fy = lab_f(p.y);
        const double fz = lab_f(p.z / 1.088754);
        out[0] = clamp_u8(lightness(p.y) * 255.0 / 100.0);
        out[1] = clamp_u8(500.0 * (fx - fy) + 128.0);
        out[2] = clamp_u8(200.0 * (fy - fz) + 128.0);
        return;
    }
    case Colorspace::luv: {
        constexpr double un = 0.19793943, vn = 0.46831096;
        const Xyz p = bgr_to_xyz(b, g, r);
        const double l = lightness(p.y);
        const double den = p.x + 15.0 * p.y + 3.0 * p.z;
        double u = 0.0, v = 0.0;
        if (den > 0) {
            u = 13.0 * l * (4.0 * p.x / den - un);
            v = 13.0 * l * (9.0 * p.y / den - vn);
        }
        out[0] = clamp_u8(l * 255.0 / 100.0);
        out[1] = clamp_u8((u + 134.0) * 255.0 / 354.0);
        out[2] = clamp_u8((v + 140.0) * 255.0 / 262.0);
        return;
    }
    }
}

namespace serial {

std::vector<std::uint8_t> resize_bilinear(const ImageView& src, int out_w, int out_h)
{
    const int c = src.channels;
    std::vector<std::uint8_t> out(static_cast<std::size_t>(out_w) * out_h * c);
    for (int y = 0; y < out_h; ++y) {
        const Tap ty = bilinear_tap(y, src.height, out_h);
        for (int x = 0; x < out_w; ++x) {
            const Tap tx = bilinear_tap(x, src.width, out_w);
            for (int ch = 0; ch < c; ++ch)
                out[(static_cast<std::size_t>(y) * out_w + x) * c + ch] = bilinear_sample(src, tx, ty, ch);
        }
    }
    return out;
}

std::vector<std::uint8_t> convert_from_bgr(const ImageView& src, Colorspace target)
{
    const std::size_t n = static_cast<std::size_t>(src.width) * src.height;
    const int oc = channels(target);
    std::vector<std::uint8_t> out(n * oc);
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint8_t* p = &src.data[i * 3];
        convert_pixel(target, p[0], p[1], p[2], &out[i * oc]);
    }
    return out;
}

std::vector<std::uint8_t> box_blur(const ImageView& src, int k)
{
    const int w = src.width, h = src.height, c = src.channels;
    const int lo = -(k / 2), hi = k - 1 - k / 2;
    const std::uint32_t area = static_cast<std::uint32_t>(k) * k;
    std::vector<std::uint8_t> out(src.data.size());
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int ch = 0; ch < c; ++ch) {
                std::uint32_t sum = 0;
                for (int dy = lo; dy <= hi; ++dy) {
                    const int yy = clampi(y + dy, 0, h - 1);
                    for (int dx = lo; dx <= hi; ++dx) {
                        const int xx = clampi(x + dx, 0, w - 1);
                        sum += src.data[(static_cast<std::size_t>(yy) * w + xx) * c + ch];
                    }
                }
                out[(static_cast<std::size_t>(y) * w + x) * c + ch] =
                    static_cast<std::uint8_t>((sum + area / 2) / area);
            }
        }
    }
    return out;
}

std::uint64_t abs_diff_sum(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b)
{
    std::uint64_t sum = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
        sum += static_cast<std::uint64_t>(std::abs(int(a[i]) - int(b[i])));
    return sum;
}

}  // namespace serial

namespace omp {

std::vector<std::uint8_t> resize_bilinear(const ImageView& src, int out_w, int out_h)
{
    const int c = src.channels;
    std::vector<Tap> xtaps(out_w);
    for (int x = 0; x < out_w; ++x)
        xtaps[x] = bilinear_tap(x, src.width, out_w);
    std::vector<std::uint8_t> out(static_cast<std::size_t>(out_w) * out_h * c);
#pragma omp parallel for schedule(static)
    for (int y = 0; y < out_h; ++y) {
        const Tap ty = bilinear_tap(y, src.height, out_h);
        std::uint8_t* row = &out[static_cast<std::size_t>(y) * out_w * c];
        for (int x = 0; x < out_w; ++x)
            for (int ch = 0; ch < c; ++ch)
                row[x * c + ch] = bilinear_sample(src, xtaps[x], ty, ch);
    }
    return out;
}

std::vector<std::uint8_t> convert_from_bgr(const ImageView& src, Colorspace target)
{
    const std::int64_t n = static_cast<std::int64_t>(src.width) * src.height;
    const int oc = channels(target);
    std::vector<std::uint8_t> out(static_cast<std::size_t>(n) * oc);
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) {
        const std::uint8_t* p = &src.data[static_cast<std::size_t>(i) * 3];
        convert_pixel(target, p[0], p[1], p[2], &out[static_cast<std::size_t>(i) * oc]);
    }
    return out;
}

std::vector<std::uint8_t> box_blur(const ImageView& src, int k)
{
    const int w = src.width, h = src.height, c = src.channels;
    const int lo = -(k / 2), hi = k - 1 - k / 2;
    const std::uint32_t area = static_cast<std::uint32_t>(k) * k;
    const std::size_t stride = static_cast<std::size_t>(w) * c;
    std::vector<std::uint8_t> out(src.data.size());
#pragma omp parallel
    {
        std::vector<std::uint32_t> col(stride);
#pragma omp for schedule(static)
        for (int y = 0; y < h; ++y) {
            std::fill(col.begin(), col.end(), 0u);
            for (int dy = lo; dy <= hi; ++dy) {
                const std::uint8_t* src_row = &src.data[static_cast<std::size_t>(clampi(y + dy, 0, h - 1)) * stride];
                for (std::size_t i = 0; i < stride; ++i)
                    col[i] += src_row[i];
            }
            std::uint8_t* dst = &out[static_cast<std::size_t>(y) * stride];
            for (int ch = 0; ch < c; ++ch) {
                std::uint32_t sum = 0;
                for (int dx = lo; dx <= hi; ++dx)
                    sum += col[static_cast<std::size_t>(clampi(dx, 0, w - 1)) * c + ch];
                for (int x = 0; x < w; ++x) {
                    dst[static_cast<std::size_t>(x) * c + ch] = static_cast<std::uint8_t>((sum + area / 2) / area);
                    const int add = clampi(x + hi + 1, 0, w - 1);
                    const int sub = clampi(x + lo, 0, w - 1);
                    sum += col[static_cast<std::size_t>(add) * c + ch];
                    sum -= col[static_cast<std::size_t>(sub) * c + ch];
                }
            }
        }
    }
    return out;
}

std::uint64_t abs_diff_sum(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b)
{
    const std::int64_t n = static_cast<std::int64_t>(a.size());
    std::uint64_t sum = 0;
#pragma omp parallel for reduction(+ : sum) schedule(static)
    for (std::int64_t i = 0; i < n; ++i)
        sum += static_cast<std::uint64_t>(std::abs(int(a[i]) - int(b[i])));
    return sum;
}

}  // namespace omp

}  // namespace mez::kernels
