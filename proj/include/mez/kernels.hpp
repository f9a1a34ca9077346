#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mez/frame.hpp"

// Pixel kernels behind the quality knobs. `serial` is the straightforward
// reference kept for testing; `omp` is what the knob pipeline runs. Both
// produce bit-identical output for the same input.
namespace mez::kernels {

struct ImageView {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::span<const std::uint8_t> data;
};

/// Converts one BGR pixel into `target` (gray writes one byte, others three).
void convert_pixel(Colorspace target, std::uint8_t b, std::uint8_t g, std::uint8_t r, std::uint8_t* out);

namespace serial {

std::vector<std::uint8_t> resize_bilinear(const ImageView& src, int out_w, int out_h);
std::vector<std::uint8_t> convert_from_bgr(const ImageView& src, Colorspace target);
// Direct k*k window sum per pixel.
std::vector<std::uint8_t> box_blur(const ImageView& src, int k);
std::uint64_t abs_diff_sum(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b);

}  // namespace serial

namespace omp {

std::vector<std::uint8_t> resize_bilinear(const ImageView& src, int out_w, int out_h);
std::vector<std::uint8_t> convert_from_bgr(const ImageView& src, Colorspace target);
// Separable running sums: vertical pass into column sums, then horizontal sliding window.
std::vector<std::uint8_t> box_blur(const ImageView& src, int k);
std::uint64_t abs_diff_sum(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b);

}  // namespace omp

}  // namespace mez::kernels
