#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace paraspace::node {

/// 8-bit grayscale raster, row-major, 0 = black.
struct GrayImage {
    std::uint32_t width = 0;
    std::uint32_t height = 0;
    std::vector<std::uint8_t> pixels;

    GrayImage(std::uint32_t w, std::uint32_t h, std::uint8_t fill = 255)
        : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {}

    void set(long x, long y, std::uint8_t value) {
        if (x >= 0 && y >= 0 && x < static_cast<long>(width) && y < static_cast<long>(height)) {
            pixels[static_cast<std::size_t>(y) * width + static_cast<std::size_t>(x)] = value;
        }
    }
    void line(long x0, long y0, long x1, long y1, std::uint8_t value);
};

std::string encode_png(const GrayImage& image);

struct PngInfo {
    std::uint32_t width;
    std::uint32_t height;
};

/// Validates the signature and IHDR chunk (including its CRC).
std::optional<PngInfo> png_info(std::string_view bytes);

} // namespace paraspace::node
