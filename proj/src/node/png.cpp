#include "paraspace/node/png.hpp"

#include <cstdlib>
#include <stdexcept>

#include <zlib.h>

namespace paraspace::node {
namespace {

constexpr char kSignature[] = "\x89PNG\r\n\x1a\n";

void put_u32(std::string& out, std::uint32_t v) {
    out += static_cast<char>((v >> 24) & 0xFF);
    out += static_cast<char>((v >> 16) & 0xFF);
    out += static_cast<char>((v >> 8) & 0xFF);
    out += static_cast<char>(v & 0xFF);
}

std::uint32_t get_u32(std::string_view s, std::size_t at) {
    return (static_cast<std::uint32_t>(static_cast<unsigned char>(s[at])) << 24) |
           (static_cast<std::uint32_t>(static_cast<unsigned char>(s[at + 1])) << 16) |
           (static_cast<std::uint32_t>(static_cast<unsigned char>(s[at + 2])) << 8) |
           static_cast<std::uint32_t>(static_cast<unsigned char>(s[at + 3]));
}

void chunk(std::string& out, const char* type, const std::string& data) {
    put_u32(out, static_cast<std::uint32_t>(data.size()));
    std::string body(type, 4);
    body += data;
    out += body;
    const auto crc = ::crc32(0L, reinterpret_cast<const Bytef*>(body.data()),
                             static_cast<uInt>(body.size()));
    put_u32(out, static_cast<std::uint32_t>(crc));
}

} // namespace

void GrayImage::line(long x0, long y0, long x1, long y1, std::uint8_t value) {
    // Bresenham.
    const long dx = std::labs(x1 - x0);
    const long dy = -std::labs(y1 - y0);
    const long sx = x0 < x1 ? 1 : -1;
    const long sy = y0 < y1 ? 1 : -1;
    long err = dx + dy;
    for (;;) {
        set(x0, y0, value);
        if (x0 == x1 && y0 == y1) {
            break;
        }
        const long e2 = 2 * err;
        if (e2 >= dy) {
            err += dy;
            x0 += sx;
        }
        if (e2 <= dx) {
            err += dx;
            y0 += sy;
        }
    }
}

std::string encode_png(const GrayImage& image) {
    std::string raw;
    raw.reserve(static_cast<std::size_t>(image.height) * (image.width + 1));
    for (std::uint32_t y = 0; y < image.height; ++y) {
        raw += '\0';  // filter: none
        raw.append(reinterpret_cast<const char*>(image.pixels.data()) + static_cast<std::size_t>(y) * image.width,
                   image.width);
    }
    uLongf packed_size = compressBound(static_cast<uLong>(raw.size()));
    std::string packed(packed_size, '\0');
    if (compress2(reinterpret_cast<Bytef*>(packed.data()), &packed_size,
                  reinterpret_cast<const Bytef*>(raw.data()), static_cast<uLong>(raw.size()), 9) != Z_OK) {
        throw std::runtime_error("zlib compression failed");
    }
    packed.resize(packed_size);

    std::string header;
    put_u32(header, image.width);
    put_u32(header, image.height);
    header += '\x08';  // bit depth
    header += '\x00';  // grayscale
    header += '\x00';  // deflate
    header += '\x00';  // adaptive filtering
    header += '\x00';  // no interlace

    std::string out(kSignature, 8);
    chunk(out, "IHDR", header);
    chunk(out, "IDAT", packed);
    chunk(out, "IEND", {});
    return out;
}

std::optional<PngInfo> png_info(std::string_view bytes) {
    if (bytes.size() < 33 || bytes.substr(0, 8) != std::string_view(kSignature, 8)) {
        return std::nullopt;
    }
    if (get_u32(bytes, 8) != 13 || bytes.substr(12, 4) != "IHDR") {
        return std::nullopt;
    }
    const auto crc = ::crc32(0L, reinterpret_cast<const Bytef*>(bytes.data() + 12), 17);
    if (static_cast<std::uint32_t>(crc) != get_u32(bytes, 29)) {
        return std::nullopt;
    }
    return PngInfo{get_u32(bytes, 16), get_u32(bytes, 20)};
}

} // namespace paraspace::node
