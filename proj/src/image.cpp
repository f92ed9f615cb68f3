#include "omd/image.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <istream>
#include <memory>
#include <ostream>

namespace omd {

std::vector<std::uint8_t> Image::to_rgb8() const {
    std::vector<std::uint8_t> out(px_.size());
    for (std::size_t i = 0; i < px_.size(); ++i) {
        double v = px_[i];
        if (v < 0.0) v = 0.0;
        if (v > 1.0) v = 1.0;
        out[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
    return out;
}

Image Image::from_rgb8(const std::uint8_t* data, int height, int width) {
    Image img(height, width);
    const std::size_t n = static_cast<std::size_t>(height) * width * 3;
    for (std::size_t i = 0; i < n; ++i) img.px_[i] = data[i] / 255.0;
    return img;
}

namespace {
struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;
}  // namespace

void write_png(const Image& img, const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw ValidationError("cannot open for writing: " + path);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw std::runtime_error("png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw std::runtime_error("png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("libpng error while writing " + path);
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, img.width(), img.height(), 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    // Pin compression settings so identical pixels give identical files.
    png_set_compression_level(png, 6);
    png_set_filter(png, 0, PNG_FILTER_NONE);
    png_write_info(png, info);

    std::vector<std::uint8_t> bytes = img.to_rgb8();
    std::vector<png_bytep> rows(img.height());
    for (int y = 0; y < img.height(); ++y)
        rows[y] = bytes.data() + static_cast<std::size_t>(y) * img.width() * 3;
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

Image read_png(const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw ValidationError("cannot open: " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw std::runtime_error("png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw std::runtime_error("png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw ParseError("libpng error while reading " + path);
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);

    // Normalize everything to 8-bit RGB.
    png_set_expand(png);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    if (png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY ||
        png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY_ALPHA)
        png_set_gray_to_rgb(png);
    png_read_update_info(png, info);

    const int width = static_cast<int>(png_get_image_width(png, info));
    const int height = static_cast<int>(png_get_image_height(png, info));
    std::vector<std::uint8_t> bytes(static_cast<std::size_t>(height) * width * 3);
    std::vector<png_bytep> rows(height);
    for (int y = 0; y < height; ++y)
        rows[y] = bytes.data() + static_cast<std::size_t>(y) * width * 3;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    return Image::from_rgb8(bytes.data(), height, width);
}

namespace {
void put_u16le(std::uint8_t* p, std::uint16_t v) {
    p[0] = static_cast<std::uint8_t>(v & 0xff);
    p[1] = static_cast<std::uint8_t>(v >> 8);
}
std::uint16_t get_u16le(const std::uint8_t* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
void put_u32le(std::uint8_t* p, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) p[i] = static_cast<std::uint8_t>((v >> (8 * i)) & 0xff);
}
std::uint32_t get_u32le(const std::uint8_t* p) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    return v;
}
}  // namespace

void write_raw_stream_header(std::ostream& out, const RawStreamHeader& h) {
    std::uint8_t buf[RawStreamHeader::kSize];
    std::memcpy(buf, RawStreamHeader::kMagic, 4);
    put_u16le(buf + 4, h.width);
    put_u16le(buf + 6, h.height);
    buf[8] = h.channels;
    buf[9] = h.reserved8;
    std::uint32_t fps_bits;
    std::memcpy(&fps_bits, &h.fps, 4);
    put_u32le(buf + 10, fps_bits);
    put_u32le(buf + 14, h.reserved32);
    out.write(reinterpret_cast<const char*>(buf), RawStreamHeader::kSize);
}

RawStreamHeader read_raw_stream_header(std::istream& in) {
    std::uint8_t buf[RawStreamHeader::kSize];
    in.read(reinterpret_cast<char*>(buf), RawStreamHeader::kSize);
    if (in.gcount() != static_cast<std::streamsize>(RawStreamHeader::kSize))
        throw ParseError("raw stream: truncated header (expected 18 bytes)");
    if (std::memcmp(buf, RawStreamHeader::kMagic, 4) != 0)
        throw ParseError("raw stream: bad magic (expected \"MSNT\")");
    RawStreamHeader h;
    h.width = get_u16le(buf + 4);
    h.height = get_u16le(buf + 6);
    h.channels = buf[8];
    h.reserved8 = buf[9];
    std::uint32_t fps_bits = get_u32le(buf + 10);
    std::memcpy(&h.fps, &fps_bits, 4);
    h.reserved32 = get_u32le(buf + 14);
    if (h.channels != 3)
        throw ParseError("raw stream: unsupported channel count " +
                         std::to_string(static_cast<int>(h.channels)));
    if (h.width == 0 || h.height == 0) throw ParseError("raw stream: zero frame dimensions");
    if (!(h.fps > 0.0f)) throw ParseError("raw stream: fps must be positive");
    return h;
}

void write_raw_frame(std::ostream& out, const Image& img) {
    std::vector<std::uint8_t> bytes = img.to_rgb8();
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
}

bool read_raw_frame(std::istream& in, int height, int width, Image& out) {
    const std::size_t n = static_cast<std::size_t>(height) * width * 3;
    std::vector<std::uint8_t> bytes(n);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(n));
    const auto got = static_cast<std::size_t>(in.gcount());
    if (got == 0) return false;
    if (got != n)
        throw ParseError("raw stream: truncated frame (" + std::to_string(got) + " of " +
                         std::to_string(n) + " bytes)");
    out = Image::from_rgb8(bytes.data(), height, width);
    return true;
}

}  // namespace omd
