#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "omd/common.hpp"

namespace omd {

// H x W x 3 image, channels interleaved, float values in [0, 1].
class Image {
public:
    Image() = default;
    Image(int height, int width)
        : height_(height), width_(width),
          px_(static_cast<std::size_t>(height) * width * 3, 0.0) {}

    int height() const { return height_; }
    int width() const { return width_; }

    double& at(int y, int x, int c) {
        return px_[(static_cast<std::size_t>(y) * width_ + x) * 3 + c];
    }
    double at(int y, int x, int c) const {
        return px_[(static_cast<std::size_t>(y) * width_ + x) * 3 + c];
    }

    const std::vector<double>& pixels() const { return px_; }
    std::vector<double>& pixels() { return px_; }

    void set_rgb(int y, int x, double r, double g, double b) {
        at(y, x, 0) = r;
        at(y, x, 1) = g;
        at(y, x, 2) = b;
    }

    // Quantized 8-bit bytes, row-major RGB; the on-disk / on-wire form.
    std::vector<std::uint8_t> to_rgb8() const;
    static Image from_rgb8(const std::uint8_t* data, int height, int width);

private:
    int height_ = 0;
    int width_ = 0;
    std::vector<double> px_;
};

void write_png(const Image& img, const std::string& path);
Image read_png(const std::string& path);

// Raw-frame stream header. Little-endian fields, written in the order below;
// 18 bytes total, followed by consecutive row-major RGB frames at 8 bits per
// channel.
struct RawStreamHeader {
    static constexpr char kMagic[4] = {'M', 'S', 'N', 'T'};
    std::uint16_t width = 0;
    std::uint16_t height = 0;
    std::uint8_t channels = 3;
    std::uint8_t reserved8 = 0;
    float fps = 1.0f;
    std::uint32_t reserved32 = 0;

    static constexpr std::size_t kSize = 18;
};

void write_raw_stream_header(std::ostream& out, const RawStreamHeader& h);
// Throws ParseError on bad magic or unsupported channel count.
RawStreamHeader read_raw_stream_header(std::istream& in);

void write_raw_frame(std::ostream& out, const Image& img);
// Returns false on clean EOF before the first byte of a frame.
bool read_raw_frame(std::istream& in, int height, int width, Image& out);

}  // namespace omd
