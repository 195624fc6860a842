#ifndef SEXPLAIN_IMAGE_HPP
#define SEXPLAIN_IMAGE_HPP

#include "sexplain/data.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace sexplain {

struct ImageU8 {
    int w = 0, h = 0;
    std::vector<std::uint8_t> rgb;  // interleaved, row-major, 3 bytes per pixel

    std::uint8_t& at(int y, int x, int ch) { return rgb[(static_cast<std::size_t>(y) * w + x) * 3 + ch]; }
    std::uint8_t at(int y, int x, int ch) const {
        return rgb[(static_cast<std::size_t>(y) * w + x) * 3 + ch];
    }
};

// PPM P6 (binary, maxval 255) is the bit-exact reference format.
void write_ppm(const std::filesystem::path& path, const ImageU8& img);
ImageU8 read_ppm(const std::filesystem::path& path);

// 8-bit RGB, non-interlaced, zlib-compressed.
void write_png(const std::filesystem::path& path, const ImageU8& img);

// [0,1] CHW floats <-> u8 RGB. Single-channel images replicate to gray.
ImageU8 to_image_u8(const LabeledImage& img);
LabeledImage from_image_u8(const ImageU8& img, int channels);

}  // namespace sexplain

#endif
