#include "sexplain/image.hpp"

#include <zlib.h>

#include <cmath>
#include <cstring>
#include <fstream>

namespace sexplain {

void write_ppm(const std::filesystem::path& path, const ImageU8& img) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << "P6\n" << img.w << " " << img.h << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.rgb.data()),
              static_cast<std::streamsize>(img.rgb.size()));
}

ImageU8 read_ppm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open " + path.string(), 0);
    std::string magic;
    in >> magic;
    if (magic != "P6") throw ParseError(path.string() + ": not a P6 PPM", 0);
    int w = 0, h = 0, maxval = 0;
    // skip whitespace and '#' comment lines between header tokens
    auto next_int = [&](int& v) {
        for (;;) {
            in >> std::ws;
            if (in.peek() == '#') {
                std::string line;
                std::getline(in, line);
                continue;
            }
            if (!(in >> v)) throw ParseError(path.string() + ": malformed PPM header", 0);
            return;
        }
    };
    next_int(w);
    next_int(h);
    next_int(maxval);
    if (w < 1 || h < 1 || maxval != 255)
        throw ParseError(path.string() + ": unsupported PPM geometry or maxval", 0);
    in.get();  // single whitespace after maxval
    ImageU8 img;
    img.w = w;
    img.h = h;
    img.rgb.resize(static_cast<std::size_t>(w) * h * 3);
    in.read(reinterpret_cast<char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()));
    if (in.gcount() != static_cast<std::streamsize>(img.rgb.size()))
        throw ParseError(path.string() + ": PPM pixel data truncated",
                         static_cast<std::size_t>(in.gcount()));
    return img;
}

namespace {

void put_u32_be(std::string& out, std::uint32_t v) {
    out.push_back(static_cast<char>(v >> 24));
    out.push_back(static_cast<char>(v >> 16));
    out.push_back(static_cast<char>(v >> 8));
    out.push_back(static_cast<char>(v));
}

void put_chunk(std::string& out, const char type[4], const std::string& payload) {
    put_u32_be(out, static_cast<std::uint32_t>(payload.size()));
    std::string body(type, 4);
    body += payload;
    out += body;
    const auto crc =
        crc32(0, reinterpret_cast<const Bytef*>(body.data()), static_cast<uInt>(body.size()));
    put_u32_be(out, static_cast<std::uint32_t>(crc));
}

}  // namespace

void write_png(const std::filesystem::path& path, const ImageU8& img) {
    // raw scanlines with filter byte 0
    std::vector<std::uint8_t> raw;
    raw.reserve(static_cast<std::size_t>(img.h) * (1 + 3 * img.w));
    for (int y = 0; y < img.h; ++y) {
        raw.push_back(0);
        const std::uint8_t* row = img.rgb.data() + static_cast<std::size_t>(y) * img.w * 3;
        raw.insert(raw.end(), row, row + static_cast<std::size_t>(img.w) * 3);
    }
    uLongf comp_size = compressBound(static_cast<uLong>(raw.size()));
    std::vector<std::uint8_t> comp(comp_size);
    if (compress2(comp.data(), &comp_size, raw.data(), static_cast<uLong>(raw.size()), 9) != Z_OK)
        throw std::runtime_error("PNG deflate failed");
    comp.resize(comp_size);

    std::string out("\x89PNG\r\n\x1a\n", 8);
    std::string ihdr;
    put_u32_be(ihdr, static_cast<std::uint32_t>(img.w));
    put_u32_be(ihdr, static_cast<std::uint32_t>(img.h));
    ihdr += '\x08';  // bit depth
    ihdr += '\x02';  // color type RGB
    ihdr += '\x00';  // compression
    ihdr += '\x00';  // filter
    ihdr += '\x00';  // non-interlaced
    put_chunk(out, "IHDR", ihdr);
    put_chunk(out, "IDAT", std::string(reinterpret_cast<const char*>(comp.data()), comp.size()));
    put_chunk(out, "IEND", "");

    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

ImageU8 to_image_u8(const LabeledImage& img) {
    ImageU8 out;
    out.w = img.w;
    out.h = img.h;
    out.rgb.resize(static_cast<std::size_t>(img.w) * img.h * 3);
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x)
            for (int ch = 0; ch < 3; ++ch) {
                const float v = img.at(img.c == 1 ? 0 : ch, y, x);
                const float clamped = std::min(1.0f, std::max(0.0f, v));
                out.at(y, x, ch) = static_cast<std::uint8_t>(std::lround(clamped * 255.0f));
            }
    return out;
}

LabeledImage from_image_u8(const ImageU8& img, int channels) {
    LabeledImage out;
    out.c = channels;
    out.h = img.h;
    out.w = img.w;
    out.pixels.resize(static_cast<std::size_t>(channels) * img.h * img.w);
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x) {
            if (channels == 1) {
                const float gray = (img.at(y, x, 0) + img.at(y, x, 1) + img.at(y, x, 2)) / 3.0f;
                out.at(0, y, x) = gray / 255.0f;
            } else {
                for (int ch = 0; ch < channels; ++ch)
                    out.at(ch, y, x) = static_cast<float>(img.at(y, x, ch)) / 255.0f;
            }
        }
    return out;
}

}  // namespace sexplain
