#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <zlib.h>

#include "avdt/tensor.hpp"
#include "avdt/vae.hpp"

namespace avdt {

// Minimal RGB8 PNG writer (zlib-compressed, filter 0 rows).
inline void write_png(const std::string& path, const Tensor<float>& image) {
    if (image.rank() != 3 || image.extent(2) != 3)
        throw ShapeError("write_png: image must be [H,W,3]");
    std::size_t h = image.extent(0), w = image.extent(1);

    std::vector<unsigned char> raw;
    raw.reserve(h * (1 + 3 * w));
    for (std::size_t y = 0; y < h; ++y) {
        raw.push_back(0); // filter: none
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t c = 0; c < 3; ++c) {
                float v = std::clamp(image.at3(y, x, c), 0.0f, 1.0f);
                raw.push_back(static_cast<unsigned char>(std::lrint(v * 255.0f)));
            }
    }
    uLongf comp_len = compressBound(uLong(raw.size()));
    std::vector<unsigned char> comp(comp_len);
    if (compress2(comp.data(), &comp_len, raw.data(), uLong(raw.size()), 9) != Z_OK)
        throw IoError("png: zlib compression failed");
    comp.resize(comp_len);

    std::vector<unsigned char> out;
    const unsigned char sig[8] = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
    out.insert(out.end(), sig, sig + 8);
    auto put_u32be = [&](std::vector<unsigned char>& v, std::uint32_t x) {
        v.push_back(std::uint8_t(x >> 24));
        v.push_back(std::uint8_t(x >> 16));
        v.push_back(std::uint8_t(x >> 8));
        v.push_back(std::uint8_t(x));
    };
    auto chunk = [&](const char type[4], const std::vector<unsigned char>& data) {
        put_u32be(out, std::uint32_t(data.size()));
        std::vector<unsigned char> body(type, type + 4);
        body.insert(body.end(), data.begin(), data.end());
        out.insert(out.end(), body.begin(), body.end());
        put_u32be(out, std::uint32_t(crc32(0, body.data(), uInt(body.size()))));
    };
    std::vector<unsigned char> ihdr;
    put_u32be(ihdr, std::uint32_t(w));
    put_u32be(ihdr, std::uint32_t(h));
    ihdr.push_back(8); // bit depth
    ihdr.push_back(2); // color type: truecolor
    ihdr.push_back(0);
    ihdr.push_back(0);
    ihdr.push_back(0);
    chunk("IHDR", ihdr);
    chunk("IDAT", comp);
    chunk("IEND", {});

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open for write: " + path);
    f.write(reinterpret_cast<const char*>(out.data()), std::streamsize(out.size()));
    if (!f) throw IoError("write failed: " + path);
}

inline void dump_video_frames(const std::string& dir_prefix, const PixelVideo& v) {
    std::size_t per_frame = v.height * v.width * v.channels;
    for (std::size_t t = 0; t < v.frames; ++t) {
        Tensor<float> frame(Shape{v.height, v.width, v.channels});
        std::copy_n(v.data.data() + t * per_frame, per_frame, frame.data());
        char buf[32];
        std::snprintf(buf, sizeof buf, "_%04zu.png", t);
        write_png(dir_prefix + buf, frame);
    }
}

} // namespace avdt
