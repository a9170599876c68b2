#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "avdt/tensor.hpp"

namespace avdt {

// 16-bit PCM mono WAV, the only audio interchange format accepted.
struct WavData {
    std::uint32_t sample_rate = 16000;
    std::vector<float> samples; // in [-1, 1]
};

inline void write_wav(const std::string& path, const WavData& w) {
    std::vector<std::uint8_t> out;
    auto put_u32 = [&](std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out.push_back(std::uint8_t(v >> (8 * i)));
    };
    auto put_u16 = [&](std::uint16_t v) {
        out.push_back(std::uint8_t(v & 0xFF));
        out.push_back(std::uint8_t(v >> 8));
    };
    std::uint32_t data_bytes = std::uint32_t(w.samples.size() * 2);
    out.insert(out.end(), {'R', 'I', 'F', 'F'});
    put_u32(36 + data_bytes);
    out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
    put_u32(16);
    put_u16(1); // PCM
    put_u16(1); // mono
    put_u32(w.sample_rate);
    put_u32(w.sample_rate * 2); // byte rate
    put_u16(2);                 // block align
    put_u16(16);                // bits per sample
    out.insert(out.end(), {'d', 'a', 't', 'a'});
    put_u32(data_bytes);
    for (float s : w.samples) {
        float c = std::clamp(s, -1.0f, 1.0f);
        auto v = std::int16_t(std::lrint(c * 32767.0f));
        out.push_back(std::uint8_t(std::uint16_t(v) & 0xFF));
        out.push_back(std::uint8_t(std::uint16_t(v) >> 8));
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open for write: " + path);
    f.write(reinterpret_cast<const char*>(out.data()), std::streamsize(out.size()));
    if (!f) throw IoError("write failed: " + path);
}

inline WavData read_wav(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open: " + path);
    std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
    auto u32 = [&](std::size_t p) {
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t(buf[p + i]) << (8 * i);
        return v;
    };
    auto u16 = [&](std::size_t p) {
        return std::uint16_t(buf[p] | (std::uint16_t(buf[p + 1]) << 8));
    };
    if (buf.size() < 44 || std::memcmp(buf.data(), "RIFF", 4) != 0 ||
        std::memcmp(buf.data() + 8, "WAVE", 4) != 0)
        throw IoError("not a WAV file: " + path);

    WavData w;
    std::size_t pos = 12;
    bool have_fmt = false;
    while (pos + 8 <= buf.size()) {
        std::string chunk(reinterpret_cast<const char*>(buf.data() + pos), 4);
        std::uint32_t len = u32(pos + 4);
        pos += 8;
        if (pos + len > buf.size()) throw IoError("truncated WAV: " + path);
        if (chunk == "fmt ") {
            if (u16(pos) != 1 || u16(pos + 2) != 1 || u16(pos + 14) != 16)
                throw IoError("WAV must be 16-bit PCM mono: " + path);
            w.sample_rate = u32(pos + 4);
            have_fmt = true;
        } else if (chunk == "data") {
            std::size_t n = len / 2;
            w.samples.resize(n);
            for (std::size_t i = 0; i < n; ++i) {
                auto v = std::int16_t(u16(pos + 2 * i));
                w.samples[i] = float(v) / 32767.0f;
            }
        }
        pos += len + (len & 1);
    }
    if (!have_fmt) throw IoError("WAV missing fmt chunk: " + path);
    return w;
}

} // namespace avdt
