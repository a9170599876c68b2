#pragma once

#include <vector>

#include "avdt/tensor.hpp"

namespace avdt {

// Pixel-space video, values in [0,1]. Layout [frames, H, W, C].
struct PixelVideo {
    std::size_t frames = 0, height = 0, width = 0, channels = 0;
    Tensor<float> data;

    static PixelVideo from_tensor(Tensor<float> t) {
        if (t.rank() != 4) throw ShapeError("PixelVideo tensor must be 4D [f,H,W,C]");
        PixelVideo v;
        v.frames = t.extent(0);
        v.height = t.extent(1);
        v.width = t.extent(2);
        v.channels = t.extent(3);
        v.data = std::move(t);
        return v;
    }

    float& at(std::size_t t, std::size_t y, std::size_t x, std::size_t c) {
        return data.at4(t, y, x, c);
    }
    float at(std::size_t t, std::size_t y, std::size_t x, std::size_t c) const {
        return data.at4(t, y, x, c);
    }
};

// Latent grid from the packing VAE. Layout [n, w, h, c]: axis 1 is width.
struct VideoLatent {
    std::size_t frames = 0, w = 0, h = 0, c = 0;
    Tensor<float> data;

    static VideoLatent from_tensor(Tensor<float> t) {
        if (t.rank() != 4) throw ShapeError("VideoLatent tensor must be 4D [n,w,h,c]");
        VideoLatent z;
        z.frames = t.extent(0);
        z.w = t.extent(1);
        z.h = t.extent(2);
        z.c = t.extent(3);
        z.data = std::move(t);
        return z;
    }
    static VideoLatent zeros(std::size_t n, std::size_t w, std::size_t h, std::size_t c) {
        return from_tensor(Tensor<float>(Shape{n, w, h, c}));
    }

    float& at(std::size_t l, std::size_t i, std::size_t j, std::size_t cc) {
        return data.at4(l, i, j, cc);
    }
    float at(std::size_t l, std::size_t i, std::size_t j, std::size_t cc) const {
        return data.at4(l, i, j, cc);
    }
};

// Single-frame latent (reference / emotion images). Layout [w, h, c].
struct ImageLatent {
    std::size_t w = 0, h = 0, c = 0;
    Tensor<float> data;
};

// Per-latent-frame binary face gate, frame 0 is the identity frame and is
// all ones. Layout [(n+1), w, h].
struct FaceMaskGrid {
    std::size_t frames = 0, w = 0, h = 0;
    Tensor<float> data;

    float at(std::size_t l, std::size_t i, std::size_t j) const { return data.at3(l, i, j); }
};

inline constexpr std::size_t kTemporalFactor = 4;

inline std::size_t latent_frame_count(std::size_t pixel_frames) {
    return pixel_frames / kTemporalFactor + 1;
}

inline void check_pixel_video(const PixelVideo& v, std::size_t s_p) {
    if (v.frames == 0 || (v.frames - 1) % kTemporalFactor != 0)
        throw ShapeError("pixel video frame count must satisfy (f-1) mod 4 == 0, got " +
                         std::to_string(v.frames));
    if (s_p == 0 || v.height % s_p != 0 || v.width % s_p != 0)
        throw ShapeError("pixel extents must divide the spatial factor");
    if (v.data.numel() != v.frames * v.height * v.width * v.channels)
        throw ShapeError("pixel video tensor size mismatch");
}

// Exactly invertible stand-in for a learned 3D VAE. Frame 0 is replicated
// 4x, frames are grouped in fours, and each group is packed time- and
// space-to-depth: c = C * 4 * s_p^2, n = floor(f/4) + 1. Pure data movement,
// so decode(encode(v)) is bit-exact.
inline VideoLatent encode_video(const PixelVideo& v, std::size_t s_p) {
    check_pixel_video(v, s_p);
    std::size_t n = latent_frame_count(v.frames);
    std::size_t w = v.width / s_p, h = v.height / s_p;
    std::size_t c = v.channels * kTemporalFactor * s_p * s_p;
    VideoLatent z = VideoLatent::zeros(n, w, h, c);
    std::size_t pad = kTemporalFactor - 1; // leading copies of frame 0
    for (std::size_t l = 0; l < n; ++l)
        for (std::size_t dt = 0; dt < kTemporalFactor; ++dt) {
            std::size_t p = l * kTemporalFactor + dt;
            std::size_t src = p < pad ? 0 : p - pad;
            for (std::size_t y = 0; y < v.height; ++y)
                for (std::size_t x = 0; x < v.width; ++x) {
                    std::size_t i = x / s_p, dx = x % s_p;
                    std::size_t j = y / s_p, dy = y % s_p;
                    for (std::size_t ch = 0; ch < v.channels; ++ch) {
                        std::size_t cc = ((dt * s_p + dy) * s_p + dx) * v.channels + ch;
                        z.at(l, i, j, cc) = v.at(src, y, x, ch);
                    }
                }
        }
    return z;
}

inline PixelVideo decode_video(const VideoLatent& z, std::size_t s_p, std::size_t channels) {
    if (z.c != channels * kTemporalFactor * s_p * s_p)
        throw ShapeError("latent channels do not factor as C*4*s_p^2");
    std::size_t f = z.frames * kTemporalFactor - (kTemporalFactor - 1);
    PixelVideo v;
    v.frames = f;
    v.height = z.h * s_p;
    v.width = z.w * s_p;
    v.channels = channels;
    v.data = Tensor<float>(Shape{f, v.height, v.width, channels});
    std::size_t pad = kTemporalFactor - 1;
    for (std::size_t t = 0; t < f; ++t) {
        std::size_t p = t + pad;
        std::size_t l = p / kTemporalFactor, dt = p % kTemporalFactor;
        for (std::size_t y = 0; y < v.height; ++y)
            for (std::size_t x = 0; x < v.width; ++x) {
                std::size_t i = x / s_p, dx = x % s_p;
                std::size_t j = y / s_p, dy = y % s_p;
                for (std::size_t ch = 0; ch < channels; ++ch) {
                    std::size_t cc = ((dt * s_p + dy) * s_p + dx) * channels + ch;
                    v.at(t, y, x, ch) = z.at(l, i, j, cc);
                }
            }
    }
    return v;
}

// Single image as a one-frame video through the same packing.
inline ImageLatent encode_image(const Tensor<float>& img, std::size_t s_p) {
    if (img.rank() != 3) throw ShapeError("image must be [H,W,C]");
    PixelVideo v;
    v.frames = 1;
    v.height = img.extent(0);
    v.width = img.extent(1);
    v.channels = img.extent(2);
    v.data = img.reshaped(Shape{1, v.height, v.width, v.channels});
    VideoLatent z = encode_video(v, s_p);
    ImageLatent out;
    out.w = z.w;
    out.h = z.h;
    out.c = z.c;
    out.data = z.data.reshaped(Shape{z.w, z.h, z.c});
    return out;
}

// Axis-aligned half-open pixel rectangle.
struct PixelBox {
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
};

// Rasterize per-frame face boxes, pad to (n+1)*4 mask frames with the
// identity group forced to 1, reduce each group of 4 by union, then
// max-pool s_p x s_p cells. boxes[t] lists the rectangles of pixel frame t.
inline FaceMaskGrid align_face_mask(const std::vector<std::vector<PixelBox>>& boxes,
                                    std::size_t pixel_frames, std::size_t width,
                                    std::size_t height, std::size_t s_p) {
    if (pixel_frames == 0 || (pixel_frames - 1) % kTemporalFactor != 0)
        throw ShapeError("align_face_mask: (f-1) mod 4 != 0");
    if (boxes.size() != pixel_frames)
        throw ShapeError("align_face_mask: need one box list per pixel frame");
    for (const auto& frame : boxes)
        for (const PixelBox& b : frame)
            if (b.x0 < 0 || b.y0 < 0 || b.x1 > int(width) || b.y1 > int(height) ||
                b.x0 > b.x1 || b.y0 > b.y1)
                throw ShapeError("align_face_mask: box out of bounds");

    std::size_t n = latent_frame_count(pixel_frames);
    std::size_t w = width / s_p, h = height / s_p;
    FaceMaskGrid m;
    m.frames = n + 1;
    m.w = w;
    m.h = h;
    m.data = Tensor<float>(Shape{n + 1, w, h});

    // Identity frame: all ones.
    for (std::size_t i = 0; i < w; ++i)
        for (std::size_t j = 0; j < h; ++j) m.data.at3(0, i, j) = 1.0f;

    // Remaining frames mirror the VAE's temporal grouping of the padded
    // pixel sequence (3 leading copies of frame 0).
    std::size_t pad = kTemporalFactor - 1;
    for (std::size_t l = 0; l < n; ++l) {
        for (std::size_t dt = 0; dt < kTemporalFactor; ++dt) {
            std::size_t p = l * kTemporalFactor + dt;
            std::size_t src = p < pad ? 0 : p - pad;
            // Max-pool: any covered pixel lights its latent cell.
            for (const PixelBox& b : boxes[src])
                for (int x = b.x0; x < b.x1; ++x)
                    for (int y = b.y0; y < b.y1; ++y)
                        m.data.at3(l + 1, std::size_t(x) / s_p, std::size_t(y) / s_p) = 1.0f;
        }
    }
    return m;
}

} // namespace avdt
