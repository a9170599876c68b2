#pragma once

#include <cmath>
#include <vector>

#include "avdt/tensor.hpp"

namespace avdt {

// Token coordinate along (time, width, height). Time -1 is reserved for the
// reference-image token block.
struct PositionTriple {
    int l = 0; // time, >= -1
    int i = 0; // width
    int j = 0; // height
};

// Per-head channel budget for the three axes. Channels rotate in pairs, so
// every split component must be even.
struct RotaryTable {
    std::size_t d_head = 0;
    std::size_t d_t = 0, d_w = 0, d_h = 0;
    double base = 10000.0;

    void validate() const {
        if (d_t + d_w + d_h != d_head || d_t % 2 || d_w % 2 || d_h % 2)
            throw ConfigError("rotary split must be even per axis and sum to d_head");
    }

    // Equal-as-possible split with d_t >= d_w == d_h.
    static RotaryTable make(std::size_t d_head, double base = 10000.0) {
        RotaryTable t;
        t.d_head = d_head;
        t.base = base;
        std::size_t dw = (d_head / 3) & ~std::size_t(1);
        t.d_w = dw;
        t.d_h = dw;
        t.d_t = d_head - 2 * dw;
        t.validate();
        return t;
    }
};

// Rotation angles for one position, ordered (time pairs, width pairs,
// height pairs): theta_k = coord * base^(-2k/d_axis).
inline std::vector<double> rope_angles(const PositionTriple& p, const RotaryTable& t) {
    t.validate();
    std::vector<double> out;
    out.reserve(t.d_head / 2);
    auto axis = [&](double coord, std::size_t d_axis) {
        for (std::size_t k = 0; k < d_axis / 2; ++k)
            out.push_back(coord * std::pow(t.base, -2.0 * double(k) / double(d_axis)));
    };
    axis(double(p.l), t.d_t);
    axis(double(p.i), t.d_w);
    axis(double(p.j), t.d_h);
    return out;
}

// Apply the per-pair rotations to tokens [T, d_head], one position per token.
template <typename T>
Tensor<T> apply_rope(const Tensor<T>& tokens, const std::vector<PositionTriple>& positions,
                     const RotaryTable& table) {
    if (tokens.rank() != 2 || tokens.extent(1) != table.d_head)
        throw ShapeError("apply_rope: tokens must be [T, d_head]");
    if (positions.size() != tokens.extent(0))
        throw ShapeError("apply_rope: positions length mismatch");
    Tensor<T> out(tokens.shape());
    std::size_t half = table.d_head / 2;
    for (std::size_t r = 0; r < positions.size(); ++r) {
        std::vector<double> ang = rope_angles(positions[r], table);
        for (std::size_t p = 0; p < half; ++p) {
            T c = T(std::cos(ang[p])), s = T(std::sin(ang[p]));
            T v0 = tokens[r * table.d_head + 2 * p];
            T v1 = tokens[r * table.d_head + 2 * p + 1];
            out[r * table.d_head + 2 * p] = v0 * c - v1 * s;
            out[r * table.d_head + 2 * p + 1] = v0 * s + v1 * c;
        }
    }
    return out;
}

// Reference-image tokens live at time -1 with spatially shifted coordinates,
// so they never collide with video positions.
inline std::vector<PositionTriple> image_latent_positions(std::size_t w, std::size_t h) {
    if (w == 0 || h == 0) throw ShapeError("image_latent_positions: empty grid");
    std::vector<PositionTriple> out;
    out.reserve(w * h);
    // Row-major (height, width) to match token order.
    for (std::size_t j = 0; j < h; ++j)
        for (std::size_t i = 0; i < w; ++i)
            out.push_back(PositionTriple{-1, int(i + w), int(j + h)});
    return out;
}

// Video token positions for `frames` latent frames over a w x h grid,
// row-major (frame, height, width).
inline std::vector<PositionTriple> video_positions(std::size_t frames, std::size_t w,
                                                   std::size_t h) {
    std::vector<PositionTriple> out;
    out.reserve(frames * w * h);
    for (std::size_t l = 0; l < frames; ++l)
        for (std::size_t j = 0; j < h; ++j)
            for (std::size_t i = 0; i < w; ++i)
                out.push_back(PositionTriple{int(l), int(i), int(j)});
    return out;
}

// Precomputed cos/sin rows for a token list, replicated across heads so a
// [T, d_model] tensor can be rotated pairwise in one pass. Rows with no
// position (e.g. text tokens) would use identity; here all rows have one.
template <typename T>
struct RopeRows {
    Tensor<T> cos_t, sin_t; // [T, d_model/2]
};

template <typename T>
RopeRows<T> precompute_rope_rows(const std::vector<PositionTriple>& positions,
                                 const RotaryTable& table, std::size_t n_heads) {
    std::size_t d_model = table.d_head * n_heads;
    std::size_t half = d_model / 2;
    RopeRows<T> rows;
    rows.cos_t = Tensor<T>(Shape{positions.size(), half});
    rows.sin_t = Tensor<T>(Shape{positions.size(), half});
    std::size_t hh = table.d_head / 2;
    for (std::size_t r = 0; r < positions.size(); ++r) {
        std::vector<double> ang = rope_angles(positions[r], table);
        for (std::size_t head = 0; head < n_heads; ++head)
            for (std::size_t p = 0; p < hh; ++p) {
                rows.cos_t[r * half + head * hh + p] = T(std::cos(ang[p]));
                rows.sin_t[r * half + head * hh + p] = T(std::sin(ang[p]));
            }
    }
    return rows;
}

} // namespace avdt
