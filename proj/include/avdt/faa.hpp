#pragma once

#include "avdt/attention.hpp"
#include "avdt/audio_features.hpp"
#include "avdt/vae.hpp"

namespace avdt {

// Face-aware audio adapter: alpha gate, d_audio -> d_model adapter, and the
// per-frame spatial cross-attention projections.
template <typename T>
struct FaaParams {
    Var<T> alpha = nullptr;     // [1]
    Var<T> adapter_w = nullptr; // [d_audio, d_model]
    Var<T> adapter_b = nullptr; // [d_model]
    AttnProj<T> attn;
};

template <typename T>
FaaParams<T> make_faa_params(ParamStore<T>& ps, const std::string& prefix, std::size_t d_model,
                             std::size_t d_audio, std::size_t heads, SeededRng& rng) {
    FaaParams<T> p;
    // Gate starts at 1 so audio attention is live from the first step.
    p.alpha = ps.create(prefix + ".alpha", Tensor<T>::scalar(T(1)));
    p.adapter_w = ps.create(prefix + ".adapter.w", init_linear_weight<T>(d_audio, d_model, rng));
    p.adapter_b = ps.create(prefix + ".adapter.b", Tensor<T>(Shape{d_model}));
    p.attn = make_attn_proj(ps, prefix + ".attn", d_model, d_model, heads, rng);
    return p;
}

template <typename T>
FaaParams<T> find_faa_params(ParamStore<T>& ps, const std::string& prefix, std::size_t heads) {
    FaaParams<T> p;
    p.alpha = ps.find(prefix + ".alpha")->var();
    p.adapter_w = ps.find(prefix + ".adapter.w")->var();
    p.adapter_b = ps.find(prefix + ".adapter.b")->var();
    p.attn = find_attn_proj(ps, prefix + ".attn", heads);
    return p;
}

// Mask grid [F,w,h] flattened to one gate value per video token in token
// order (frame, height, width).
template <typename T>
Tensor<T> mask_to_rows(const FaceMaskGrid& mask) {
    std::size_t f = mask.frames, w = mask.w, h = mask.h;
    Tensor<T> rows(Shape{f * w * h});
    std::size_t t = 0;
    for (std::size_t l = 0; l < f; ++l)
        for (std::size_t j = 0; j < h; ++j)
            for (std::size_t i = 0; i < w; ++i, ++t) rows[t] = T(mask.at(l, i, j));
    return rows;
}

// Eq.-5 update on the video token block: per latent frame, video tokens
// query that frame's 40 audio tokens; the residual is gated by alpha and
// multiplied by the frame's face mask. Frames never mix, so audio at frame
// k can only change frame-k tokens, and masked-off cells change exactly
// nothing.
template <typename T>
Var<T> faa_apply(Tape<T>& g, Var<T> video_tokens, Var<T> aligned_audio,
                 const Tensor<T>& mask_rows, const FaaParams<T>& p, std::size_t frames,
                 std::size_t spatial) {
    std::size_t d = video_tokens->value.shape().back();
    if (video_tokens->value.numel() != frames * spatial * d)
        throw ShapeError("faa_apply: token count does not factor as (n+1)*w*h");
    const Shape& as = aligned_audio->value.shape();
    if (as.size() != 3 || as[0] != frames || as[1] != kAudioTokensPerLatentFrame)
        throw ShapeError("faa_apply: aligned audio must be [(n+1),40,d_a]");
    if (mask_rows.numel() != frames * spatial)
        throw ShapeError("faa_apply: mask extent mismatch");

    std::size_t d_a = as[2];
    Var<T> kv = g.linear(g.reshape(aligned_audio, Shape{frames * as[1], d_a}), p.adapter_w,
                         p.adapter_b);
    Var<T> kv3 = g.reshape(kv, Shape{frames, as[1], d});
    Var<T> q3 = g.reshape(video_tokens, Shape{frames, spatial, d});
    Var<T> ctx = cross_attention_batched(g, q3, kv3, p.attn);
    Var<T> flat = g.reshape(ctx, Shape{frames * spatial, d});
    Var<T> gated = g.scale_rows(g.scale_by(flat, p.alpha), mask_rows);
    return g.add(video_tokens, gated);
}

} // namespace avdt
