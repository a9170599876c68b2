#pragma once

#include <string>
#include <vector>

#include "avdt/attention.hpp"
#include "avdt/tokenizer.hpp"
#include "avdt/vae.hpp"

namespace avdt {

// VAE-encoded emotion reference image, flattened to w*h latent tokens.
struct EmotionRef {
    Tensor<float> tokens; // [w*h, c]
};

inline EmotionRef encode_emotion_ref(const Tensor<float>& image, std::size_t s_p) {
    ImageLatent lat = encode_image(image, s_p);
    EmotionRef e;
    e.tokens = image_to_rows(lat.data);
    return e;
}

// Audio emotion module: gamma gate (zero-initialized so a fresh module is a
// no-op), FC adapter from latent channels to d_model, cross-attention
// projections. Lives in double blocks only.
template <typename T>
struct AemParams {
    Var<T> gamma = nullptr; // [1]
    Var<T> fc_w = nullptr;  // [c, d_model]
    Var<T> fc_b = nullptr;  // [d_model]
    AttnProj<T> attn;
};

template <typename T>
AemParams<T> make_aem_params(ParamStore<T>& ps, const std::string& prefix, std::size_t d_model,
                             std::size_t c_latent, std::size_t heads, SeededRng& rng) {
    AemParams<T> p;
    p.gamma = ps.create(prefix + ".gamma", Tensor<T>::scalar(T(0)));
    p.fc_w = ps.create(prefix + ".fc.w", init_linear_weight<T>(c_latent, d_model, rng));
    p.fc_b = ps.create(prefix + ".fc.b", Tensor<T>(Shape{d_model}));
    p.attn = make_attn_proj(ps, prefix + ".attn", d_model, d_model, heads, rng);
    return p;
}

template <typename T>
AemParams<T> find_aem_params(ParamStore<T>& ps, const std::string& prefix, std::size_t heads) {
    AemParams<T> p;
    p.gamma = ps.find(prefix + ".gamma")->var();
    p.fc_w = ps.find(prefix + ".fc.w")->var();
    p.fc_b = ps.find(prefix + ".fc.b")->var();
    p.attn = find_attn_proj(ps, prefix + ".attn", heads);
    return p;
}

// Eq.-6 update: per latent frame, video tokens query the FC-projected
// emotion reference tokens (keys and values); residual scaled by gamma.
template <typename T>
Var<T> aem_apply(Tape<T>& g, Var<T> video_tokens, const Tensor<T>& eref_tokens,
                 const AemParams<T>& p, std::size_t frames, std::size_t spatial) {
    std::size_t d = video_tokens->value.shape().back();
    if (video_tokens->value.numel() != frames * spatial * d)
        throw ShapeError("aem_apply: token count does not factor as (n+1)*w*h");
    if (eref_tokens.rank() != 2 || eref_tokens.extent(1) != p.fc_w->value.extent(0))
        throw ShapeError("aem_apply: emotion reference extent mismatch");
    std::size_t tk = eref_tokens.extent(0);
    Var<T> kv = g.linear(g.constant(eref_tokens), p.fc_w, p.fc_b);
    Var<T> kv3 = g.repeat0(g.reshape(kv, Shape{1, tk, d}), frames);
    Var<T> q3 = g.reshape(video_tokens, Shape{frames, spatial, d});
    Var<T> ctx = cross_attention_batched(g, q3, kv3, p.attn);
    Var<T> flat = g.reshape(ctx, Shape{frames * spatial, d});
    return g.add(video_tokens, g.scale_by(flat, p.gamma));
}

// Double blocks must carry AEM parameters; single blocks must not.
struct PlacementReport {
    bool ok = false;
    std::vector<std::string> problems;
};

inline PlacementReport check_aem_placement(const std::vector<std::string>& param_names,
                                           std::size_t n_double) {
    PlacementReport rep;
    rep.ok = true;
    for (std::size_t i = 0; i < n_double; ++i) {
        std::string want = "double." + std::to_string(i) + ".aem.gamma";
        bool found = false;
        for (const auto& n : param_names)
            if (n == want) found = true;
        if (!found) {
            rep.ok = false;
            rep.problems.push_back("missing AEM in double block " + std::to_string(i));
        }
    }
    for (const auto& n : param_names)
        if (n.rfind("single.", 0) == 0 && n.find(".aem.") != std::string::npos) {
            rep.ok = false;
            rep.problems.push_back("AEM parameter in single block: " + n);
        }
    return rep;
}

} // namespace avdt
