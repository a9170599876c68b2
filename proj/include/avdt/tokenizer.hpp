#pragma once

#include <string>
#include <vector>

#include "avdt/attention.hpp"
#include "avdt/autodiff.hpp"
#include "avdt/rope.hpp"

namespace avdt {

// ============================================================================
// Latent <-> token-row reordering. Token order is row-major
// (frame, height, width); latent memory layout is [F, w, h, c].
// ============================================================================

template <typename T>
Tensor<T> latent_to_rows(const Tensor<T>& latent) {
    if (latent.rank() != 4) throw ShapeError("latent_to_rows: need [F,w,h,c]");
    std::size_t f = latent.extent(0), w = latent.extent(1), h = latent.extent(2),
                c = latent.extent(3);
    Tensor<T> rows(Shape{f * w * h, c});
    std::size_t t = 0;
    for (std::size_t l = 0; l < f; ++l)
        for (std::size_t j = 0; j < h; ++j)
            for (std::size_t i = 0; i < w; ++i, ++t)
                std::copy_n(latent.data() + ((l * w + i) * h + j) * c, c, rows.data() + t * c);
    return rows;
}

template <typename T>
Tensor<T> image_to_rows(const Tensor<T>& img) {
    if (img.rank() != 3) throw ShapeError("image_to_rows: need [w,h,c]");
    std::size_t w = img.extent(0), h = img.extent(1), c = img.extent(2);
    Tensor<T> rows(Shape{w * h, c});
    std::size_t t = 0;
    for (std::size_t j = 0; j < h; ++j)
        for (std::size_t i = 0; i < w; ++i, ++t)
            std::copy_n(img.data() + (i * h + j) * c, c, rows.data() + t * c);
    return rows;
}

template <typename T>
Tensor<T> rows_to_latent(const Tensor<T>& rows, std::size_t f, std::size_t w, std::size_t h) {
    std::size_t c = rows.extent(1);
    if (rows.extent(0) != f * w * h) throw ShapeError("rows_to_latent: row count mismatch");
    Tensor<T> latent(Shape{f, w, h, c});
    std::size_t t = 0;
    for (std::size_t l = 0; l < f; ++l)
        for (std::size_t j = 0; j < h; ++j)
            for (std::size_t i = 0; i < w; ++i, ++t)
                std::copy_n(rows.data() + t * c, c, latent.data() + ((l * w + i) * h + j) * c);
    return latent;
}

// ============================================================================
// Tokenizers and the character image injection mechanisms
// ============================================================================

// Flatten projection from latent cells to model tokens (patch size 1).
template <typename T>
struct Tokenizer {
    Var<T> w = nullptr; // [c_in, d_model]
    Var<T> b = nullptr; // [d_model]

    std::size_t c_in() const { return w->value.extent(0); }
    std::size_t d_model() const { return w->value.extent(1); }
};

template <typename T>
Var<T> tokenize_rows(Tape<T>& g, const Tensor<T>& rows, const Tokenizer<T>& tok) {
    if (rows.extent(1) != tok.c_in())
        throw ShapeError("tokenize: cell width " + std::to_string(rows.extent(1)) +
                         " vs tokenizer input " + std::to_string(tok.c_in()));
    return g.linear(g.constant(rows), tok.w, tok.b);
}

enum class InjectionMechanism { TokenConcat, TokenChannel, TokenAdd }; // a, b, c

inline const char* mechanism_name(InjectionMechanism m) {
    switch (m) {
        case InjectionMechanism::TokenConcat: return "a";
        case InjectionMechanism::TokenChannel: return "b";
        case InjectionMechanism::TokenAdd: return "c";
    }
    return "?";
}

inline InjectionMechanism parse_mechanism(const std::string& s) {
    if (s == "a") return InjectionMechanism::TokenConcat;
    if (s == "b") return InjectionMechanism::TokenChannel;
    if (s == "c") return InjectionMechanism::TokenAdd;
    throw ConfigError("injection.mechanism must be one of a|b|c, got '" + s + "'");
}

// Mechanism (c) carries a projection; (a) and (b) must not.
template <typename T>
struct InjectionModule {
    InjectionMechanism mechanism = InjectionMechanism::TokenAdd;
    Tokenizer<T> tokenizer1; // video tokenizer for (b); ref branch K1 for (c)
    Tokenizer<T> tokenizer2; // image tokenizer for (b); video branch K2 for (c); shared for (a)
    Var<T> proj_w = nullptr; // [d,d], mechanism (c) only
    Var<T> proj_b = nullptr;

    void validate() const {
        bool has_proj = proj_w != nullptr;
        if (mechanism == InjectionMechanism::TokenAdd && !has_proj)
            throw ConfigError("injection mechanism c requires a projection");
        if (mechanism != InjectionMechanism::TokenAdd && has_proj)
            throw ConfigError("injection mechanism a/b must not carry a projection");
    }
};

// Copy weights parameter-by-parameter; shapes must match exactly.
template <typename T>
void copy_tokenizer_weights(const Tokenizer<T>& src, Tokenizer<T>& dst) {
    if (!src.w->value.same_shape(dst.w->value) || !src.b->value.same_shape(dst.b->value))
        throw ShapeError("tokenizer weight copy: incompatible shapes");
    dst.w->value = src.w->value;
    dst.b->value = src.b->value;
}

// The image branch starts as an exact copy of the video branch and trains
// independently afterward.
template <typename T>
Tokenizer<T> init_tokenizer2_from_tokenizer1(ParamStore<T>& ps, const std::string& name,
                                             const Tokenizer<T>& t1) {
    Tokenizer<T> t2;
    t2.w = ps.create(name + ".w", t1.w->value);
    t2.b = ps.create(name + ".b", t1.b->value);
    return t2;
}

template <typename T>
InjectionModule<T> make_injection_module(ParamStore<T>& ps, InjectionMechanism mech,
                                         std::size_t c, std::size_t d_model, SeededRng& rng) {
    InjectionModule<T> m;
    m.mechanism = mech;
    switch (mech) {
        case InjectionMechanism::TokenConcat: {
            m.tokenizer2.w = ps.create("tokenizer.w", init_linear_weight<T>(c, d_model, rng));
            m.tokenizer2.b = ps.create("tokenizer.b", Tensor<T>(Shape{d_model}));
            m.tokenizer1 = m.tokenizer2; // shared
            break;
        }
        case InjectionMechanism::TokenChannel: {
            // Video half random; ref-channel half copies the video half.
            Tensor<T> w(Shape{2 * c, d_model});
            Tensor<T> video_half = init_linear_weight<T>(c, d_model, rng);
            for (std::size_t i = 0; i < c; ++i)
                for (std::size_t j = 0; j < d_model; ++j) {
                    w.at2(i, j) = video_half.at2(i, j);
                    w.at2(c + i, j) = video_half.at2(i, j);
                }
            m.tokenizer1.w = ps.create("tokenizer1.w", std::move(w));
            m.tokenizer1.b = ps.create("tokenizer1.b", Tensor<T>(Shape{d_model}));
            m.tokenizer2.w = ps.create("tokenizer2.w", std::move(video_half));
            m.tokenizer2.b = ps.create("tokenizer2.b", Tensor<T>(Shape{d_model}));
            break;
        }
        case InjectionMechanism::TokenAdd: {
            // K2 handles the video/noise latent; K1 starts as its copy.
            m.tokenizer2.w = ps.create("tokenizer2.w", init_linear_weight<T>(c, d_model, rng));
            m.tokenizer2.b = ps.create("tokenizer2.b", Tensor<T>(Shape{d_model}));
            m.tokenizer1 = init_tokenizer2_from_tokenizer1(ps, "tokenizer1", m.tokenizer2);
            m.proj_w = ps.create("inject_proj.w", init_linear_weight<T>(d_model, d_model, rng));
            m.proj_b = ps.create("inject_proj.b", Tensor<T>(Shape{d_model}));
            break;
        }
    }
    m.validate();
    return m;
}

template <typename T>
InjectionModule<T> find_injection_module(ParamStore<T>& ps, InjectionMechanism mech) {
    InjectionModule<T> m;
    m.mechanism = mech;
    auto bind = [&](const std::string& n) {
        Tokenizer<T> t;
        t.w = ps.find(n + ".w")->var();
        t.b = ps.find(n + ".b")->var();
        return t;
    };
    if (mech == InjectionMechanism::TokenConcat) {
        m.tokenizer2 = bind("tokenizer");
        m.tokenizer1 = m.tokenizer2;
    } else {
        m.tokenizer1 = bind("tokenizer1");
        m.tokenizer2 = bind("tokenizer2");
        if (mech == InjectionMechanism::TokenAdd) {
            m.proj_w = ps.find("inject_proj.w")->var();
            m.proj_b = ps.find("inject_proj.b")->var();
        }
    }
    m.validate();
    return m;
}

// Token sequence with positions and segment labels: video tokens first,
// exactly w*h ref_image tokens appended.
template <typename T>
struct TokenSequence {
    Var<T> tokens = nullptr;
    std::vector<PositionTriple> positions;
    std::size_t video_tokens = 0;
    std::size_t ref_tokens = 0;

    bool is_ref_token(std::size_t t) const { return t >= video_tokens; }
};

namespace detail {

template <typename T>
void check_inject_extents(const Tensor<T>& ref, const Tensor<T>& video) {
    if (video.rank() != 4 || ref.rank() != 3)
        throw ShapeError("inject: video must be [F,w,h,c], ref [w,h,c]");
    if (video.extent(0) == 0) throw ShapeError("inject: empty video");
    if (video.extent(1) != ref.extent(0) || video.extent(2) != ref.extent(1) ||
        video.extent(3) != ref.extent(2))
        throw ShapeError("inject: ref extents do not match video latent");
}

template <typename T>
TokenSequence<T> assemble(Tape<T>& g, Var<T> video_tok, Var<T> ref_tok, std::size_t f,
                          std::size_t w, std::size_t h) {
    TokenSequence<T> seq;
    seq.tokens = g.concat0({video_tok, ref_tok});
    seq.positions = video_positions(f, w, h);
    std::vector<PositionTriple> rp = image_latent_positions(w, h);
    seq.positions.insert(seq.positions.end(), rp.begin(), rp.end());
    seq.video_tokens = f * w * h;
    seq.ref_tokens = w * h;
    return seq;
}

} // namespace detail

// (a) Shared tokenizer, token-dimension concat.
template <typename T>
TokenSequence<T> inject_a(Tape<T>& g, const Tensor<T>& ref, const Tensor<T>& video,
                          const Tokenizer<T>& shared_tok) {
    detail::check_inject_extents(ref, video);
    std::size_t f = video.extent(0), w = video.extent(1), h = video.extent(2);
    Var<T> vt = tokenize_rows(g, latent_to_rows(video), shared_tok);
    Var<T> rt = tokenize_rows(g, image_to_rows(ref), shared_tok);
    return detail::assemble(g, vt, rt, f, w, h);
}

// (b) Ref repeated per frame, channel-concatenated with the video, through
// tokenizer1 (2c input); ref alone through tokenizer2.
template <typename T>
TokenSequence<T> inject_b(Tape<T>& g, const Tensor<T>& ref, const Tensor<T>& video,
                          const Tokenizer<T>& tokenizer1, const Tokenizer<T>& tokenizer2) {
    detail::check_inject_extents(ref, video);
    std::size_t f = video.extent(0), w = video.extent(1), h = video.extent(2),
                c = video.extent(3);
    if (tokenizer1.c_in() != 2 * c)
        throw ShapeError("inject_b: tokenizer1 input width must be 2c");
    Tensor<T> vrows = latent_to_rows(video);
    Tensor<T> rrows = image_to_rows(ref);
    std::size_t s = w * h;
    Tensor<T> combined(Shape{f * s, 2 * c});
    for (std::size_t t = 0; t < f * s; ++t) {
        std::copy_n(vrows.data() + t * c, c, combined.data() + t * 2 * c);
        std::copy_n(rrows.data() + (t % s) * c, c, combined.data() + t * 2 * c + c);
    }
    Var<T> vt = tokenize_rows(g, combined, tokenizer1);
    Var<T> rt = tokenize_rows(g, rrows, tokenizer2);
    return detail::assemble(g, vt, rt, f, w, h);
}

// (c) Ref repeated per frame through K1 and a projection, added to the
// K2-tokenized noise latent; t_R = K2(ref) appended.
template <typename T>
TokenSequence<T> inject_c(Tape<T>& g, const Tensor<T>& ref, const Tensor<T>& video,
                          const Tokenizer<T>& k1, const Tokenizer<T>& k2, Var<T> proj_w,
                          Var<T> proj_b) {
    detail::check_inject_extents(ref, video);
    std::size_t f = video.extent(0), w = video.extent(1), h = video.extent(2),
                c = video.extent(3);
    Tensor<T> rrows = image_to_rows(ref);
    std::size_t s = w * h;
    Tensor<T> rep(Shape{f * s, c});
    for (std::size_t t = 0; t < f * s; ++t)
        std::copy_n(rrows.data() + (t % s) * c, c, rep.data() + t * c);
    Var<T> ref_path = g.linear(tokenize_rows(g, rep, k1), proj_w, proj_b);
    Var<T> vt = g.add(tokenize_rows(g, latent_to_rows(video), k2), ref_path);
    Var<T> rt = tokenize_rows(g, rrows, k2);
    return detail::assemble(g, vt, rt, f, w, h);
}

template <typename T>
TokenSequence<T> inject(Tape<T>& g, const InjectionModule<T>& m, const Tensor<T>& ref,
                        const Tensor<T>& video) {
    m.validate();
    switch (m.mechanism) {
        case InjectionMechanism::TokenConcat:
            return inject_a(g, ref, video, m.tokenizer2);
        case InjectionMechanism::TokenChannel:
            return inject_b(g, ref, video, m.tokenizer1, m.tokenizer2);
        case InjectionMechanism::TokenAdd:
            return inject_c(g, ref, video, m.tokenizer1, m.tokenizer2, m.proj_w, m.proj_b);
    }
    throw ConfigError("unknown injection mechanism");
}

} // namespace avdt
