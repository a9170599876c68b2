#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "avdt/aem.hpp"
#include "avdt/attention.hpp"
#include "avdt/audio_features.hpp"
#include "avdt/autodiff.hpp"
#include "avdt/container.hpp"
#include "avdt/faa.hpp"
#include "avdt/optim.hpp"
#include "avdt/rope.hpp"
#include "avdt/tokenizer.hpp"
#include "avdt/vae.hpp"

namespace avdt {

struct ModelConfig {
    std::size_t d_model = 64;
    std::size_t n_heads = 4;
    std::size_t n_double = 3;
    std::size_t n_single = 3;
    std::size_t latent_w = 4;
    std::size_t latent_h = 4;
    std::size_t pixel_channels = 3;
    // Default 2 keeps latent channels (C*4*s_p^2 = 48) inside d_model;
    // a wider factor than d_model supports turns the tokenizer into a lossy
    // bottleneck for the noise component of the velocity target.
    std::size_t spatial_factor = 2;
    std::size_t f_seg = 9; // latent frames per model call, identity frame included
    std::size_t text_vocab = 32;
    std::size_t text_len = 8;
    std::size_t d_audio = 8;
    std::size_t mlp_ratio = 4;
    InjectionMechanism mechanism = InjectionMechanism::TokenAdd;
    bool faa_double = true;
    bool faa_single = false;
    // Test fixture only; check_aem_placement rejects models built with it.
    bool aem_in_single = false;

    std::size_t latent_c() const {
        return pixel_channels * kTemporalFactor * spatial_factor * spatial_factor;
    }
    std::size_t spatial_tokens() const { return latent_w * latent_h; }
    std::size_t d_head() const { return d_model / n_heads; }

    void validate() const {
        if (n_heads == 0 || d_model % n_heads != 0)
            throw ConfigError("d_model must be divisible by n_heads");
        if (n_double < 1) throw ConfigError("N_double >= 1 required (AEM needs a double block)");
        if (f_seg < 2) throw ConfigError("f_seg must cover identity frame plus video");
        if (text_vocab == 0 || text_len == 0) throw ConfigError("text stream must be non-empty");
        RotaryTable::make(d_head()).validate();
    }
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
    j = nlohmann::json{{"d_model", c.d_model},
                       {"n_heads", c.n_heads},
                       {"n_double", c.n_double},
                       {"n_single", c.n_single},
                       {"latent_w", c.latent_w},
                       {"latent_h", c.latent_h},
                       {"pixel_channels", c.pixel_channels},
                       {"spatial_factor", c.spatial_factor},
                       {"f_seg", c.f_seg},
                       {"text_vocab", c.text_vocab},
                       {"text_len", c.text_len},
                       {"d_audio", c.d_audio},
                       {"mlp_ratio", c.mlp_ratio},
                       {"mechanism", mechanism_name(c.mechanism)},
                       {"faa_double", c.faa_double},
                       {"faa_single", c.faa_single},
                       {"aem_in_single", c.aem_in_single}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
    j.at("d_model").get_to(c.d_model);
    j.at("n_heads").get_to(c.n_heads);
    j.at("n_double").get_to(c.n_double);
    j.at("n_single").get_to(c.n_single);
    j.at("latent_w").get_to(c.latent_w);
    j.at("latent_h").get_to(c.latent_h);
    j.at("pixel_channels").get_to(c.pixel_channels);
    j.at("spatial_factor").get_to(c.spatial_factor);
    j.at("f_seg").get_to(c.f_seg);
    j.at("text_vocab").get_to(c.text_vocab);
    j.at("text_len").get_to(c.text_len);
    j.at("d_audio").get_to(c.d_audio);
    j.at("mlp_ratio").get_to(c.mlp_ratio);
    c.mechanism = parse_mechanism(j.at("mechanism").get<std::string>());
    j.at("faa_double").get_to(c.faa_double);
    j.at("faa_single").get_to(c.faa_single);
    c.aem_in_single = j.value("aem_in_single", false);
}

// One transformer stream: pre-LN attention projections, MLP, and the
// timestep modulation producing (shift, scale) pairs for both sublayers.
template <typename T>
struct StreamBlock {
    AttnProj<T> attn;
    Var<T> mlp_w1 = nullptr, mlp_b1 = nullptr, mlp_w2 = nullptr, mlp_b2 = nullptr;
    Var<T> mod_w = nullptr, mod_b = nullptr; // d -> 4d: shift1, scale1, shift2, scale2
};

template <typename T>
struct DoubleBlockParams {
    StreamBlock<T> video, text;
    std::optional<FaaParams<T>> faa;
    std::optional<AemParams<T>> aem;
};

template <typename T>
struct SingleBlockParams {
    StreamBlock<T> stream;
    std::optional<FaaParams<T>> faa;
    std::optional<AemParams<T>> aem; // test fixture path only
};

template <typename T>
struct Model {
    ModelConfig cfg;
    ParamStore<T> params;
    InjectionModule<T> injection;
    Var<T> text_table = nullptr;
    Var<T> t_fc1_w = nullptr, t_fc1_b = nullptr, t_fc2_w = nullptr, t_fc2_b = nullptr;
    Var<T> head_mod_w = nullptr, head_mod_b = nullptr; // d -> 2d: shift, scale
    Var<T> head_w = nullptr, head_b = nullptr;
    std::vector<DoubleBlockParams<T>> double_blocks;
    std::vector<SingleBlockParams<T>> single_blocks;
    RotaryTable rope_table;

    std::vector<std::string> param_names() const {
        std::vector<std::string> names;
        for (std::size_t i = 0; i < params.size(); ++i) names.push_back(params.at(i).name);
        return names;
    }
    std::size_t param_count() const { return params.total_values(); }
};

namespace detail {

template <typename T>
StreamBlock<T> make_stream_block(ParamStore<T>& ps, const std::string& prefix,
                                 const ModelConfig& cfg, SeededRng& rng) {
    StreamBlock<T> b;
    std::size_t d = cfg.d_model, hidden = cfg.mlp_ratio * d;
    b.attn = make_attn_proj(ps, prefix + ".attn", d, d, cfg.n_heads, rng);
    b.mlp_w1 = ps.create(prefix + ".mlp.w1", init_linear_weight<T>(d, hidden, rng));
    b.mlp_b1 = ps.create(prefix + ".mlp.b1", Tensor<T>(Shape{hidden}));
    b.mlp_w2 = ps.create(prefix + ".mlp.w2", init_linear_weight<T>(hidden, d, rng));
    b.mlp_b2 = ps.create(prefix + ".mlp.b2", Tensor<T>(Shape{d}));
    // Zero-init so every block starts as plain pre-LN residual.
    b.mod_w = ps.create(prefix + ".mod.w", Tensor<T>(Shape{d, 4 * d}));
    b.mod_b = ps.create(prefix + ".mod.b", Tensor<T>(Shape{4 * d}));
    return b;
}

template <typename T>
StreamBlock<T> find_stream_block(ParamStore<T>& ps, const std::string& prefix,
                                 const ModelConfig& cfg) {
    StreamBlock<T> b;
    b.attn = find_attn_proj(ps, prefix + ".attn", cfg.n_heads);
    b.mlp_w1 = ps.find(prefix + ".mlp.w1")->var();
    b.mlp_b1 = ps.find(prefix + ".mlp.b1")->var();
    b.mlp_w2 = ps.find(prefix + ".mlp.w2")->var();
    b.mlp_b2 = ps.find(prefix + ".mlp.b2")->var();
    b.mod_w = ps.find(prefix + ".mod.w")->var();
    b.mod_b = ps.find(prefix + ".mod.b")->var();
    return b;
}

} // namespace detail

template <typename T>
Model<T> build_model(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Model<T> m;
    m.cfg = cfg;
    m.rope_table = RotaryTable::make(cfg.d_head());
    SeededRng rng(seed);
    std::size_t d = cfg.d_model, c = cfg.latent_c();

    m.injection = make_injection_module<T>(m.params, cfg.mechanism, c, d, rng);
    m.text_table = m.params.create("text_emb.table", init_linear_weight<T>(cfg.text_vocab, d, rng));
    m.t_fc1_w = m.params.create("t_embed.fc1.w", init_linear_weight<T>(d, d, rng));
    m.t_fc1_b = m.params.create("t_embed.fc1.b", Tensor<T>(Shape{d}));
    m.t_fc2_w = m.params.create("t_embed.fc2.w", init_linear_weight<T>(d, d, rng));
    m.t_fc2_b = m.params.create("t_embed.fc2.b", Tensor<T>(Shape{d}));

    for (std::size_t i = 0; i < cfg.n_double; ++i) {
        std::string p = "double." + std::to_string(i);
        DoubleBlockParams<T> blk;
        blk.video = detail::make_stream_block<T>(m.params, p + ".video", cfg, rng);
        blk.text = detail::make_stream_block<T>(m.params, p + ".text", cfg, rng);
        if (cfg.faa_double)
            blk.faa = make_faa_params<T>(m.params, p + ".faa", d, cfg.d_audio, cfg.n_heads, rng);
        blk.aem = make_aem_params<T>(m.params, p + ".aem", d, c, cfg.n_heads, rng);
        m.double_blocks.push_back(std::move(blk));
    }
    for (std::size_t i = 0; i < cfg.n_single; ++i) {
        std::string p = "single." + std::to_string(i);
        SingleBlockParams<T> blk;
        blk.stream = detail::make_stream_block<T>(m.params, p, cfg, rng);
        if (cfg.faa_single)
            blk.faa = make_faa_params<T>(m.params, p + ".faa", d, cfg.d_audio, cfg.n_heads, rng);
        if (cfg.aem_in_single)
            blk.aem = make_aem_params<T>(m.params, p + ".aem", d, c, cfg.n_heads, rng);
        m.single_blocks.push_back(std::move(blk));
    }

    // Zero-initialized output projection: a fresh model predicts zero velocity.
    m.head_mod_w = m.params.create("head.mod.w", Tensor<T>(Shape{d, 2 * d}));
    m.head_mod_b = m.params.create("head.mod.b", Tensor<T>(Shape{2 * d}));
    m.head_w = m.params.create("head.w", Tensor<T>(Shape{d, c}));
    m.head_b = m.params.create("head.b", Tensor<T>(Shape{c}));
    return m;
}

// Analytic parameter census for a config; must equal the built store.
inline std::size_t expected_param_count(const ModelConfig& cfg) {
    std::size_t d = cfg.d_model, c = cfg.latent_c(), r = cfg.mlp_ratio;
    std::size_t attn = 4 * (d * d + d);
    std::size_t stream = attn + (d * r * d + r * d) + (r * d * d + d) + (d * 4 * d + 4 * d);
    std::size_t faa = 1 + (cfg.d_audio * d + d) + attn;
    std::size_t aem = 1 + (c * d + d) + attn;
    std::size_t inj = 0;
    switch (cfg.mechanism) {
        case InjectionMechanism::TokenConcat: inj = c * d + d; break;
        case InjectionMechanism::TokenChannel: inj = (2 * c * d + d) + (c * d + d); break;
        case InjectionMechanism::TokenAdd: inj = 2 * (c * d + d) + (d * d + d); break;
    }
    std::size_t total = inj;
    total += cfg.text_vocab * d;          // text embedding
    total += 2 * (d * d + d);             // timestep MLP
    total += cfg.n_double * (2 * stream + aem + (cfg.faa_double ? faa : 0));
    total += cfg.n_single * (stream + (cfg.faa_single ? faa : 0) +
                             (cfg.aem_in_single ? aem : 0));
    total += d * 2 * d + 2 * d;           // head modulation
    total += d * c + c;                   // output head
    return total;
}

// Everything the velocity network is conditioned on for one model call.
template <typename T>
struct ConditioningBundle {
    Tensor<T> ref_latent;     // [w,h,c]
    Tensor<T> aligned_audio;  // [f,40,d_audio]
    Tensor<T> mask_grid;      // [f,w,h] binary, frame 0 all ones
    Tensor<T> emotion_tokens; // [w*h,c] or empty when absent
    std::vector<int> text_ids;
    double t = 0.0;
};

namespace detail {

template <typename T>
Tensor<T> sinusoidal_timestep(double t, std::size_t d) {
    std::size_t half = d / 2;
    Tensor<T> out(Shape{1, d});
    for (std::size_t k = 0; k < half; ++k) {
        double freq = std::pow(10000.0, -double(k) / double(half));
        double arg = 1000.0 * t * freq;
        out[k] = T(std::sin(arg));
        out[half + k] = T(std::cos(arg));
    }
    return out;
}

// Four [d] conditioning vectors from the block's modulation head.
template <typename T>
std::array<Var<T>, 4> block_modulation(Tape<T>& g, Var<T> t_emb, const StreamBlock<T>& b,
                                       std::size_t d) {
    Var<T> mod = g.reshape(g.linear(t_emb, b.mod_w, b.mod_b), Shape{4, d});
    return {g.reshape(g.slice0(mod, 0, 1), Shape{d}), g.reshape(g.slice0(mod, 1, 1), Shape{d}),
            g.reshape(g.slice0(mod, 2, 1), Shape{d}), g.reshape(g.slice0(mod, 3, 1), Shape{d})};
}

template <typename T>
Var<T> mlp_forward(Tape<T>& g, Var<T> x, const StreamBlock<T>& b) {
    return g.linear(g.silu(g.linear(x, b.mlp_w1, b.mlp_b1)), b.mlp_w2, b.mlp_b2);
}

} // namespace detail

template <typename T>
struct ForwardResult {
    Var<T> velocity_rows = nullptr; // [f*S, c] in token order
    std::size_t frames = 0;
};

// Full conditioned forward pass. z is the latent segment including the
// identity frame; the returned velocity covers the same frames (reference
// tokens and text are consumed internally, never returned).
template <typename T>
ForwardResult<T> forward(Model<T>& m, Tape<T>& g, const Tensor<T>& z,
                         const ConditioningBundle<T>& cond) {
    const ModelConfig& cfg = m.cfg;
    if (z.rank() != 4 || z.extent(1) != cfg.latent_w || z.extent(2) != cfg.latent_h ||
        z.extent(3) != cfg.latent_c())
        throw ShapeError("forward: latent extents do not match config");
    std::size_t f = z.extent(0);
    std::size_t s = cfg.spatial_tokens();
    std::size_t d = cfg.d_model;
    if (cond.aligned_audio.rank() != 3 || cond.aligned_audio.extent(0) != f ||
        cond.aligned_audio.extent(1) != kAudioTokensPerLatentFrame ||
        cond.aligned_audio.extent(2) != cfg.d_audio)
        throw ShapeError("forward: aligned audio extents mismatch");
    if (cond.mask_grid.rank() != 3 || cond.mask_grid.extent(0) != f ||
        cond.mask_grid.extent(1) != cfg.latent_w || cond.mask_grid.extent(2) != cfg.latent_h)
        throw ShapeError("forward: mask extents mismatch");
    if (cond.text_ids.size() != cfg.text_len)
        throw ShapeError("forward: text length mismatch");
    if (cond.t < 0.0 || cond.t > 1.0) throw ShapeError("forward: t must lie in [0,1]");
    bool has_emotion = cond.emotion_tokens.numel() > 0;

    // Injection: video tokens for all f frames plus the appended ref block.
    TokenSequence<T> seq = inject(g, m.injection, cond.ref_latent, z);
    std::size_t video_rows = seq.video_tokens; // f * s
    std::size_t ref_rows = seq.ref_tokens;     // s
    std::size_t tv = video_rows + ref_rows;
    std::size_t tt = cfg.text_len;

    RopeRows<T> vid_rope = precompute_rope_rows<T>(seq.positions, m.rope_table, cfg.n_heads);

    // Merged-phase rope rows: video positions plus identity rotation for text.
    std::size_t half = d / 2;
    Tensor<T> mcos(Shape{tv + tt, half}), msin(Shape{tv + tt, half});
    std::copy_n(vid_rope.cos_t.data(), tv * half, mcos.data());
    std::copy_n(vid_rope.sin_t.data(), tv * half, msin.data());
    for (std::size_t r = tv; r < tv + tt; ++r)
        for (std::size_t p = 0; p < half; ++p) {
            mcos[r * half + p] = T(1);
            msin[r * half + p] = T(0);
        }

    Tensor<T> mask_rows(Shape{video_rows});
    {
        std::size_t idx = 0;
        for (std::size_t l = 0; l < f; ++l)
            for (std::size_t j = 0; j < cfg.latent_h; ++j)
                for (std::size_t i = 0; i < cfg.latent_w; ++i, ++idx)
                    mask_rows[idx] = cond.mask_grid.at3(l, i, j);
    }

    Var<T> t_emb = g.linear(
        g.silu(g.linear(g.constant(detail::sinusoidal_timestep<T>(cond.t, d)), m.t_fc1_w,
                        m.t_fc1_b)),
        m.t_fc2_w, m.t_fc2_b);

    Var<T> audio_in = g.constant(cond.aligned_audio);
    Var<T> x_v = seq.tokens;
    Var<T> x_t = g.embedding(m.text_table, cond.text_ids);

    for (DoubleBlockParams<T>& blk : m.double_blocks) {
        auto mv = detail::block_modulation(g, t_emb, blk.video, d);
        auto mt = detail::block_modulation(g, t_emb, blk.text, d);
        Var<T> av = g.modulate(g.layernorm_last(x_v), mv[1], mv[0]);
        Var<T> at = g.modulate(g.layernorm_last(x_t), mt[1], mt[0]);

        Var<T> qv = g.rotate_pairs(g.linear(av, blk.video.attn.wq, blk.video.attn.bq),
                                   vid_rope.cos_t, vid_rope.sin_t);
        Var<T> kv = g.rotate_pairs(g.linear(av, blk.video.attn.wk, blk.video.attn.bk),
                                   vid_rope.cos_t, vid_rope.sin_t);
        Var<T> vv = g.linear(av, blk.video.attn.wv, blk.video.attn.bv);
        Var<T> qt = g.linear(at, blk.text.attn.wq, blk.text.attn.bq);
        Var<T> kt = g.linear(at, blk.text.attn.wk, blk.text.attn.bk);
        Var<T> vt = g.linear(at, blk.text.attn.wv, blk.text.attn.bv);

        Var<T> q = g.reshape(g.concat0({qv, qt}), Shape{1, tv + tt, d});
        Var<T> k = g.reshape(g.concat0({kv, kt}), Shape{1, tv + tt, d});
        Var<T> v = g.reshape(g.concat0({vv, vt}), Shape{1, tv + tt, d});
        Var<T> att = g.reshape(attend(g, q, k, v, cfg.n_heads), Shape{tv + tt, d});
        Var<T> att_v = g.slice0(att, 0, tv);
        Var<T> att_t = g.slice0(att, tv, tt);
        x_v = g.add(x_v, g.linear(att_v, blk.video.attn.wo, blk.video.attn.bo));
        x_t = g.add(x_t, g.linear(att_t, blk.text.attn.wo, blk.text.attn.bo));

        if (blk.faa || (blk.aem && has_emotion)) {
            Var<T> vid = g.slice0(x_v, 0, video_rows);
            Var<T> refb = g.slice0(x_v, video_rows, ref_rows);
            if (blk.faa) vid = faa_apply(g, vid, audio_in, mask_rows, *blk.faa, f, s);
            if (blk.aem && has_emotion)
                vid = aem_apply(g, vid, cond.emotion_tokens, *blk.aem, f, s);
            x_v = g.concat0({vid, refb});
        }

        x_v = g.add(x_v, detail::mlp_forward(g, g.modulate(g.layernorm_last(x_v), mv[3], mv[2]),
                                             blk.video));
        x_t = g.add(x_t, detail::mlp_forward(g, g.modulate(g.layernorm_last(x_t), mt[3], mt[2]),
                                             blk.text));
    }

    Var<T> x = g.concat0({x_v, x_t});
    for (SingleBlockParams<T>& blk : m.single_blocks) {
        auto ms = detail::block_modulation(g, t_emb, blk.stream, d);
        Var<T> a = g.modulate(g.layernorm_last(x), ms[1], ms[0]);
        Var<T> q = g.rotate_pairs(g.linear(a, blk.stream.attn.wq, blk.stream.attn.bq), mcos, msin);
        Var<T> k = g.rotate_pairs(g.linear(a, blk.stream.attn.wk, blk.stream.attn.bk), mcos, msin);
        Var<T> v = g.linear(a, blk.stream.attn.wv, blk.stream.attn.bv);
        Var<T> att = g.reshape(attend(g, g.reshape(q, Shape{1, tv + tt, d}),
                                      g.reshape(k, Shape{1, tv + tt, d}),
                                      g.reshape(v, Shape{1, tv + tt, d}), cfg.n_heads),
                               Shape{tv + tt, d});
        x = g.add(x, g.linear(att, blk.stream.attn.wo, blk.stream.attn.bo));

        if (blk.faa || (blk.aem && has_emotion)) {
            Var<T> vid = g.slice0(x, 0, video_rows);
            Var<T> rest = g.slice0(x, video_rows, ref_rows + tt);
            if (blk.faa) vid = faa_apply(g, vid, audio_in, mask_rows, *blk.faa, f, s);
            if (blk.aem && has_emotion)
                vid = aem_apply(g, vid, cond.emotion_tokens, *blk.aem, f, s);
            x = g.concat0({vid, rest});
        }
        x = g.add(x, detail::mlp_forward(g, g.modulate(g.layernorm_last(x), ms[3], ms[2]),
                                         blk.stream));
    }

    Var<T> vid_final = g.slice0(x, 0, video_rows);
    Var<T> hmod = g.reshape(g.linear(t_emb, m.head_mod_w, m.head_mod_b), Shape{2, d});
    Var<T> hshift = g.reshape(g.slice0(hmod, 0, 1), Shape{d});
    Var<T> hscale = g.reshape(g.slice0(hmod, 1, 1), Shape{d});
    ForwardResult<T> out;
    out.velocity_rows = g.linear(
        g.modulate(g.layernorm_last(vid_final), hscale, hshift), m.head_w, m.head_b);
    out.frames = f;
    return out;
}

// velocity rows [f*S, c] back to a latent-shaped tensor.
template <typename T>
Tensor<T> velocity_to_latent(const Tensor<T>& rows, const ModelConfig& cfg, std::size_t frames) {
    return rows_to_latent(rows, frames, cfg.latent_w, cfg.latent_h);
}

inline PlacementReport placement_check(const std::vector<std::string>& names,
                                       std::size_t n_double) {
    return check_aem_placement(names, n_double);
}

// ============================================================================
// Checkpoints
// ============================================================================

struct CheckpointMeta {
    ModelConfig config;
    std::string optimizer = "adam";
    std::size_t step = 0;
    std::uint64_t seed = 0;
    std::string config_hash;
};

inline void to_json(nlohmann::json& j, const CheckpointMeta& m) {
    j = nlohmann::json{{"config", m.config},
                       {"optimizer", m.optimizer},
                       {"step", m.step},
                       {"seed", m.seed},
                       {"config_hash", m.config_hash},
                       {"faa_placement", m.config.faa_single ? "double+single" : "double"},
                       {"aem_placement", "double_only, post-attention pre-mlp, after faa"}};
}

inline void from_json(const nlohmann::json& j, CheckpointMeta& m) {
    j.at("config").get_to(m.config);
    j.at("optimizer").get_to(m.optimizer);
    j.at("step").get_to(m.step);
    j.at("seed").get_to(m.seed);
    j.at("config_hash").get_to(m.config_hash);
}

template <typename T>
void save_checkpoint(const std::string& path, Model<T>& model, const CheckpointMeta& meta,
                     const AdamOptimizer<T>* adam = nullptr) {
    Container c;
    nlohmann::json j = meta;
    if (adam) j["adam_t"] = adam->t;
    c.add_bytes("__meta__", j.dump());
    for (std::size_t i = 0; i < model.params.size(); ++i) {
        Parameter<T>& p = model.params.at(i);
        c.add_f32("param/" + p.name, p.value().template cast<float>());
    }
    if (adam && adam->m.size() == model.params.size()) {
        for (std::size_t i = 0; i < model.params.size(); ++i) {
            c.add_f32("opt/m/" + model.params.at(i).name, adam->m[i].template cast<float>());
            c.add_f32("opt/v/" + model.params.at(i).name, adam->v[i].template cast<float>());
        }
    }
    c.save(path);
}

template <typename T>
struct LoadedCheckpoint {
    Model<T> model;
    CheckpointMeta meta;
    AdamOptimizer<T> adam; // state restored when present in the file
    bool has_adam_state = false;
};

template <typename T>
LoadedCheckpoint<T> load_checkpoint(const std::string& path) {
    Container c = Container::load(path);
    nlohmann::json j = nlohmann::json::parse(c.get_bytes("__meta__"));
    LoadedCheckpoint<T> out;
    out.meta = j.get<CheckpointMeta>();
    out.model = build_model<T>(out.meta.config, out.meta.seed);
    for (std::size_t i = 0; i < out.model.params.size(); ++i) {
        Parameter<T>& p = out.model.params.at(i);
        Tensor<float> v = c.get_f32("param/" + p.name);
        if (v.shape() != p.value().shape())
            throw IoError("checkpoint shape mismatch for " + p.name);
        p.value() = v.template cast<T>();
    }
    if (j.contains("adam_t")) {
        out.adam.t = j["adam_t"].get<std::size_t>();
        out.adam.ensure_state(out.model.params);
        for (std::size_t i = 0; i < out.model.params.size(); ++i) {
            const std::string& n = out.model.params.at(i).name;
            if (c.has("opt/m/" + n)) {
                out.adam.m[i] = c.get_f32("opt/m/" + n).template cast<T>();
                out.adam.v[i] = c.get_f32("opt/v/" + n).template cast<T>();
                out.has_adam_state = true;
            }
        }
    }
    return out;
}

} // namespace avdt
