#pragma once

#include <cmath>

#include "avdt/autodiff.hpp"
#include "avdt/rng.hpp"

namespace avdt {

// Projection weights for one attention site (shared across heads).
template <typename T>
struct AttnProj {
    Var<T> wq, bq, wk, bk, wv, bv, wo, bo;
    std::size_t n_heads = 1;
};

// Scaled dot-product attention core on pre-projected tensors.
// q [B,Tq,d], k [B,Tk,d], v [B,Tk,d] -> [B,Tq,d]; d split across heads.
template <typename T>
Var<T> attend(Tape<T>& g, Var<T> q, Var<T> k, Var<T> v, std::size_t heads) {
    std::size_t d = q->value.shape().back();
    if (d % heads != 0) throw ShapeError("attend: d_model not divisible by heads");
    T scale = T(1) / std::sqrt(T(d / heads));
    Var<T> qh = g.split_heads(q, heads);
    Var<T> kh = g.split_heads(k, heads);
    Var<T> vh = g.split_heads(v, heads);
    Var<T> scores = g.scale(g.bmm(qh, kh, /*trans_b=*/true), scale);
    Var<T> att = g.softmax_last(scores);
    Var<T> ctx = g.bmm(att, vh);
    return g.merge_heads(ctx, heads);
}

// Cross-attention with projections: queries from q_tokens [B,Tq,d_model],
// keys/values from kv_tokens [B,Tk,d_model], output projected back.
template <typename T>
Var<T> cross_attention_batched(Tape<T>& g, Var<T> q_tokens, Var<T> kv_tokens,
                               const AttnProj<T>& p) {
    std::size_t B = q_tokens->value.extent(0);
    std::size_t tq = q_tokens->value.extent(1);
    std::size_t tk = kv_tokens->value.extent(1);
    std::size_t d = q_tokens->value.shape().back();
    Var<T> q2 = g.reshape(q_tokens, Shape{B * tq, d});
    Var<T> kv2 = g.reshape(kv_tokens, Shape{B * tk, kv_tokens->value.shape().back()});
    Var<T> q = g.reshape(g.linear(q2, p.wq, p.bq), Shape{B, tq, d});
    Var<T> k = g.reshape(g.linear(kv2, p.wk, p.bk), Shape{B, tk, d});
    Var<T> v = g.reshape(g.linear(kv2, p.wv, p.bv), Shape{B, tk, d});
    Var<T> ctx = attend(g, q, k, v, p.n_heads);
    Var<T> out = g.linear(g.reshape(ctx, Shape{B * tq, d}), p.wo, p.bo);
    return g.reshape(out, Shape{B, tq, d});
}

// Single-sequence convenience form: q_tokens [Tq,d], kv_tokens [Tk,d].
template <typename T>
Var<T> cross_attention(Tape<T>& g, Var<T> q_tokens, Var<T> kv_tokens, const AttnProj<T>& p) {
    std::size_t tq = q_tokens->value.extent(0);
    std::size_t tk = kv_tokens->value.extent(0);
    std::size_t d = q_tokens->value.shape().back();
    Var<T> q3 = g.reshape(q_tokens, Shape{1, tq, d});
    Var<T> kv3 = g.reshape(kv_tokens, Shape{1, tk, kv_tokens->value.shape().back()});
    Var<T> out = cross_attention_batched(g, q3, kv3, p);
    return g.reshape(out, Shape{tq, d});
}

// Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) weight init.
template <typename T>
Tensor<T> init_linear_weight(std::size_t fan_in, std::size_t fan_out, SeededRng& rng) {
    Tensor<T> w(Shape{fan_in, fan_out});
    double a = 1.0 / std::sqrt(double(fan_in));
    rng.fill_uniform(w, -a, a);
    return w;
}

template <typename T>
AttnProj<T> make_attn_proj(ParamStore<T>& ps, const std::string& prefix, std::size_t d_model,
                           std::size_t kv_dim, std::size_t heads, SeededRng& rng) {
    AttnProj<T> p;
    p.n_heads = heads;
    p.wq = ps.create(prefix + ".wq", init_linear_weight<T>(d_model, d_model, rng));
    p.bq = ps.create(prefix + ".bq", Tensor<T>(Shape{d_model}));
    p.wk = ps.create(prefix + ".wk", init_linear_weight<T>(kv_dim, d_model, rng));
    p.bk = ps.create(prefix + ".bk", Tensor<T>(Shape{d_model}));
    p.wv = ps.create(prefix + ".wv", init_linear_weight<T>(kv_dim, d_model, rng));
    p.bv = ps.create(prefix + ".bv", Tensor<T>(Shape{d_model}));
    p.wo = ps.create(prefix + ".wo", init_linear_weight<T>(d_model, d_model, rng));
    p.bo = ps.create(prefix + ".bo", Tensor<T>(Shape{d_model}));
    return p;
}

// Rebind an AttnProj view onto an existing store (after checkpoint load).
template <typename T>
AttnProj<T> find_attn_proj(ParamStore<T>& ps, const std::string& prefix, std::size_t heads) {
    AttnProj<T> p;
    p.n_heads = heads;
    p.wq = ps.find(prefix + ".wq")->var();
    p.bq = ps.find(prefix + ".bq")->var();
    p.wk = ps.find(prefix + ".wk")->var();
    p.bk = ps.find(prefix + ".bk")->var();
    p.wv = ps.find(prefix + ".wv")->var();
    p.bv = ps.find(prefix + ".bv")->var();
    p.wo = ps.find(prefix + ".wo")->var();
    p.bo = ps.find(prefix + ".bo")->var();
    return p;
}

} // namespace avdt
