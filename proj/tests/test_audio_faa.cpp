#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "avdt/audio_features.hpp"
#include "avdt/faa.hpp"
#include "avdt/rng.hpp"
#include "test_helpers.hpp"

using namespace avdt;
using avdt::testing::fd_check;

namespace {
WavData sine_wav(double hz, double amp, std::size_t samples, std::uint32_t rate = 16000) {
    WavData w;
    w.sample_rate = rate;
    w.samples.resize(samples);
    for (std::size_t i = 0; i < samples; ++i)
        w.samples[i] = float(amp * std::sin(2.0 * M_PI * hz * double(i) / double(rate)));
    return w;
}
} // namespace

TEST_CASE("audio feature extraction") {
    AudioFeatureConfig cfg;
    cfg.d_audio = 4;
    SECTION("silence gives the log-floor constant everywhere") {
        WavData w;
        w.sample_rate = 16000;
        w.samples.assign(640 * 3, 0.0f);
        Tensor<float> f = extract_audio_features(w, 3, cfg);
        REQUIRE(f.shape() == Shape{3, 10, 4});
        auto floor_v = float(std::log(kLogFloor));
        for (std::size_t i = 0; i < f.numel(); ++i) REQUIRE(f[i] == floor_v);
    }
    SECTION("determinism") {
        WavData w = sine_wav(440.0, 0.5, 640 * 4);
        Tensor<float> a = extract_audio_features(w, 4, cfg);
        Tensor<float> b = extract_audio_features(w, 4, cfg);
        REQUIRE(a.vec() == b.vec());
    }
    SECTION("pure tone at a band center peaks in that band in every frame") {
        double hz = band_center_hz(3, 16000);
        WavData w = sine_wav(hz, 0.6, 640 * 5);
        Tensor<float> f = extract_audio_features(w, 5, cfg);
        for (std::size_t t = 0; t < 5; ++t) {
            float best = f.at3(t, 3, 0);
            for (std::size_t b = 0; b < 10; ++b)
                if (b != 3) REQUIRE(best > f.at3(t, b, 0));
        }
    }
    SECTION("audio too short is an error") {
        WavData w = sine_wav(200.0, 0.3, 100);
        REQUIRE_THROWS_AS(extract_audio_features(w, 3, cfg), ShapeError);
    }
}

TEST_CASE("align_audio arithmetic") {
    auto features = [](std::size_t n) {
        Tensor<float> f(Shape{n, 10, 3});
        for (std::size_t i = 0; i < f.numel(); ++i) f[i] = float(i % 97) * 0.01f;
        return f;
    };
    SECTION("n'=8 -> (4,40,d)") {
        Tensor<float> out = align_audio(features(8), 8);
        REQUIRE(out.shape() == Shape{4, 40, 3});
    }
    SECTION("n'=129 -> (34,40,d) with pad 7") {
        Tensor<float> out = align_audio(features(129), 129);
        REQUIRE(out.shape() == Shape{34, 40, 3});
    }
    SECTION("n'=1 -> (2,40,d)") {
        Tensor<float> out = align_audio(features(1), 1);
        REQUIRE(out.shape() == Shape{2, 40, 3});
    }
    SECTION("output frame extent is floor(n'/4)+2 for all n' in [1,200]") {
        for (std::size_t n = 1; n <= 200; ++n) {
            Tensor<float> out = align_audio(features(n), n);
            REQUIRE(out.extent(0) == n / 4 + 2);
            REQUIRE(out.extent(1) == 40);
        }
    }
    SECTION("padding replicates frame 0 (edge padding, not zeros)") {
        Tensor<float> f(Shape{5, 10, 1});
        for (std::size_t t = 0; t < 5; ++t)
            for (std::size_t b = 0; b < 10; ++b) f.at3(t, b, 0) = float(t + 1);
        Tensor<float> out = align_audio(f, 5); // n=2, total 12, pad 7
        // group 0 (identity frame): all four source frames are frame 0
        for (std::size_t tok = 0; tok < 40; ++tok) REQUIRE(out.at3(0, tok, 0) == 1.0f);
        // last group ends with the last real frame
        REQUIRE(out.at3(2, 39, 0) == 5.0f);
    }
}

namespace {
struct FaaFixture {
    ParamStore<float> ps;
    FaaParams<float> params;
    std::size_t frames = 4, w = 2, h = 2, d = 8, d_a = 3;

    FaaFixture(std::uint64_t seed) {
        SeededRng rng(seed);
        params = make_faa_params<float>(ps, "faa", d, d_a, 2, rng);
    }

    Tensor<float> random_tokens(std::uint64_t seed) const {
        SeededRng rng(seed);
        Tensor<float> t(Shape{frames * w * h, d});
        rng.fill_normal(t, 0.0, 0.5);
        return t;
    }
    Tensor<float> random_audio(std::uint64_t seed) const {
        SeededRng rng(seed);
        Tensor<float> t(Shape{frames, 40, d_a});
        rng.fill_normal(t, 0.0, 0.5);
        return t;
    }
};
} // namespace

TEST_CASE("faa_apply") {
    FaaFixture fx(1000);
    Tensor<float> y = fx.random_tokens(1);
    Tensor<float> audio = fx.random_audio(2);
    Tensor<float> mask(Shape{fx.frames * fx.w * fx.h}, 1.0f);

    SECTION("alpha = 0 is the exact identity") {
        fx.params.alpha->value[0] = 0.0f;
        Tape<float> g;
        Var<float> out = faa_apply(g, g.input(y), g.constant(audio), mask, fx.params, fx.frames,
                                   fx.w * fx.h);
        REQUIRE(out->value.vec() == y.vec());
    }

    SECTION("masked-off cells are exactly unchanged under any audio") {
        SeededRng rng(77);
        Tensor<float> m2(Shape{fx.frames * fx.w * fx.h});
        for (auto& v : m2.vec()) v = rng.next_double() < 0.5 ? 1.0f : 0.0f;
        Tape<float> g;
        Var<float> out_a = faa_apply(g, g.input(y), g.constant(audio), m2, fx.params, fx.frames,
                                     fx.w * fx.h);
        Tensor<float> audio_b = fx.random_audio(3);
        Var<float> out_b = faa_apply(g, g.input(y), g.constant(audio_b), m2, fx.params, fx.frames,
                                     fx.w * fx.h);
        bool some_gated_changed = false;
        for (std::size_t t = 0; t < fx.frames * fx.w * fx.h; ++t)
            for (std::size_t j = 0; j < fx.d; ++j) {
                if (m2[t] == 0.0f) {
                    REQUIRE(out_a->value.at2(t, j) == y.at2(t, j));
                    REQUIRE(out_b->value.at2(t, j) == y.at2(t, j));
                } else if (out_a->value.at2(t, j) != out_b->value.at2(t, j)) {
                    some_gated_changed = true;
                }
            }
        REQUIRE(some_gated_changed);
    }

    SECTION("temporal isolation: audio perturbation at frame k moves only frame k") {
        SeededRng rng(88);
        for (int trial = 0; trial < 5; ++trial) {
            std::size_t k = rng.next_below(fx.frames);
            Tensor<float> audio_b = audio;
            for (std::size_t tok = 0; tok < 40; ++tok)
                for (std::size_t m = 0; m < fx.d_a; ++m)
                    audio_b.at3(k, tok, m) += float(rng.next_uniform(0.1, 0.5));
            Tape<float> g;
            Var<float> out_a = faa_apply(g, g.input(y), g.constant(audio), mask, fx.params,
                                         fx.frames, fx.w * fx.h);
            Var<float> out_b = faa_apply(g, g.input(y), g.constant(audio_b), mask, fx.params,
                                         fx.frames, fx.w * fx.h);
            std::size_t s = fx.w * fx.h;
            bool frame_k_changed = false;
            for (std::size_t t = 0; t < fx.frames * s; ++t)
                for (std::size_t j = 0; j < fx.d; ++j) {
                    bool same = out_a->value.at2(t, j) == out_b->value.at2(t, j);
                    if (t / s == k) {
                        if (!same) frame_k_changed = true;
                    } else {
                        REQUIRE(same);
                    }
                }
            REQUIRE(frame_k_changed);
        }
    }

    SECTION("gradients flow to alpha, projections and audio features") {
        ParamStore<double> ps;
        SeededRng rng(1234);
        FaaParams<double> p = make_faa_params<double>(ps, "faa", 8, 3, 2, rng);
        Var<double> yv = ps.create("y", Tensor<double>(Shape{16, 8}));
        Var<double> av = ps.create("audio", Tensor<double>(Shape{4, 40, 3}));
        SeededRng data(55);
        data.fill_normal(yv->value, 0.0, 0.5);
        data.fill_normal(av->value, 0.0, 0.5);
        Tensor<double> m(Shape{16}, 1.0);
        auto r = fd_check(
            [&](Tape<double>& g) {
                return g.mean_all(g.square(faa_apply(g, yv, av, m, p, 4, 4)));
            },
            {yv, av, p.alpha, p.adapter_w, p.attn.wq, p.attn.wv, p.attn.wo},
            1e-5, 6);
        REQUIRE(r.max_rel_err < 1e-4);
        // nonzero gradients for generic inputs
        REQUIRE(std::abs(p.alpha->grad[0]) > 1e-12);
    }

    SECTION("mask extent mismatch rejected") {
        Tensor<float> bad(Shape{3}, 1.0f);
        Tape<float> g;
        REQUIRE_THROWS_AS(
            faa_apply(g, g.input(y), g.constant(audio), bad, fx.params, fx.frames, fx.w * fx.h),
            ShapeError);
    }
}
